import math

import numpy as np
import pytest

import rfrl


def small_config():
    cfg = rfrl.Config()
    for key, value in [
        ("model.n_stages", "2"),
        ("model.stem_channels", "2"),
        ("model.stage_channels", "3,4"),
        ("model.image_size", "8"),
        ("data.train", "12"),
        ("data.val", "6"),
        ("data.test", "6"),
        ("data.ood", "6"),
        ("train.epochs", "2"),
        ("train.batch_size", "4"),
    ]:
        cfg.set(key, value)
    cfg.validate()
    return cfg


def test_config_round_trip():
    cfg = small_config()
    again = rfrl.Config.from_text(cfg.to_text())
    assert again.to_text() == cfg.to_text()
    assert "optim.lr" in rfrl.Config.keys()


def test_bad_config():
    with pytest.raises(rfrl.ConfigError):
        rfrl.Config().set("model.nope", "1")
    cfg = rfrl.Config()
    cfg.set("model.n_stages", "2")
    with pytest.raises(rfrl.ConfigError, match="stage_channels"):
        cfg.validate()


def test_forward_shapes():
    model = rfrl.Model(small_config(), seed=3)
    x = np.random.default_rng(0).uniform(size=(2, 1, 8, 8)).astype(np.float32)
    out = model.forward(x)
    assert out["logits"].shape == (2, 3)
    np.testing.assert_allclose(out["probs"].sum(axis=1), 1.0, rtol=1e-5)
    assert out["recon"].shape == x.shape
    enc, dec = out["enc_feats"], out["dec_feats"]
    assert len(enc) == len(dec) == 3
    for i, e in enumerate(enc):
        assert dec[len(dec) - 1 - i].shape == e.shape
    assert model.forward(x, with_decoder=False)["recon"] is None


def test_forward_rejects_bad_input():
    model = rfrl.Model(small_config(), seed=3)
    with pytest.raises(rfrl.ShapeError):
        model.forward(np.zeros((1, 1, 4, 4), np.float32))
    with pytest.raises(rfrl.ContractError):
        model.forward(np.full((1, 1, 8, 8), 2.0, np.float32))


def test_losses_sum():
    model = rfrl.Model(small_config(), seed=3)
    x = np.random.default_rng(1).uniform(size=(3, 1, 8, 8)).astype(np.float32)
    parts = model.losses(x, [0, 1, 2])
    assert parts["total"] == pytest.approx(parts["l_sup"] + parts["l_un"] + parts["l_frs"], rel=1e-6)
    only_sup = model.losses(x, [0, 1, 2], unsupervised=False, frs=False)
    assert only_sup["l_un"] == 0.0 and only_sup["l_frs"] == 0.0


def test_metrics_example():
    m = rfrl.metrics(np.array([[40, 10], [5, 45]]))
    assert (m["accuracy"], m["sensitivity"], m["specificity"]) == (0.85, 0.85, 0.85)
    cm = rfrl.confusion([0, 1, 1], [0, 1, 0], 2)
    assert cm.tolist() == [[1, 1], [0, 1]]


def test_synth_is_deterministic():
    a = rfrl.synth(4, seed=7)
    b = rfrl.synth(4, seed=7)
    assert a["images"].shape == (12, 1, 32, 32)
    np.testing.assert_array_equal(a["images"], b["images"])
    assert a["labels"] == [0, 1, 2] * 4
    assert a["images"].min() >= 0.0 and a["images"].max() <= 1.0


def test_gradcheck_passes():
    results = rfrl.gradcheck(seeds=2)
    assert results and all(r["passed"] for r in results), [r for r in results if not r["passed"]]


def test_train_and_cam(tmp_path):
    cfg = small_config()
    model, record = rfrl.train(cfg, str(tmp_path))
    assert len(record["epochs"]) == 2
    assert all(e["lr"] <= 1e-4 for e in record["epochs"])
    assert set(record["metrics"]) == {"train", "val", "test", "ood"}
    assert (tmp_path / "model.ckpt").exists()

    loaded = rfrl.Model.from_checkpoint(str(tmp_path / "model.ckpt"))
    x = rfrl.synth(1, seed=2, image_size=8)["images"][:1]
    np.testing.assert_array_equal(loaded.forward(x)["logits"], model.forward(x)["logits"])

    cam = loaded.class_activation_map(x[0], 1, stage="n-1", method="campp")
    assert cam.shape == (4, 4)
    assert cam.min() >= 0.0 and cam.max() <= 1.0 + 1e-12
    assert not math.isnan(float(cam.sum()))
