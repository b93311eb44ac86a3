#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace rfrl {

/// counts[t * classes + p]: rows are true classes, columns predictions.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts.at(truth * classes + pred); }
    std::uint64_t total() const;
};

ConfusionMatrix confusion(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                          std::size_t classes);

/// Macro-averaged one-vs-rest metrics. A class whose denominator is zero for
/// a metric is left out of that metric's mean and reported in `warnings`.
struct Metrics {
    double accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    std::vector<std::string> warnings;
};

Metrics metrics(const ConfusionMatrix& cm);

/// "run_id,split,accuracy,sensitivity,specificity"
inline constexpr const char* kMetricsCsvHeader = "run_id,split,accuracy,sensitivity,specificity";
void write_metrics_row(std::ostream& os, const std::string& run_id, const std::string& split, const Metrics& m);

}  // namespace rfrl
