#include "rfrl/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "rfrl/binary_io.hpp"

namespace rfrl {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
    }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    }
    return shape_[axis];
}

template <typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    Tensor out(std::move(shape), data_);
    out.requires_grad_ = requires_grad_;
    return out;
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
    // Non-finite exactly when every exponent bit is set.
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    constexpr Bits mask = static_cast<Bits>(sizeof(T) == 4 ? 0x7F800000ull : 0x7FF0000000000000ull);
    bool bad = false;
    for (T v : data_) {
        Bits b;
        std::memcpy(&b, &v, sizeof b);
        bad |= (b & mask) == mask;
    }
    return !bad;
}

template <typename T>
bool Tensor<T>::identical(const Tensor& other) const noexcept {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0;
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* where) {
    if (!t.all_finite()) throw NumericsError(std::string("non-finite value produced by ") + where);
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write("RFT1", 4);
    io::put_le(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io::put_le(os, static_cast<std::uint32_t>(d));
    io::put_le(os, static_cast<std::uint8_t>(dtype_of<T>()));
    for (T v : t.data()) {
        if constexpr (std::is_same_v<T, float>) {
            io::put_f32(os, v);
        } else {
            io::put_f64(os, v);
        }
    }
    if (!os) throw FormatError("failed writing tensor");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "RFT1", 4) != 0) {
        throw FormatError("bad tensor magic (expected RFT1)");
    }
    const auto rank = io::get_le<std::uint32_t>(is);
    if (rank > 16) throw FormatError("tensor rank " + std::to_string(rank) + " too large");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
        d = io::get_le<std::uint32_t>(is);
        if (d == 0) throw FormatError("zero tensor extent");
        numel *= d;
        if (numel > (std::size_t{1} << 32)) throw FormatError("tensor too large");
    }
    const auto tag = io::get_le<std::uint8_t>(is);
    if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag));
    std::vector<T> data(numel);
    for (auto& v : data) {
        v = tag == 0 ? static_cast<T>(io::get_f32(is)) : static_cast<T>(io::get_f64(is));
    }
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    try {
        return read_tensor<T>(is);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

template class Tensor<float>;
template class Tensor<double>;

#define RFRL_INSTANTIATE(T)                                              \
    template void require_finite<T>(const Tensor<T>&, const char*);      \
    template void write_tensor<T>(std::ostream&, const Tensor<T>&);      \
    template Tensor<T> read_tensor<T>(std::istream&);                    \
    template void save_tensor<T>(const std::string&, const Tensor<T>&); \
    template Tensor<T> load_tensor<T>(const std::string&);
RFRL_INSTANTIATE(float)
RFRL_INSTANTIATE(double)
#undef RFRL_INSTANTIATE

}  // namespace rfrl
