#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rfrl/errors.hpp"

namespace rfrl {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

/// Dense row-major array of T with an owning buffer. Value semantics.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() : shape_{}, data_(1, T(0)) {}
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    /// Value of a single-element tensor.
    T item() const;

    bool requires_grad() const noexcept { return requires_grad_; }
    Tensor& set_requires_grad(bool on) noexcept {
        requires_grad_ = on;
        return *this;
    }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        Tensor<U> t(shape_, std::move(out));
        t.set_requires_grad(requires_grad_);
        return t;
    }

    /// Bitwise equality of shape and values.
    bool identical(const Tensor& other) const noexcept;

private:
    Shape shape_;
    std::vector<T> data_;
    bool requires_grad_ = false;
};

/// Throws NumericsError naming `where` if any value is NaN/Inf.
template <typename T>
void require_finite(const Tensor<T>& t, const char* where);

// Portable tensor file: "RFT1", u32 rank, rank x u32 extents, u8 dtype tag,
// then raw little-endian values.
template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Reads a tensor stored as either dtype and converts it to T.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t);

template <typename T>
Tensor<T> load_tensor(const std::string& path);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace rfrl
