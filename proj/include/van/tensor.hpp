#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "van/error.hpp"

namespace van {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);  // throws ShapeError on a zero extent

// Deterministic normal sampler. The generator is std::mt19937_64 seeded
// directly with `seed`; its raw 64-bit output sequence is fixed by the C++
// standard, so streams are identical across platforms. Each draw maps raw
// bits to uniforms as
//   u1 = ((x >> 11) + 1) * 2^-53   in (0, 1]
//   u2 = ( y >> 11      ) * 2^-53  in [0, 1)
// and applies the trigonometric Box-Muller transform
//   z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2),
// returning z0 then z1 before consuming the next pair.
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed) : gen_(seed) {}

    double next();

private:
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Dense N-dimensional array, flat row-major storage. Feature maps are NCHW.
// The scalar type selects the precision (float or double). All operations
// return new tensors; nothing mutates a tensor another caller can see.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor filled(Shape shape, T value);
    static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }
    static Tensor from_data(Shape shape, std::vector<T> data);
    static Tensor random_normal(Shape shape, double mean, double stddev, std::uint64_t seed);
    // Draws from an existing stream; used by the model builder so one seed
    // covers every weight tensor.
    static Tensor random_normal(Shape shape, double mean, double stddev, NormalRng& rng);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    const std::vector<T>& data() const { return data_; }
    std::vector<T>& data() { return data_; }

    T operator[](std::size_t flat) const { return data_[flat]; }
    T& operator[](std::size_t flat) { return data_[flat]; }

    std::size_t extent(std::size_t axis) const;

    // NCHW accessors; require rank 4.
    std::size_t batch() const { return extent4(0); }
    std::size_t channels() const { return extent4(1); }
    std::size_t height() const { return extent4(2); }
    std::size_t width() const { return extent4(3); }

    std::size_t offset4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    T at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[offset4(n, c, h, w)];
    }
    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[offset4(n, c, h, w)];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::size_t extent4(std::size_t axis) const;

    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Throws NumericError if any element of `t` is NaN or infinite.
template <typename T>
void ensure_finite(const Tensor<T>& t, const char* op_name);

template <typename T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> elementwise_add(const Tensor<T>& a, const Tensor<T>& b);

// out[n,c,h,w] = lambda[c] * x[n,c,h,w]; lambda is rank-1 of length channels.
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& lambda);

}  // namespace van
