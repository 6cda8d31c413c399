#include "van/tensor.hpp"

#include <cmath>
#include <sstream>

namespace van {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) {
            throw ShapeError("extent must be >= 1, got shape " + shape_to_string(shape));
        }
        n *= e;
    }
    return n;
}

double NormalRng::next() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;  // 2^-53
    const double u1 = static_cast<double>((gen_() >> 11) + 1) * kTwoPow53Inv;
    const double u2 = static_cast<double>(gen_() >> 11) * kTwoPow53Inv;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value) {
    Tensor t;
    const std::size_t n = shape_numel(shape);
    t.shape_ = std::move(shape);
    t.data_.assign(n, value);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data) {
    const std::size_t n = shape_numel(shape);
    if (data.size() != n) {
        throw ShapeError("buffer length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::random_normal(Shape shape, double mean, double stddev, std::uint64_t seed) {
    NormalRng rng(seed);
    return random_normal(std::move(shape), mean, stddev, rng);
}

template <typename T>
Tensor<T> Tensor<T>::random_normal(Shape shape, double mean, double stddev, NormalRng& rng) {
    if (stddev < 0.0) {
        throw ParamError("stddev must be >= 0, got " + std::to_string(stddev));
    }
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.data_) {
        v = static_cast<T>(mean + stddev * rng.next());
    }
    return t;
}

template <typename T>
std::size_t Tensor<T>::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(shape_.size()));
    }
    return shape_[axis];
}

template <typename T>
std::size_t Tensor<T>::extent4(std::size_t axis) const {
    if (shape_.size() != 4) {
        throw ShapeError("expected rank-4 NCHW tensor, got shape " + shape_to_string(shape_));
    }
    return shape_[axis];
}

template <typename T>
bool Tensor<T>::all_finite() const {
    for (T v : data_) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

template <typename T>
void ensure_finite(const Tensor<T>& t, const char* op_name) {
    if (!t.all_finite()) {
        throw NumericError(std::string(op_name) + " produced a non-finite element");
    }
}

template <typename T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("elementwise_mul shape mismatch: " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
    }
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    ensure_finite(out, "elementwise_mul");
    return out;
}

template <typename T>
Tensor<T> elementwise_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("elementwise_add shape mismatch: " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
    }
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    ensure_finite(out, "elementwise_add");
    return out;
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& lambda) {
    if (lambda.rank() != 1 || lambda.size() != x.channels()) {
        throw ShapeError("scale_channels expects rank-1 lambda of length " +
                         std::to_string(x.channels()) + ", got shape " +
                         shape_to_string(lambda.shape()));
    }
    Tensor<T> out = x;
    const std::size_t spatial = x.height() * x.width();
    std::size_t idx = 0;
    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const T s = lambda[c];
            for (std::size_t i = 0; i < spatial; ++i, ++idx) {
                out[idx] = s * x[idx];
            }
        }
    }
    ensure_finite(out, "scale_channels");
    return out;
}

template class Tensor<float>;
template class Tensor<double>;

template void ensure_finite<float>(const Tensor<float>&, const char*);
template void ensure_finite<double>(const Tensor<double>&, const char*);
template Tensor<float> elementwise_mul<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> elementwise_mul<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> elementwise_add<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> elementwise_add<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> scale_channels<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> scale_channels<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace van
