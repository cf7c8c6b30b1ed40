#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fmsr {

using i64 = std::int64_t;

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// precondition on numeric ranges (e.g. non-positive scan step)
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check_shape(bool cond, const std::string& msg) {
    if (!cond) throw shape_error(msg);
}
inline void check_config(bool cond, const std::string& msg) {
    if (!cond) throw config_error(msg);
}

/// Dense row-major tensor. Rank is dynamic; the network uses
/// [B,C,H,W] activations, [B,C,L] token sequences and flat weight shapes.
template <typename T>
class Tensor {
 public:
    Tensor() = default;
    explicit Tensor(std::vector<i64> shape)
        : shape_(std::move(shape)), data_(static_cast<size_t>(numel_of(shape_)), T(0)) {}
    Tensor(std::vector<i64> shape, T fill_value)
        : shape_(std::move(shape)), data_(static_cast<size_t>(numel_of(shape_)), fill_value) {}

    static Tensor zeros(std::vector<i64> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<i64> shape, T v) { return Tensor(std::move(shape), v); }

    static i64 numel_of(const std::vector<i64>& s) {
        i64 n = 1;
        for (i64 d : s) {
            if (d < 0) throw shape_error("negative dimension");
            n *= d;
        }
        return n;
    }

    bool empty() const { return data_.empty(); }
    i64 numel() const { return static_cast<i64>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<i64>& shape() const { return shape_; }
    i64 dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](i64 i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](i64 i) const { return data_[static_cast<size_t>(i)]; }

    T& operator()(i64 a, i64 b) { return data_[static_cast<size_t>(a * shape_[1] + b)]; }
    const T& operator()(i64 a, i64 b) const { return data_[static_cast<size_t>(a * shape_[1] + b)]; }
    T& operator()(i64 a, i64 b, i64 c) {
        return data_[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    const T& operator()(i64 a, i64 b, i64 c) const {
        return data_[static_cast<size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    T& operator()(i64 a, i64 b, i64 c, i64 d) {
        return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }
    const T& operator()(i64 a, i64 b, i64 c, i64 d) const {
        return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(std::vector<i64> s) const {
        check_shape(numel_of(s) == numel(), "reshape: element count mismatch");
        Tensor out;
        out.shape_ = std::move(s);
        out.data_ = data_;
        return out;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << "]";
        return os.str();
    }

    T max_abs() const {
        T m = 0;
        for (const T& v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (i64 i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

 private:
    std::vector<i64> shape_;
    std::vector<T> data_;
};

template <typename T>
inline T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.same_shape(b), "max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    T m = 0;
    for (i64 i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace fmsr
