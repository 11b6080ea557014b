#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace splicedet::core {

/// Dense row-major tensor of up to 4 dimensions.
/// Float is the working precision for the network; the same template
/// instantiated with double backs the finite-difference gradient checks.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape, T fill = T(0)) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), fill);
    }

    static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

    static TensorT zeros_like(const TensorT& other) { return TensorT(other.shape_); }

    static std::int64_t numel_of(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Indexed access; shapes are checked only via assert-style bounds in debug builds.
    T& at2(int i, int j) { return data_[idx2(i, j)]; }
    const T& at2(int i, int j) const { return data_[idx2(i, j)]; }
    T& at3(int c, int y, int x) { return data_[idx3(c, y, x)]; }
    const T& at3(int c, int y, int x) const { return data_[idx3(c, y, x)]; }
    T& at4(int n, int c, int y, int x) { return data_[idx4(n, c, y, x)]; }
    const T& at4(int n, int c, int y, int x) const { return data_[idx4(n, c, y, x)]; }

    std::int64_t idx2(int i, int j) const {
        return static_cast<std::int64_t>(i) * shape_[1] + j;
    }
    std::int64_t idx3(int c, int y, int x) const {
        return (static_cast<std::int64_t>(c) * shape_[1] + y) * shape_[2] + x;
    }
    std::int64_t idx4(int n, int c, int y, int x) const {
        return ((static_cast<std::int64_t>(n) * shape_[1] + c) * static_cast<std::int64_t>(shape_[2]) + y) * shape_[3] + x;
    }

    void fill(T v) { data_.assign(data_.size(), v); }
    void zero() { fill(T(0)); }

    void reshape(std::vector<int> shape) {
        if (numel_of(shape) != numel()) throw std::invalid_argument("tensor: reshape changes element count");
        shape_ = std::move(shape);
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

}  // namespace splicedet::core
