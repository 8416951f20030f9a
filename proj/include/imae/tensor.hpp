#pragma once

#include <initializer_list>
#include <numeric>
#include <vector>

#include "imae/common.hpp"

namespace imae {

/// Dense row-major tensor of doubles. All model numerics run at 64-bit.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<i64> shape) : shape_(std::move(shape)) {
        i64 n = 1;
        for (i64 d : shape_) {
            if (d < 0) throw DimensionError("negative tensor dimension");
            n *= d;
        }
        data_.assign(static_cast<size_t>(n), 0.0);
    }

    Tensor(std::initializer_list<i64> shape) : Tensor(std::vector<i64>(shape)) {}

    static Tensor zeros(std::vector<i64> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<i64> shape, double v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    i64 size() const { return static_cast<i64>(data_.size()); }
    bool empty() const { return data_.empty(); }

    const std::vector<i64>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }

    i64 dim(int i) const {
        if (i < 0 || i >= rank()) throw DimensionError("tensor dim index out of range");
        return shape_[static_cast<size_t>(i)];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    double& operator[](i64 i) { return data_[static_cast<size_t>(i)]; }
    double operator[](i64 i) const { return data_[static_cast<size_t>(i)]; }

    /// Reinterpret the flat buffer under a new shape with the same element count.
    void reshape(std::vector<i64> shape) {
        i64 n = 1;
        for (i64 d : shape) n *= d;
        if (n != size()) throw DimensionError("reshape changes element count");
        shape_ = std::move(shape);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    std::vector<i64> shape_;
    std::vector<double> data_;
};

}  // namespace imae
