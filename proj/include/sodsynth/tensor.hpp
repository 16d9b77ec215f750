#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "sodsynth/errors.hpp"

namespace sodsynth::ad {

/// Dense row-major tensor of doubles. Rank 0 (empty shape) is a scalar
/// with one element. Tensors are plain values; ops never mutate inputs.
class Tensor {
public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::size_t>(checked_numel(shape_)) != data_.size())
            throw DimensionError("Tensor: data length " + std::to_string(data_.size()) +
                                 " does not match shape product " +
                                 std::to_string(checked_numel(shape_)));
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, 0.0); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return data_.size(); }
    bool is_scalar() const { return data_.size() == 1; }

    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Flat index helpers for the common ranks used in this project.
    std::size_t idx2(int r, int c) const {
        return static_cast<std::size_t>(r) * shape_[1] + c;
    }
    std::size_t idx3(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w;
    }
    std::size_t idx4(int a, int b, int h, int w) const {
        return ((static_cast<std::size_t>(a) * shape_[1] + b) * static_cast<std::size_t>(shape_[2]) + h) * shape_[3] + w;
    }

    double& at2(int r, int c) { return data_[idx2(r, c)]; }
    double at2(int r, int c) const { return data_[idx2(r, c)]; }
    double& at3(int c, int h, int w) { return data_[idx3(c, h, w)]; }
    double at3(int c, int h, int w) const { return data_[idx3(c, h, w)]; }
    double& at4(int a, int b, int h, int w) { return data_[idx4(a, b, h, w)]; }
    double at4(int a, int b, int h, int w) const { return data_[idx4(a, b, h, w)]; }

    double item() const {
        if (!is_scalar())
            throw UsageError("Tensor::item: tensor is not scalar-shaped");
        return data_[0];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static long long checked_numel(const std::vector<int>& shape) {
        long long n = 1;
        for (int d : shape) {
            if (d <= 0)
                throw DimensionError("Tensor: nonpositive dimension " + std::to_string(d));
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

} // namespace sodsynth::ad
