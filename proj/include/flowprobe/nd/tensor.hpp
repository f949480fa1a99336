#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flowprobe/common/error.hpp"

namespace flowprobe::nd {

// Dense row-major float64 tensor. The universal value carrier for this
// project; ops in the tape work on rank-1 and rank-2 tensors.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0);
    }

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != numel_of(shape_)) {
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(numel_of(shape_)));
        }
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor eye(int n) {
        Tensor t({n, n});
        for (int i = 0; i < n; ++i) t.data_[static_cast<size_t>(i) * n + i] = 1.0;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }

    int rows() const { return rank() >= 1 ? shape_[0] : 1; }
    int cols() const { return rank() >= 2 ? shape_[1] : 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int i, int j) { return data_[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void ensure_finite(const char* context) const {
        if (!all_finite()) throw NumericError(std::string("non-finite value after ") + context);
    }

    double l2_norm() const {
        double s = 0.0;
        for (double x : data_) s += x * x;
        return std::sqrt(s);
    }

    double sum() const {
        double s = 0.0;
        for (double x : data_) s += x;
        return s;
    }

    double mean() const { return numel() == 0 ? 0.0 : sum() / static_cast<double>(numel()); }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ShapeError("non-positive dimension " + std::to_string(d));
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// c += a * b for row-major matrices, plain triple loop with the k-panel in
// the middle so the inner loop vectorizes.
void matmul_accum(const double* a, const double* b, double* c, int m, int k, int n);
// c += a * b^T  (a: m x k, b: n x k, c: m x n)
void matmul_nt_accum(const double* a, const double* b, double* c, int m, int k, int n);
// c += a^T * b  (a: m x k, b: m x n, c: k x n)
void matmul_tn_accum(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace flowprobe::nd
