#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "conformal_ts/errors.hpp"

namespace cts {

// Dense row-major tensor of doubles. Storage is always 64-bit; 32-bit
// precision is purely an I/O concern (see tensor_io.hpp).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : dims_(std::move(dims)) {
        if (dims_.empty())
            throw DimensionError("tensor must have at least one dimension");
        std::size_t n = 1;
        for (std::size_t d : dims_) {
            if (d == 0)
                throw DimensionError("tensor dimensions must be strictly positive");
            n *= d;
        }
        data_.assign(n, fill);
    }

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t ndim() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t k) const { return dims_.at(k); }
    std::size_t numel() const noexcept { return data_.size(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator()(std::size_t a) { return data_[check_index(index1(a))]; }
    double operator()(std::size_t a) const { return data_[check_index(index1(a))]; }
    double& operator()(std::size_t a, std::size_t b) {
        return data_[check_index(index2(a, b))];
    }
    double operator()(std::size_t a, std::size_t b) const {
        return data_[check_index(index2(a, b))];
    }
    double& operator()(std::size_t a, std::size_t b, std::size_t c) {
        return data_[check_index(index3(a, b, c))];
    }
    double operator()(std::size_t a, std::size_t b, std::size_t c) const {
        return data_[check_index(index3(a, b, c))];
    }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

private:
    std::size_t index1(std::size_t a) const {
        require_ndim(1);
        return a;
    }
    std::size_t index2(std::size_t a, std::size_t b) const {
        require_ndim(2);
        return a * dims_[1] + b;
    }
    std::size_t index3(std::size_t a, std::size_t b, std::size_t c) const {
        require_ndim(3);
        return (a * dims_[1] + b) * dims_[2] + c;
    }
    void require_ndim(std::size_t n) const {
        if (dims_.size() != n)
            throw DimensionError("tensor rank mismatch: have " +
                                 std::to_string(dims_.size()) + ", indexed as " +
                                 std::to_string(n) + "-d");
    }
    std::size_t check_index(std::size_t idx) const {
        if (idx >= data_.size())
            throw DimensionError("tensor index out of range");
        return idx;
    }

    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

} // namespace cts
