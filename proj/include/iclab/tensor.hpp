#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iclab {

class Rng;

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

// Dense row-major tensor of 64-bit floats. Only what the models need: no
// views, no general broadcasting, no dtype zoo.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s);

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int64_t> s, double v);
    static Tensor scalar(double v);
    static Tensor from(std::vector<int64_t> s, std::vector<double> d);
    static Tensor randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape.back() + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape.back() + j)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const { return iclab::shape_str(shape); }

    bool all_finite() const;
};

}  // namespace iclab
