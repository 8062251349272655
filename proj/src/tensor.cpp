#include "iclab/tensor.hpp"

#include <cmath>
#include <sstream>

#include "iclab/errors.hpp"
#include "iclab/rng.hpp"

namespace iclab {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) {
            throw ConfigError("negative dimension in shape " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.shape = {};
    t.data = {v};
    return t;
}

Tensor Tensor::from(std::vector<int64_t> s, std::vector<double> d) {
    if (shape_numel(s) != static_cast<int64_t>(d.size())) {
        throw ConfigError("Tensor::from: " + iclab::shape_str(s) + " does not hold " +
                          std::to_string(d.size()) + " values");
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    return t;
}

Tensor Tensor::randn(std::vector<int64_t> s, Rng& rng, double stddev) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = rng.normal(0.0, stddev);
    return t;
}

bool Tensor::all_finite() const {
    // A single NaN or Inf poisons the sum, so one pass suffices. Four
    // accumulators keep the loop vectorizable under strict FP.
    const size_t n4 = data.size() - data.size() % 4;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (size_t i = 0; i < n4; i += 4) {
        s0 += data[i];
        s1 += data[i + 1];
        s2 += data[i + 2];
        s3 += data[i + 3];
    }
    double acc = (s0 + s1) + (s2 + s3);
    for (size_t i = n4; i < data.size(); ++i) acc += data[i];
    return std::isfinite(acc);
}

}  // namespace iclab
