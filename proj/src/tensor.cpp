#include "trajgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace trajgnn {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must not be empty");
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor shape extents must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_product(shape) != data.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str());
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::row_major(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> data) {
    std::size_t n = data.size();
    return Tensor({n}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (!is_matrix()) throw std::logic_error("rows() on non-matrix tensor " + shape_str());
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (!is_matrix()) throw std::logic_error("cols() on non-matrix tensor " + shape_str());
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void Param::zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (!a.is_matrix() || !b.is_matrix() || a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch: " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c = Tensor::zeros({m, n});
    // i-k-j order: the inner loop runs over contiguous rows of b and c.
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a.data[i * k];
        double* crow = &c.data[i * n];
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = &b.data[kk * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw std::invalid_argument("leaky_relu slope must lie in (0,1)");
    }
    Tensor out = x;
    for (double& v : out.data) v = v >= 0.0 ? v : slope * v;
    return out;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("mse_loss shape mismatch: " + pred.shape_str() + " vs " +
                                    target.shape_str());
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

std::vector<double> segment_softmax(const std::vector<double>& logits,
                                    const std::vector<int>& segments) {
    if (logits.empty()) throw std::invalid_argument("segment_softmax: empty input");
    if (segments.size() != logits.size()) {
        throw std::invalid_argument("segment_softmax: segment ids do not match logits");
    }
    int max_seg = 0;
    for (int s : segments) {
        if (s < 0) throw std::invalid_argument("segment_softmax: negative segment id");
        max_seg = std::max(max_seg, s);
    }
    const std::size_t nseg = static_cast<std::size_t>(max_seg) + 1;
    std::vector<double> seg_max(nseg, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        seg_max[segments[i]] = std::max(seg_max[segments[i]], logits[i]);
    }
    std::vector<double> out(logits.size());
    std::vector<double> seg_sum(nseg, 0.0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - seg_max[segments[i]]);
        seg_sum[segments[i]] += out[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= seg_sum[segments[i]];
    return out;
}

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
    if (fan_in == 0 || fan_out == 0) {
        throw std::invalid_argument("glorot_init: fan_in and fan_out must be positive");
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::mt19937_64 rng(seed);
    Tensor t = Tensor::zeros({fan_in, fan_out});
    for (double& v : t.data) v = limit * (2.0 * uniform01(rng()) - 1.0);
    return t;
}

}  // namespace trajgnn
