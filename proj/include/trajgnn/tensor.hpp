#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace trajgnn {

/// Dense row-major array of 64-bit floats. The shape product always equals
/// the data length; every shape extent is positive.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor row_major(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> data);

    std::size_t numel() const { return data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool is_matrix() const { return shape.size() == 2; }

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

/// Learnable tensor with an accumulated gradient of identical shape.
/// Gradients accumulate across backward passes until zero_grad().
struct Param {
    Tensor value;
    Tensor grad;

    Param() = default;
    explicit Param(Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad();
};

// Plain (non-recorded) kernels. The tape ops reuse these forward paths.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
double mse_loss(const Tensor& pred, const Tensor& target);

/// Per-segment exp-normalization (max-subtracted). Entry i belongs to
/// segment segments[i]; within each segment the outputs sum to 1.
std::vector<double> segment_softmax(const std::vector<double>& logits,
                                    const std::vector<int>& segments);

/// Uniform init in +-sqrt(6/(fan_in+fan_out)), deterministic per seed.
Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

/// Maps a raw 64-bit draw to [0,1) with 53-bit resolution.
inline double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace trajgnn
