#pragma once

#include <functional>
#include <vector>

#include "trajgnn/tensor.hpp"

namespace trajgnn {

/// Reverse-mode gradient tape. Each forward call appends a node holding the
/// op result; backward() sweeps the nodes in reverse and accumulates adjoints
/// into every bound Param's grad. A tape is built per forward pass and
/// discarded afterwards; Param gradients persist until zero_grad().
///
/// All reductions run in fixed index order so repeated runs are bit-identical.
class Tape {
public:
    using Id = int;

    Id input(Tensor value);
    Id param(Param& p);

    Id matmul(Id a, Id b);
    Id add(Id a, Id b);
    /// Adds a length-n bias vector to every row of a [m x n] matrix.
    Id add_bias(Id a, Id bias);
    Id relu(Id x);
    Id leaky_relu(Id x, double slope);
    Id scale(Id x, double factor);
    Id concat_cols(const std::vector<Id>& parts);
    /// out[r] = x[index[r]]; backward scatter-adds into the gathered rows.
    Id gather_rows(Id x, std::vector<int> index);
    /// Scales row r of x by s[r] (s has numel == rows(x)).
    Id scale_rows(Id x, Id s);
    /// out[seg[r]] += x[r]; rows with the same segment id are summed in
    /// storage order.
    Id segment_sum_rows(Id x, std::vector<int> segments, std::size_t out_rows);
    /// Fused message passing with constant coefficients:
    /// out[dst[e]] += coeff[e] * x[src[e]]. Coefficients carry no gradient.
    Id weighted_aggregate(Id x, std::vector<int> src, std::vector<int> dst,
                          std::vector<double> coeff, std::size_t out_rows);
    Id segment_softmax(Id logits, std::vector<int> segments);
    /// Scalar mean squared error against a constant target.
    Id mse(Id pred, Tensor target);

    const Tensor& value(Id id) const { return nodes_[id].value; }
    /// Adjoint of a node after backward(); useful in tests.
    const Tensor& adjoint(Id id) const { return nodes_[id].grad; }

    /// Seeds the (scalar) output with gradient 1 and accumulates into all
    /// bound Params. May be called once per tape.
    void backward(Id output);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, Node&)> back;  // null for constant leaves
        Param* bound = nullptr;
    };

    Id push(Tensor value, std::function<void(Tape&, Node&)> back, Param* bound = nullptr);
    Tensor& grad_of(Id id) { return nodes_[id].grad; }

    std::vector<Node> nodes_;
    bool swept_ = false;
};

}  // namespace trajgnn
