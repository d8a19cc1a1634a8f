#include "trajgnn/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace trajgnn {

namespace {

void check_matrix(const Tensor& t, const char* op) {
    if (!t.is_matrix()) {
        throw std::invalid_argument(std::string(op) + ": expected matrix, got " + t.shape_str());
    }
}

// dL/da of c = a*b is g*b^T; rows of g and b are contiguous.
void gemm_nt_acc(const Tensor& g, const Tensor& b, Tensor& out) {
    const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g.data[i * n];
        double* orow = &out.data[i * k];
        for (std::size_t j = 0; j < k; ++j) {
            const double* brow = &b.data[j * n];
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) acc += grow[t] * brow[t];
            orow[j] += acc;
        }
    }
}

// dL/db of c = a*b is a^T*g.
void gemm_tn_acc(const Tensor& a, const Tensor& g, Tensor& out) {
    const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a.data[i * k];
        const double* grow = &g.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* orow = &out.data[p * n];
            for (std::size_t q = 0; q < n; ++q) orow[q] += av * grow[q];
        }
    }
}

}  // namespace

Tape::Id Tape::push(Tensor value, std::function<void(Tape&, Node&)> back, Param* bound) {
    Node node;
    node.value = std::move(value);
    node.back = std::move(back);
    node.bound = bound;
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::input(Tensor value) { return push(std::move(value), nullptr); }

Tape::Id Tape::param(Param& p) {
    return push(p.value, nullptr, &p);
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    Tensor out = trajgnn::matmul(av, bv);
    return push(std::move(out), [a, b](Tape& t, Node& self) {
        gemm_nt_acc(self.grad, t.nodes_[b].value, t.grad_of(a));
        gemm_tn_acc(t.nodes_[a].value, self.grad, t.grad_of(b));
    });
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    if (!av.same_shape(bv)) {
        throw std::invalid_argument("add shape mismatch: " + av.shape_str() + " vs " +
                                    bv.shape_str());
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
    return push(std::move(out), [a, b](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        for (std::size_t i = 0; i < self.grad.numel(); ++i) {
            ga.data[i] += self.grad.data[i];
            gb.data[i] += self.grad.data[i];
        }
    });
}

Tape::Id Tape::add_bias(Id a, Id bias) {
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[bias].value;
    check_matrix(av, "add_bias");
    if (bv.numel() != av.cols()) {
        throw std::invalid_argument("add_bias: bias " + bv.shape_str() + " does not match " +
                                    av.shape_str());
    }
    Tensor out = av;
    const std::size_t m = av.rows(), n = av.cols();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += bv.data[j];
    }
    return push(std::move(out), [a, bias, m, n](Tape& t, Node& self) {
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(bias);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                ga.data[i * n + j] += self.grad.data[i * n + j];
                gb.data[j] += self.grad.data[i * n + j];
            }
        }
    });
}

Tape::Id Tape::relu(Id x) {
    Tensor out = trajgnn::relu(nodes_[x].value);
    return push(std::move(out), [x](Tape& t, Node& self) {
        Tensor& gx = t.grad_of(x);
        const Tensor& xv = t.nodes_[x].value;
        for (std::size_t i = 0; i < gx.numel(); ++i) {
            if (xv.data[i] > 0.0) gx.data[i] += self.grad.data[i];
        }
    });
}

Tape::Id Tape::leaky_relu(Id x, double slope) {
    Tensor out = trajgnn::leaky_relu(nodes_[x].value, slope);
    return push(std::move(out), [x, slope](Tape& t, Node& self) {
        Tensor& gx = t.grad_of(x);
        const Tensor& xv = t.nodes_[x].value;
        for (std::size_t i = 0; i < gx.numel(); ++i) {
            gx.data[i] += self.grad.data[i] * (xv.data[i] >= 0.0 ? 1.0 : slope);
        }
    });
}

Tape::Id Tape::scale(Id x, double factor) {
    Tensor out = nodes_[x].value;
    for (double& v : out.data) v *= factor;
    return push(std::move(out), [x, factor](Tape& t, Node& self) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += factor * self.grad.data[i];
    });
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t m = nodes_[parts[0]].value.rows();
    std::size_t total = 0;
    for (Id p : parts) {
        check_matrix(nodes_[p].value, "concat_cols");
        if (nodes_[p].value.rows() != m) {
            throw std::invalid_argument("concat_cols: row count mismatch");
        }
        total += nodes_[p].value.cols();
    }
    Tensor out = Tensor::zeros({m, total});
    std::size_t off = 0;
    for (Id p : parts) {
        const Tensor& pv = nodes_[p].value;
        const std::size_t n = pv.cols();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) out.data[i * total + off + j] = pv.at(i, j);
        }
        off += n;
    }
    std::vector<Id> parts_copy = parts;
    return push(std::move(out), [parts_copy, m, total](Tape& t, Node& self) {
        std::size_t off = 0;
        for (Id p : parts_copy) {
            Tensor& gp = t.grad_of(p);
            const std::size_t n = gp.cols();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gp.data[i * n + j] += self.grad.data[i * total + off + j];
                }
            }
            off += n;
        }
    });
}

Tape::Id Tape::gather_rows(Id x, std::vector<int> index) {
    const Tensor& xv = nodes_[x].value;
    check_matrix(xv, "gather_rows");
    if (index.empty()) throw std::invalid_argument("gather_rows: empty index");
    const std::size_t n = xv.cols();
    Tensor out = Tensor::zeros({index.size(), n});
    for (std::size_t r = 0; r < index.size(); ++r) {
        const int src = index[r];
        if (src < 0 || static_cast<std::size_t>(src) >= xv.rows()) {
            throw std::out_of_range("gather_rows: row index out of range");
        }
        for (std::size_t j = 0; j < n; ++j) out.data[r * n + j] = xv.data[src * n + j];
    }
    return push(std::move(out), [x, index = std::move(index), n](Tape& t, Node& self) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t r = 0; r < index.size(); ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                gx.data[index[r] * n + j] += self.grad.data[r * n + j];
            }
        }
    });
}

Tape::Id Tape::scale_rows(Id x, Id s) {
    const Tensor& xv = nodes_[x].value;
    const Tensor& sv = nodes_[s].value;
    check_matrix(xv, "scale_rows");
    if (sv.numel() != xv.rows()) {
        throw std::invalid_argument("scale_rows: scale count " + sv.shape_str() +
                                    " does not match rows of " + xv.shape_str());
    }
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out = xv;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] *= sv.data[i];
    }
    return push(std::move(out), [x, s, m, n](Tape& t, Node& self) {
        Tensor& gx = t.grad_of(x);
        Tensor& gs = t.grad_of(s);
        const Tensor& xv = t.nodes_[x].value;
        const Tensor& sv = t.nodes_[s].value;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                gx.data[i * n + j] += sv.data[i] * self.grad.data[i * n + j];
                dot += self.grad.data[i * n + j] * xv.data[i * n + j];
            }
            gs.data[i] += dot;
        }
    });
}

Tape::Id Tape::segment_sum_rows(Id x, std::vector<int> segments, std::size_t out_rows) {
    const Tensor& xv = nodes_[x].value;
    check_matrix(xv, "segment_sum_rows");
    if (segments.size() != xv.rows()) {
        throw std::invalid_argument("segment_sum_rows: segment count does not match rows");
    }
    const std::size_t n = xv.cols();
    Tensor out = Tensor::zeros({out_rows, n});
    for (std::size_t r = 0; r < segments.size(); ++r) {
        const int d = segments[r];
        if (d < 0 || static_cast<std::size_t>(d) >= out_rows) {
            throw std::out_of_range("segment_sum_rows: segment id out of range");
        }
        for (std::size_t j = 0; j < n; ++j) out.data[d * n + j] += xv.data[r * n + j];
    }
    return push(std::move(out), [x, segments = std::move(segments), n](Tape& t, Node& self) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t r = 0; r < segments.size(); ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                gx.data[r * n + j] += self.grad.data[segments[r] * n + j];
            }
        }
    });
}

Tape::Id Tape::weighted_aggregate(Id x, std::vector<int> src, std::vector<int> dst,
                                  std::vector<double> coeff, std::size_t out_rows) {
    const Tensor& xv = nodes_[x].value;
    check_matrix(xv, "weighted_aggregate");
    if (src.size() != dst.size() || src.size() != coeff.size()) {
        throw std::invalid_argument("weighted_aggregate: edge array length mismatch");
    }
    const std::size_t n = xv.cols();
    Tensor out = Tensor::zeros({out_rows, n});
    for (std::size_t e = 0; e < src.size(); ++e) {
        const double c = coeff[e];
        const double* xrow = &xv.data[src[e] * n];
        double* orow = &out.data[dst[e] * n];
        for (std::size_t j = 0; j < n; ++j) orow[j] += c * xrow[j];
    }
    return push(std::move(out), [x, src = std::move(src), dst = std::move(dst),
                                 coeff = std::move(coeff), n](Tape& t, Node& self) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t e = 0; e < src.size(); ++e) {
            const double c = coeff[e];
            const double* grow = &self.grad.data[dst[e] * n];
            double* xrow = &gx.data[src[e] * n];
            for (std::size_t j = 0; j < n; ++j) xrow[j] += c * grow[j];
        }
    });
}

Tape::Id Tape::segment_softmax(Id logits, std::vector<int> segments) {
    const Tensor& lv = nodes_[logits].value;
    std::vector<double> flat(lv.data.begin(), lv.data.end());
    std::vector<double> probs = trajgnn::segment_softmax(flat, segments);
    Tensor out(lv.shape, std::move(probs));
    return push(std::move(out), [logits, segments = std::move(segments)](Tape& t, Node& self) {
        // Per-segment softmax Jacobian: dl_i = p_i * (g_i - sum_j p_j g_j).
        int max_seg = 0;
        for (int s : segments) max_seg = std::max(max_seg, s);
        std::vector<double> seg_dot(static_cast<std::size_t>(max_seg) + 1, 0.0);
        const Tensor& pv = self.value;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            seg_dot[segments[i]] += pv.data[i] * self.grad.data[i];
        }
        Tensor& gl = t.grad_of(logits);
        for (std::size_t i = 0; i < segments.size(); ++i) {
            gl.data[i] += pv.data[i] * (self.grad.data[i] - seg_dot[segments[i]]);
        }
    });
}

Tape::Id Tape::mse(Id pred, Tensor target) {
    const Tensor& pv = nodes_[pred].value;
    const double loss = trajgnn::mse_loss(pv, target);
    Tensor out = Tensor::scalar(loss);
    return push(std::move(out), [pred, target = std::move(target)](Tape& t, Node& self) {
        Tensor& gp = t.grad_of(pred);
        const Tensor& pv = t.nodes_[pred].value;
        const double g = self.grad.data[0];
        const double inv = 2.0 / static_cast<double>(pv.numel());
        for (std::size_t i = 0; i < pv.numel(); ++i) {
            gp.data[i] += g * inv * (pv.data[i] - target.data[i]);
        }
    });
}

void Tape::backward(Id output) {
    if (swept_) throw std::logic_error("Tape::backward called twice");
    swept_ = true;
    if (nodes_[output].value.numel() != 1) {
        throw std::invalid_argument("backward output must be scalar, got " +
                                    nodes_[output].value.shape_str());
    }
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[output].grad.data[0] = 1.0;
    for (Id i = output; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back) n.back(*this, n);
        if (n.bound) {
            for (std::size_t j = 0; j < n.grad.numel(); ++j) {
                n.bound->grad.data[j] += n.grad.data[j];
            }
        }
    }
}

}  // namespace trajgnn
