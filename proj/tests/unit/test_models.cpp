#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "trajgnn/model.hpp"
#include "trajgnn/optim.hpp"

using namespace trajgnn;

namespace {

// Independent dense helpers (j-i-k loop order, unlike the library kernel).
Tensor dense_mm(const Tensor& a, const Tensor& b) {
    Tensor c = Tensor::zeros({a.rows(), b.cols()});
    for (std::size_t j = 0; j < b.cols(); ++j) {
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

Tensor dense_relu(Tensor t) {
    for (double& v : t.data) v = std::max(0.0, v);
    return t;
}

// Dense reference for the degree-normalized convolution. Re-derives the
// normalization from the raw edge weights via the full adjacency matrix.
Tensor dense_gcn_reference(const Tensor& H, const InteractionGraph& g, const Tensor& W,
                           const Tensor* Ws, bool adapted, bool relu_out) {
    const std::size_t n = g.num_nodes();
    std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (adapted && g.edge_src[e] == g.edge_dst[e]) continue;
        A[g.edge_dst[e]][g.edge_src[e]] = g.edge_weight[e];
    }
    if (!adapted) {
        for (std::size_t i = 0; i < n; ++i) {
            if (A[i][i] == 0.0) A[i][i] = 1.0;  // added self-connections
        }
    }
    std::vector<double> din(n, 0.0), dout(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            din[i] += A[i][j];
            dout[j] += A[i][j];
        }
    }
    Tensor M = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (A[i][j] != 0.0) M.at(i, j) = A[i][j] / std::sqrt(din[i] * dout[j]);
        }
    }
    Tensor out = dense_mm(dense_mm(M, H), W);
    if (Ws) {
        const Tensor own = dense_mm(H, *Ws);
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += own.data[i];
    }
    return relu_out ? dense_relu(out) : out;
}

// Dense reference for the attention layer: materializes the full attention
// matrix per head with masked softmax rows.
Tensor dense_gat_reference(const Tensor& H, const InteractionGraph& g, GatLayer& layer,
                           bool use_ef, bool average, bool relu_out, const Tensor* Ws) {
    const std::size_t n = g.num_nodes();
    std::map<std::pair<int, int>, std::array<double, 2>> efeat;
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        efeat[{g.edge_src[e], g.edge_dst[e]}] =
            use_ef ? g.edge_feature[e] : std::array<double, 2>{0.0, 0.0};
    }

    std::vector<Tensor> head_outs;
    for (GatHeadParams& head : layer.heads) {
        const Tensor HW = dense_mm(H, head.weight.value);
        const std::size_t d = HW.cols();
        std::vector<std::vector<double>> logits(n, std::vector<double>(n, 0.0));
        std::vector<std::vector<bool>> present(n, std::vector<bool>(n, false));
        for (const auto& [key, ef] : efeat) {
            const int j = key.first, i = key.second;
            double acc = 0.0;
            std::size_t a_idx = 0;
            for (std::size_t k = 0; k < d; ++k) acc += head.attention.value.data[a_idx++] * HW.at(i, k);
            for (std::size_t k = 0; k < d; ++k) acc += head.attention.value.data[a_idx++] * HW.at(j, k);
            if (use_ef) {
                acc += head.attention.value.data[a_idx++] * ef[0];
                acc += head.attention.value.data[a_idx++] * ef[1];
            }
            logits[i][j] = acc >= 0.0 ? acc : kAttentionLeakySlope * acc;
            present[i][j] = true;
        }
        Tensor out = Tensor::zeros({n, d});
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -1e300;
            bool any = false;
            for (std::size_t j = 0; j < n; ++j) {
                if (present[i][j]) {
                    mx = std::max(mx, logits[i][j]);
                    any = true;
                }
            }
            if (!any) continue;
            double z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (present[i][j]) z += std::exp(logits[i][j] - mx);
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (!present[i][j]) continue;
                const double alpha = std::exp(logits[i][j] - mx) / z;
                for (std::size_t k = 0; k < d; ++k) out.at(i, k) += alpha * HW.at(j, k);
            }
        }
        head_outs.push_back(std::move(out));
    }

    Tensor combined;
    if (average) {
        combined = head_outs[0];
        for (std::size_t h = 1; h < head_outs.size(); ++h) {
            for (std::size_t i = 0; i < combined.numel(); ++i) {
                combined.data[i] += head_outs[h].data[i];
            }
        }
        for (double& v : combined.data) v /= static_cast<double>(head_outs.size());
    } else {
        std::size_t total = 0;
        for (const Tensor& t : head_outs) total += t.cols();
        combined = Tensor::zeros({n, total});
        std::size_t off = 0;
        for (const Tensor& t : head_outs) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < t.cols(); ++k) {
                    combined.at(i, off + k) = t.at(i, k);
                }
            }
            off += t.cols();
        }
    }
    if (Ws) {
        const Tensor own = dense_mm(H, *Ws);
        for (std::size_t i = 0; i < combined.numel(); ++i) combined.data[i] += own.data[i];
    }
    return relu_out ? dense_relu(combined) : combined;
}

Tensor random_features(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Tensor t = Tensor::zeros({rows, cols});
    for (double& v : t.data) v = testutil::uniform(rng, -1.0, 1.0);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

ModelConfig small_config(ModelKind kind, Strategy strategy) {
    ModelConfig c;
    c.kind = kind;
    c.strategy = strategy;
    c.input_dim = 6;
    c.hidden_dim = 8;
    c.heads = 4;
    c.output_dim = 4;
    return c;
}

}  // namespace

TEST_CASE("ff_forward zero input with zero biases gives zero output") {
    ModelConfig cfg = small_config(ModelKind::FF, Strategy::SelfConnections);
    Model model = Model::create(cfg, 1);
    std::mt19937_64 rng(5);
    const SceneFrame frame = testutil::make_random_frame(3, rng);
    const InteractionGraph g = prepare_graph(frame, cfg);
    const Tensor out = model.predict(Tensor::zeros({3, 6}), g);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("ff output per node independent of other nodes") {
    ModelConfig cfg = small_config(ModelKind::FF, Strategy::SelfConnections);
    Model model = Model::create(cfg, 2);
    std::mt19937_64 rng(6);
    const SceneFrame frame = testutil::make_random_frame(4, rng);
    const InteractionGraph g = prepare_graph(frame, cfg);
    Tensor features = random_features(4, 6, rng);
    const Tensor base = model.predict(features, g);
    for (std::size_t k = 0; k < 6; ++k) features.at(2, k) += testutil::uniform(rng, -3, 3);
    const Tensor changed = model.predict(features, g);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            if (i == 2) continue;
            CHECK(base.at(i, k) == changed.at(i, k));
        }
    }
}

TEST_CASE("ff matches a straight-line dense evaluation") {
    ModelConfig cfg = small_config(ModelKind::FF, Strategy::SelfConnections);
    Model model = Model::create(cfg, 3);
    std::mt19937_64 rng(7);
    const SceneFrame frame = testutil::make_random_frame(5, rng);
    const InteractionGraph g = prepare_graph(frame, cfg);
    const Tensor features = random_features(5, 6, rng);
    const Tensor out = model.predict(features, g);

    auto& p = std::get<FfParams>(model.params);
    auto add_bias = [](Tensor t, const Tensor& bias) {
        for (std::size_t i = 0; i < t.rows(); ++i) {
            for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) += bias.data[j];
        }
        return t;
    };
    Tensor ref = dense_relu(add_bias(dense_mm(features, p.w1.value), p.b1.value));
    ref = dense_relu(add_bias(dense_mm(ref, p.w2.value), p.b2.value));
    ref = add_bias(dense_mm(ref, p.w3.value), p.b3.value);
    CHECK(max_abs_diff(out, ref) < 1e-12);
}

TEST_CASE("gcn layer trivial aggregations") {
    // isolated node, base mode: only the inserted self-loop contributes
    InteractionGraph isolated;
    isolated.node_ids = {1};
    isolated.node_rank = {0};
    gcn_normalization(isolated, GcnNormMode::base_with_selfloops);
    GcnLayer layer{Param(glorot_init(3, 2, 1)), std::nullopt};
    Tape tape;
    const Tensor H = Tensor::row_major(1, 3, {0.5, -1.0, 2.0});
    const Tape::Id out =
        gcn_layer_forward(tape, tape.input(H), isolated, layer, false, true);
    const Tensor expected = dense_relu(dense_mm(H, layer.weight.value));
    CHECK(max_abs_diff(tape.value(out), expected) < 1e-15);

    // no in-edges, adapted mode: residual path only
    InteractionGraph empty;
    empty.node_ids = {1};
    empty.node_rank = {0};
    gcn_normalization(empty, GcnNormMode::adapted_no_selfloops);
    GcnLayer res{Param(glorot_init(3, 2, 2)), Param(glorot_init(3, 2, 3))};
    Tape tape2;
    const Tape::Id out2 = gcn_layer_forward(tape2, tape2.input(H), empty, res, true, true);
    const Tensor expected2 = dense_relu(dense_mm(H, res.self_weight->value));
    CHECK(max_abs_diff(tape2.value(out2), expected2) < 1e-15);

    GcnLayer missing{Param(glorot_init(3, 2, 4)), std::nullopt};
    Tape tape3;
    CHECK_THROWS_AS(gcn_layer_forward(tape3, tape3.input(H), empty, missing, true, true),
                    std::logic_error);
}

TEST_CASE("gcn layer matches dense oracle on random graphs") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 50; ++iter) {
        const int n = 2 + iter % 5;
        const SceneFrame frame = testutil::make_random_frame(n, rng);
        const bool adapted = iter % 2 == 0;
        const bool weighted = (iter / 2) % 2 == 0;

        InteractionGraph g = build_graph(frame, Strategy::NeighbourConnection);
        if (weighted) inverse_distance_weights(g, frame);
        gcn_normalization(g, adapted ? GcnNormMode::adapted_no_selfloops
                                     : GcnNormMode::base_with_selfloops);

        GcnLayer layer{Param(glorot_init(4, 3, 100 + iter)), std::nullopt};
        if (adapted) layer.self_weight = Param(glorot_init(4, 3, 200 + iter));
        const Tensor H = random_features(n, 4, rng);

        Tape tape;
        const Tape::Id out = gcn_layer_forward(tape, tape.input(H), g, layer, adapted, true);
        const Tensor ref = dense_gcn_reference(
            H, g, layer.weight.value,
            layer.self_weight ? &layer.self_weight->value : nullptr, adapted, true);
        CHECK(max_abs_diff(tape.value(out), ref) < 1e-12);
    }
}

TEST_CASE("gat layer with one in-neighbour copies that neighbour") {
    InteractionGraph g;
    g.node_ids = {1, 2};
    g.node_rank = {0, 1};
    g.edge_src = {1};
    g.edge_dst = {0};
    g.edge_weight = {1.0};
    GatLayer layer;
    layer.heads.push_back(GatHeadParams{Param(glorot_init(3, 2, 5)),
                                        Param(glorot_init(4, 1, 6))});
    GatLayerOptions opt;
    opt.use_edge_features = false;
    opt.relu_output = false;
    Tape tape;
    const Tensor H = Tensor::row_major(2, 3, {0.1, 0.2, 0.3, -0.4, 0.5, -0.6});
    const Tape::Id out = gat_layer_forward(tape, tape.input(H), g, layer, opt);
    const Tensor HW = dense_mm(H, layer.heads[0].weight.value);
    // alpha over a single neighbour is exactly 1 whatever the parameters
    CHECK(tape.value(out).at(0, 0) == doctest::Approx(HW.at(1, 0)).epsilon(1e-15));
    CHECK(tape.value(out).at(0, 1) == doctest::Approx(HW.at(1, 1)).epsilon(1e-15));
    // node 1 has no in-edges and no residual: zero rows
    CHECK(tape.value(out).at(1, 0) == 0.0);
    CHECK(tape.value(out).at(1, 1) == 0.0);
}

TEST_CASE("gat layer with no in-edges and residual") {
    InteractionGraph g;
    g.node_ids = {1};
    g.node_rank = {0};
    GatLayer layer;
    layer.heads.push_back(GatHeadParams{Param(glorot_init(3, 2, 7)),
                                        Param(glorot_init(4, 1, 8))});
    layer.self_weight = Param(glorot_init(3, 2, 9));
    GatLayerOptions opt;
    opt.use_edge_features = false;
    Tape tape;
    const Tensor H = Tensor::row_major(1, 3, {0.4, -0.7, 1.1});
    const Tape::Id out = gat_layer_forward(tape, tape.input(H), g, layer, opt);
    const Tensor expected = dense_relu(dense_mm(H, layer.self_weight->value));
    CHECK(max_abs_diff(tape.value(out), expected) < 1e-15);
}

TEST_CASE("gat layer matches dense attention oracle") {
    std::mt19937_64 rng(13);
    for (int iter = 0; iter < 50; ++iter) {
        const int n = 2 + iter % 5;
        const SceneFrame frame = testutil::make_random_frame(n, rng);
        const bool use_ef = iter % 2 == 0;
        const bool residual = (iter / 2) % 2 == 0;

        InteractionGraph g = build_graph(frame, iter % 3 == 0 ? Strategy::AllConnections
                                                              : Strategy::NeighbourConnection);
        relative_position_edge_features(g, frame);

        GatLayer layer;
        const int att_in = 2 * 3 + (use_ef ? 2 : 0);
        for (int k = 0; k < 2; ++k) {
            layer.heads.push_back(GatHeadParams{Param(glorot_init(4, 3, 300 + 10 * iter + k)),
                                                Param(glorot_init(att_in, 1, 400 + 10 * iter + k))});
        }
        if (residual) layer.self_weight = Param(glorot_init(4, 6, 500 + iter));
        GatLayerOptions opt;
        opt.use_edge_features = use_ef;

        const Tensor H = random_features(n, 4, rng);
        Tape tape;
        const Tape::Id out = gat_layer_forward(tape, tape.input(H), g, layer, opt);
        const Tensor ref = dense_gat_reference(
            H, g, layer, use_ef, false, true,
            layer.self_weight ? &layer.self_weight->value : nullptr);
        CHECK(max_abs_diff(tape.value(out), ref) < 1e-12);
    }
}

TEST_CASE("predict output shape and self-strategy interaction blindness") {
    std::mt19937_64 rng(17);
    for (ModelKind kind : {ModelKind::FF, ModelKind::GCN, ModelKind::GAT}) {
        ModelConfig cfg = small_config(kind, Strategy::SelfConnections);
        cfg.input_dim = 20;
        cfg.output_dim = 10;
        Model model = Model::create(cfg, 21);
        PredictionWindow w = testutil::make_random_window(5, rng);
        const SceneFrame frame = last_observed_frame(w);
        const InteractionGraph g = prepare_graph(frame, cfg);
        const Tensor features = window_node_features(w);
        const Tensor base = model.predict(features, g);
        CHECK(base.rows() == 5);
        CHECK(base.cols() == 10);

        // under self-connections, node 2's prediction ignores all other nodes
        PredictionWindow other = w;
        for (std::size_t i = 0; i < other.vehicles.size(); ++i) {
            if (i == 2) continue;
            for (auto& s : other.vehicles[i].samples) {
                s->x += testutil::uniform(rng, -50, 50);
                s->y += testutil::uniform(rng, -3, 3);
                s->vx += testutil::uniform(rng, -5, 5);
                s->vy += testutil::uniform(rng, -1, 1);
            }
        }
        const InteractionGraph g2 = prepare_graph(last_observed_frame(other), cfg);
        const Tensor out2 = model.predict(window_node_features(other), g2);
        for (std::size_t k = 0; k < 10; ++k) CHECK(out2.at(2, k) == base.at(2, k));
    }
}

TEST_CASE("predict is permutation equivariant bit-exactly") {
    std::mt19937_64 rng(19);
    const std::vector<Strategy> strategies{Strategy::SelfConnections, Strategy::AllConnections,
                                           Strategy::PrecedingConnection,
                                           Strategy::NeighbourConnection};
    int checked = 0;
    for (int iter = 0; iter < 36; ++iter) {
        const ModelKind kind = static_cast<ModelKind>(iter % 3);
        const Strategy strategy = strategies[(iter / 3) % 4];
        ModelConfig cfg = small_config(kind, strategy);
        cfg.input_dim = 20;
        cfg.output_dim = 10;
        cfg.use_weighted_edges = iter % 2 == 0;
        Model model = Model::create(cfg, 1000 + iter);

        PredictionWindow w = testutil::make_random_window(2 + iter % 5, rng);
        const int n = static_cast<int>(w.vehicles.size());
        std::vector<std::int64_t> new_ids;
        for (int i = 0; i < n; ++i) new_ids.push_back(500 + 3 * i);
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(testutil::uniform(rng, 0, i + 1));
            std::swap(new_ids[i], new_ids[std::min(j, i)]);
        }
        const auto [permuted, perm] = testutil::relabel_window(w, new_ids);

        const Tensor out_a =
            model.predict(window_node_features(w), prepare_graph(last_observed_frame(w), cfg));
        const Tensor out_b = model.predict(window_node_features(permuted),
                                           prepare_graph(last_observed_frame(permuted), cfg));
        for (std::size_t r = 0; r < out_b.rows(); ++r) {
            for (std::size_t k = 0; k < out_b.cols(); ++k) {
                CHECK(out_b.at(r, k) == out_a.at(perm[r], k));
                ++checked;
            }
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("two-layer predictions are local to the 2-hop in-neighbourhood") {
    std::mt19937_64 rng(23);
    for (ModelKind kind : {ModelKind::GCN, ModelKind::GAT}) {
        ModelConfig cfg = small_config(kind, Strategy::NeighbourConnection);
        cfg.input_dim = 20;
        cfg.output_dim = 10;
        Model model = Model::create(cfg, 7);
        for (int iter = 0; iter < 20; ++iter) {
            PredictionWindow w = testutil::make_random_window(8, rng);
            const SceneFrame frame = last_observed_frame(w);
            const InteractionGraph g = prepare_graph(frame, cfg);

            // 2-hop in-neighbourhood of node 0
            std::set<int> reach{0};
            for (int hop = 0; hop < 2; ++hop) {
                std::set<int> next = reach;
                for (std::size_t e = 0; e < g.num_edges(); ++e) {
                    if (reach.count(g.edge_dst[e])) next.insert(g.edge_src[e]);
                }
                reach = next;
            }
            int outside = -1;
            for (int i = 0; i < 8; ++i) {
                if (!reach.count(i)) outside = i;
            }
            if (outside < 0) continue;

            const Tensor base = model.predict(window_node_features(w), g);
            PredictionWindow mod = w;
            // perturb history (not the last observed position) of the
            // outside vehicle; the graph is unchanged
            for (int k = 0; k < kHistorySamples - 1; ++k) {
                mod.vehicles[outside].samples[k]->x += 11.0;
                mod.vehicles[outside].samples[k]->vx += 4.0;
            }
            const Tensor changed = model.predict(window_node_features(mod), g);
            for (std::size_t k = 0; k < 10; ++k) {
                CHECK(changed.at(0, k) == base.at(0, k));
            }
        }
    }
}

TEST_CASE("gradient soundness of every assembled model") {
    std::mt19937_64 rng(29);
    struct Case {
        ModelKind kind;
        bool residual, ff_output, edge_features, weighted;
    };
    const std::vector<Case> cases{
        {ModelKind::FF, true, true, false, false},
        {ModelKind::GCN, false, true, false, false},
        {ModelKind::GCN, true, true, false, false},
        {ModelKind::GCN, true, true, false, true},
        {ModelKind::GCN, false, false, false, true},
        {ModelKind::GAT, true, true, true, false},
        {ModelKind::GAT, true, true, false, false},
        {ModelKind::GAT, false, true, true, false},
        {ModelKind::GAT, true, false, true, false},
    };
    int case_idx = 0;
    for (const Case& c : cases) {
        ModelConfig cfg = small_config(c.kind, Strategy::NeighbourConnection);
        cfg.use_residual = c.residual;
        cfg.use_ff_output = c.ff_output;
        cfg.use_edge_features = c.edge_features;
        cfg.use_weighted_edges = c.weighted;
        Model model = Model::create(cfg, 40 + case_idx);

        const SceneFrame frame = testutil::make_random_frame(5, rng);
        const InteractionGraph g = prepare_graph(frame, cfg);
        const Tensor features = random_features(5, 6, rng);
        Tensor targets = random_features(5, 4, rng);

        GradCheckTarget target;
        target.params = model.parameters();
        auto build = [&](bool grad) {
            Tape tape;
            const Tape::Id out = model.forward(tape, tape.input(features), g);
            const Tape::Id loss = tape.mse(out, targets);
            if (grad) tape.backward(loss);
            return tape.value(loss).data[0];
        };
        target.value = [&]() { return build(false); };
        target.value_and_grad = [&]() { return build(true); };
        CHECK(finite_diff_check(target, 1e-5) < 1e-4);
        ++case_idx;
    }
}

TEST_CASE("model serialization round-trips bit-exactly") {
    std::mt19937_64 rng(31);
    for (ModelKind kind : {ModelKind::FF, ModelKind::GCN, ModelKind::GAT}) {
        ModelConfig cfg = small_config(kind, Strategy::NeighbourConnection);
        cfg.input_dim = 20;
        cfg.output_dim = 10;
        Model model = Model::create(cfg, 77);

        std::ostringstream buf;
        model.save(buf);
        std::istringstream in(buf.str());
        Model loaded = Model::load(in);

        CHECK(loaded.config.kind == cfg.kind);
        CHECK(loaded.config.strategy == cfg.strategy);
        CHECK(loaded.config.use_residual == cfg.use_residual);

        std::ostringstream buf2;
        loaded.save(buf2);
        CHECK(buf.str() == buf2.str());

        PredictionWindow w = testutil::make_random_window(4, rng);
        const InteractionGraph g = prepare_graph(last_observed_frame(w), cfg);
        const Tensor f = window_node_features(w);
        CHECK(max_abs_diff(model.predict(f, g), loaded.predict(f, g)) == 0.0);
    }
}
