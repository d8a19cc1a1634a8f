#include "trajgnn/model.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace trajgnn {

namespace {

Param glorot_param(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    return Param(glorot_init(fan_in, fan_out, rng()));
}

Param zero_vector_param(std::size_t n) { return Param(Tensor::zeros({1, n})); }

void check_feature_dim(const Tensor& features, int expected) {
    if (!features.is_matrix() || features.cols() != static_cast<std::size_t>(expected)) {
        throw std::invalid_argument("feature matrix " + features.shape_str() +
                                    " does not match configured input dim " +
                                    std::to_string(expected));
    }
}

struct LayerDims {
    int in = 0;
    int out = 0;
    bool is_output = false;  // true when the graph layer itself emits the prediction
};

LayerDims layer_dims(const ModelConfig& cfg, int layer) {
    LayerDims d;
    d.in = layer == 0 ? cfg.input_dim : cfg.hidden_dim;
    d.is_output = !cfg.use_ff_output && layer == cfg.num_layers - 1;
    d.out = d.is_output ? cfg.output_dim : cfg.hidden_dim;
    return d;
}

int gat_head_dim(const ModelConfig& cfg, const LayerDims& d) {
    // Heads concatenate inside the network and average when the layer is the
    // final output.
    return d.is_output ? d.out : d.out / cfg.heads;
}

}  // namespace

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::FF: return "ff";
        case ModelKind::GCN: return "gcn";
        case ModelKind::GAT: return "gat";
    }
    return "unknown";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "ff") return ModelKind::FF;
    if (name == "gcn") return ModelKind::GCN;
    if (name == "gat") return ModelKind::GAT;
    throw std::invalid_argument("unknown model kind '" + name + "'");
}

void ModelConfig::validate() const {
    if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0 || num_layers < 1) {
        throw std::invalid_argument("model config: dimensions must be positive");
    }
    if (kind == ModelKind::GAT) {
        if (heads <= 0) throw std::invalid_argument("model config: heads must be positive");
        if (hidden_dim % heads != 0) {
            throw std::invalid_argument("model config: heads must divide hidden_dim");
        }
    }
}

Tape::Id gcn_layer_forward(Tape& tape, Tape::Id H, const InteractionGraph& g, GcnLayer& layer,
                           bool adapted, bool relu_output) {
    if (adapted && !layer.self_weight.has_value()) {
        throw std::logic_error("gcn layer: adapted mode requires the residual weight");
    }
    if (g.norm_coeff.size() != g.num_edges()) {
        throw std::logic_error("gcn layer: normalization coefficients not populated");
    }
    const std::size_t n = g.num_nodes();
    const Tape::Id hw = tape.matmul(H, tape.param(layer.weight));

    std::vector<int> src, dst;
    std::vector<double> coeff;
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (adapted && g.edge_src[e] == g.edge_dst[e]) continue;
        src.push_back(g.edge_src[e]);
        dst.push_back(g.edge_dst[e]);
        coeff.push_back(g.norm_coeff[e]);
    }

    Tape::Id agg;
    if (src.empty()) {
        agg = tape.input(Tensor::zeros({n, tape.value(hw).cols()}));
    } else {
        agg = tape.weighted_aggregate(hw, std::move(src), std::move(dst), std::move(coeff), n);
    }
    if (layer.self_weight.has_value()) {
        agg = tape.add(agg, tape.matmul(H, tape.param(*layer.self_weight)));
    }
    return relu_output ? tape.relu(agg) : agg;
}

Tape::Id gat_layer_forward(Tape& tape, Tape::Id H, const InteractionGraph& g, GatLayer& layer,
                           const GatLayerOptions& options) {
    const std::size_t n = g.num_nodes();
    const std::size_t num_edges = g.num_edges();
    if (options.use_edge_features && g.edge_feature.size() != num_edges) {
        throw std::logic_error("gat layer: edge features not populated");
    }

    Tape::Id edge_feat = -1;
    if (options.use_edge_features && num_edges > 0) {
        Tensor ef = Tensor::zeros({num_edges, 2});
        for (std::size_t e = 0; e < num_edges; ++e) {
            ef.data[2 * e] = g.edge_feature[e][0];
            ef.data[2 * e + 1] = g.edge_feature[e][1];
        }
        edge_feat = tape.input(std::move(ef));
    }

    std::vector<Tape::Id> head_outputs;
    for (GatHeadParams& head : layer.heads) {
        const Tape::Id hw = tape.matmul(H, tape.param(head.weight));
        Tape::Id aggregated;
        if (num_edges == 0) {
            aggregated = tape.input(Tensor::zeros({n, tape.value(hw).cols()}));
        } else {
            const Tape::Id h_dst = tape.gather_rows(hw, g.edge_dst);
            const Tape::Id h_src = tape.gather_rows(hw, g.edge_src);
            std::vector<Tape::Id> cat_parts{h_dst, h_src};
            if (edge_feat >= 0) cat_parts.push_back(edge_feat);
            const Tape::Id cat = tape.concat_cols(cat_parts);
            Tape::Id logits = tape.matmul(cat, tape.param(head.attention));
            logits = tape.leaky_relu(logits, kAttentionLeakySlope);
            const Tape::Id alpha = tape.segment_softmax(logits, g.edge_dst);
            const Tape::Id messages = tape.scale_rows(h_src, alpha);
            aggregated = tape.segment_sum_rows(messages, g.edge_dst, n);
        }
        head_outputs.push_back(aggregated);
    }

    Tape::Id combined;
    if (options.average_heads) {
        combined = head_outputs[0];
        for (std::size_t k = 1; k < head_outputs.size(); ++k) {
            combined = tape.add(combined, head_outputs[k]);
        }
        combined = tape.scale(combined, 1.0 / static_cast<double>(head_outputs.size()));
    } else {
        combined = head_outputs.size() == 1 ? head_outputs[0] : tape.concat_cols(head_outputs);
    }

    if (layer.self_weight.has_value()) {
        combined = tape.add(combined, tape.matmul(H, tape.param(*layer.self_weight)));
    }
    return options.relu_output ? tape.relu(combined) : combined;
}

Tape::Id ff_forward(Tape& tape, Tape::Id features, FfParams& p) {
    Tape::Id h = tape.relu(tape.add_bias(tape.matmul(features, tape.param(p.w1)),
                                         tape.param(p.b1)));
    h = tape.relu(tape.add_bias(tape.matmul(h, tape.param(p.w2)), tape.param(p.b2)));
    return tape.add_bias(tape.matmul(h, tape.param(p.w3)), tape.param(p.b3));
}

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model model;
    model.config = config;
    std::mt19937_64 rng(seed);

    switch (config.kind) {
        case ModelKind::FF: {
            FfParams p{
                glorot_param(config.input_dim, config.hidden_dim, rng),
                zero_vector_param(config.hidden_dim),
                glorot_param(config.hidden_dim, config.hidden_dim, rng),
                zero_vector_param(config.hidden_dim),
                glorot_param(config.hidden_dim, config.output_dim, rng),
                zero_vector_param(config.output_dim),
            };
            model.params = std::move(p);
            break;
        }
        case ModelKind::GCN: {
            GcnParams p;
            for (int l = 0; l < config.num_layers; ++l) {
                const LayerDims d = layer_dims(config, l);
                GcnLayer layer{glorot_param(d.in, d.out, rng), std::nullopt};
                if (config.use_residual) layer.self_weight = glorot_param(d.in, d.out, rng);
                p.layers.push_back(std::move(layer));
            }
            if (config.use_ff_output) {
                p.head = OutputHead{glorot_param(config.hidden_dim, config.output_dim, rng),
                                    zero_vector_param(config.output_dim)};
            }
            model.params = std::move(p);
            break;
        }
        case ModelKind::GAT: {
            GatParams p;
            for (int l = 0; l < config.num_layers; ++l) {
                const LayerDims d = layer_dims(config, l);
                const int head_dim = gat_head_dim(config, d);
                const int att_in = 2 * head_dim + (config.use_edge_features ? 2 : 0);
                GatLayer layer;
                for (int k = 0; k < config.heads; ++k) {
                    layer.heads.push_back(GatHeadParams{glorot_param(d.in, head_dim, rng),
                                                        glorot_param(att_in, 1, rng)});
                }
                if (config.use_residual) layer.self_weight = glorot_param(d.in, d.out, rng);
                p.layers.push_back(std::move(layer));
            }
            if (config.use_ff_output) {
                p.head = OutputHead{glorot_param(config.hidden_dim, config.output_dim, rng),
                                    zero_vector_param(config.output_dim)};
            }
            model.params = std::move(p);
            break;
        }
    }
    return model;
}

std::vector<Param*> Model::parameters() {
    std::vector<Param*> out;
    if (auto* ff = std::get_if<FfParams>(&params)) {
        out = {&ff->w1, &ff->b1, &ff->w2, &ff->b2, &ff->w3, &ff->b3};
    } else if (auto* gcn = std::get_if<GcnParams>(&params)) {
        for (GcnLayer& layer : gcn->layers) {
            out.push_back(&layer.weight);
            if (layer.self_weight) out.push_back(&*layer.self_weight);
        }
        if (gcn->head) {
            out.push_back(&gcn->head->weight);
            out.push_back(&gcn->head->bias);
        }
    } else if (auto* gat = std::get_if<GatParams>(&params)) {
        for (GatLayer& layer : gat->layers) {
            for (GatHeadParams& head : layer.heads) {
                out.push_back(&head.weight);
                out.push_back(&head.attention);
            }
            if (layer.self_weight) out.push_back(&*layer.self_weight);
        }
        if (gat->head) {
            out.push_back(&gat->head->weight);
            out.push_back(&gat->head->bias);
        }
    }
    return out;
}

Tape::Id Model::forward(Tape& tape, Tape::Id features, const InteractionGraph& g) {
    check_feature_dim(tape.value(features), config.input_dim);
    if (config.kind != ModelKind::FF &&
        tape.value(features).rows() != g.num_nodes()) {
        throw std::invalid_argument("feature rows do not match graph nodes");
    }

    if (auto* ff = std::get_if<FfParams>(&params)) {
        return ff_forward(tape, features, *ff);
    }

    Tape::Id h = features;
    if (auto* gcn = std::get_if<GcnParams>(&params)) {
        for (int l = 0; l < config.num_layers; ++l) {
            const LayerDims d = layer_dims(config, l);
            h = gcn_layer_forward(tape, h, g, gcn->layers[l], config.use_residual,
                                  !d.is_output);
        }
        if (gcn->head) {
            h = tape.add_bias(tape.matmul(h, tape.param(gcn->head->weight)),
                              tape.param(gcn->head->bias));
        }
        return h;
    }

    auto& gat = std::get<GatParams>(params);
    for (int l = 0; l < config.num_layers; ++l) {
        const LayerDims d = layer_dims(config, l);
        GatLayerOptions options;
        options.use_edge_features = config.use_edge_features;
        options.average_heads = d.is_output;
        options.relu_output = !d.is_output;
        h = gat_layer_forward(tape, h, g, gat.layers[l], options);
    }
    if (gat.head) {
        h = tape.add_bias(tape.matmul(h, tape.param(gat.head->weight)),
                          tape.param(gat.head->bias));
    }
    return h;
}

Tensor Model::predict(const Tensor& features, const InteractionGraph& g) {
    Tape tape;
    const Tape::Id out = forward(tape, tape.input(features), g);
    return tape.value(out);
}

InteractionGraph prepare_graph(const SceneFrame& frame, const ModelConfig& config) {
    InteractionGraph g = build_graph(frame, config.strategy);
    if (config.kind == ModelKind::GCN) {
        if (config.use_weighted_edges) inverse_distance_weights(g, frame);
        gcn_normalization(g, config.gcn_mode());
    }
    if (config.kind == ModelKind::GAT && config.use_edge_features) {
        relative_position_edge_features(g, frame);
    }
    return g;
}

Tensor window_node_features(const PredictionWindow& window) {
    const std::size_t n = window.vehicles.size();
    Tensor features = Tensor::zeros({n, static_cast<std::size_t>(4 * kHistorySamples)});
    for (std::size_t i = 0; i < n; ++i) {
        const WindowVehicle& v = window.vehicles[i];
        if (!v.history_complete()) {
            throw std::invalid_argument("vehicle " + std::to_string(v.vehicle_id) +
                                        " lacks history samples");
        }
        const SceneSample& anchor = *v.samples[kHistorySamples - 1];
        for (int s = 0; s < kHistorySamples; ++s) {
            const SceneSample& sample = *v.samples[s];
            double* row = &features.data[i * 4 * kHistorySamples + 4 * s];
            row[0] = (sample.x - anchor.x) * kPositionScale;
            row[1] = (sample.y - anchor.y) * kPositionScale;
            row[2] = sample.vx * kPositionScale;
            row[3] = sample.vy * kPositionScale;
        }
    }
    return features;
}

Tensor window_targets(const PredictionWindow& window, const std::vector<int>& rows) {
    if (rows.empty()) throw std::invalid_argument("window_targets: no rows requested");
    Tensor targets = Tensor::zeros({rows.size(), static_cast<std::size_t>(2 * kFutureSamples)});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const WindowVehicle& v = window.vehicles[rows[r]];
        if (!v.fully_present()) {
            throw std::invalid_argument("vehicle " + std::to_string(v.vehicle_id) +
                                        " is not loss-eligible");
        }
        const SceneSample& anchor = *v.samples[kHistorySamples - 1];
        for (int k = 0; k < kFutureSamples; ++k) {
            const SceneSample& sample = *v.samples[kHistorySamples + k];
            targets.data[r * 2 * kFutureSamples + 2 * k] = (sample.x - anchor.x) * kPositionScale;
            targets.data[r * 2 * kFutureSamples + 2 * k + 1] =
                (sample.y - anchor.y) * kPositionScale;
        }
    }
    return targets;
}

// --- serialization -------------------------------------------------------
//
// Flat little-endian binary: magic "TGPM", version, config header, then the
// parameter tensors in declaration order.

namespace {

constexpr char kMagic[4] = {'T', 'G', 'P', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("model file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("model file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    const std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::uint8_t strategy_code(Strategy s) { return static_cast<std::uint8_t>(s); }

}  // namespace

void Model::save(std::ostream& out) const {
    put_bytes(out, kMagic, 4);
    put_u32(out, kVersion);
    std::uint8_t flags = 0;
    if (config.use_residual) flags |= 1;
    if (config.use_ff_output) flags |= 2;
    if (config.use_edge_features) flags |= 4;
    if (config.use_weighted_edges) flags |= 8;
    const std::uint8_t head[4] = {static_cast<std::uint8_t>(config.kind),
                                  strategy_code(config.strategy), flags, 0};
    put_bytes(out, head, 4);
    put_u32(out, static_cast<std::uint32_t>(config.input_dim));
    put_u32(out, static_cast<std::uint32_t>(config.hidden_dim));
    put_u32(out, static_cast<std::uint32_t>(config.num_layers));
    put_u32(out, static_cast<std::uint32_t>(config.heads));
    put_u32(out, static_cast<std::uint32_t>(config.output_dim));

    Model& self = const_cast<Model&>(*this);
    for (const Param* p : self.parameters()) {
        put_u32(out, static_cast<std::uint32_t>(p->value.shape.size()));
        for (std::size_t d : p->value.shape) put_u64(out, d);
        for (double v : p->value.data) put_f64(out, v);
    }
}

void Model::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    save(out);
    if (!out) throw std::runtime_error("failed writing model to " + path.string());
}

Model Model::load(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a model file (bad magic)");
    }
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw std::runtime_error("unsupported model file version " + std::to_string(version));
    }
    unsigned char head[4];
    in.read(reinterpret_cast<char*>(head), 4);
    if (!in) throw std::runtime_error("model file truncated");

    ModelConfig config;
    config.kind = static_cast<ModelKind>(head[0]);
    config.strategy = static_cast<Strategy>(head[1]);
    config.use_residual = (head[2] & 1) != 0;
    config.use_ff_output = (head[2] & 2) != 0;
    config.use_edge_features = (head[2] & 4) != 0;
    config.use_weighted_edges = (head[2] & 8) != 0;
    config.input_dim = static_cast<int>(get_u32(in));
    config.hidden_dim = static_cast<int>(get_u32(in));
    config.num_layers = static_cast<int>(get_u32(in));
    config.heads = static_cast<int>(get_u32(in));
    config.output_dim = static_cast<int>(get_u32(in));

    Model model = Model::create(config, 0);
    for (Param* p : model.parameters()) {
        const std::uint32_t ndim = get_u32(in);
        std::vector<std::size_t> shape;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<std::size_t>(get_u64(in)));
        }
        if (shape != p->value.shape) {
            throw std::runtime_error("model file tensor shape mismatch");
        }
        for (double& v : p->value.data) v = get_f64(in);
    }
    return model;
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    return load(in);
}

}  // namespace trajgnn
