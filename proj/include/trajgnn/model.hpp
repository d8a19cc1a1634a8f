#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "trajgnn/graph.hpp"
#include "trajgnn/scene.hpp"
#include "trajgnn/tape.hpp"

namespace trajgnn {

enum class ModelKind { FF, GCN, GAT };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct ModelConfig {
    ModelKind kind = ModelKind::GAT;
    Strategy strategy = Strategy::NeighbourConnection;
    int input_dim = 20;   // 5 history samples x (x, y, vx, vy)
    int hidden_dim = 256;
    int num_layers = 2;
    int heads = 4;        // GAT only; heads * per-head dim == layer width
    int output_dim = 10;  // 5 future samples x (dx, dy)
    bool use_residual = true;
    bool use_ff_output = true;
    bool use_edge_features = true;    // GAT
    bool use_weighted_edges = false;  // GCN

    void validate() const;
    GcnNormMode gcn_mode() const {
        return use_residual ? GcnNormMode::adapted_no_selfloops
                            : GcnNormMode::base_with_selfloops;
    }
};

struct FfParams {
    Param w1, b1, w2, b2, w3, b3;
};

struct GcnLayer {
    Param weight;
    std::optional<Param> self_weight;
};

struct GatHeadParams {
    Param weight;
    Param attention;  // single linear map over [W h_i ; W h_j ; e_ij]
};

struct GatLayer {
    std::vector<GatHeadParams> heads;
    std::optional<Param> self_weight;
};

struct OutputHead {
    Param weight;
    Param bias;
};

struct GcnParams {
    std::vector<GcnLayer> layers;
    std::optional<OutputHead> head;
};

struct GatParams {
    std::vector<GatLayer> layers;
    std::optional<OutputHead> head;
};

inline constexpr double kAttentionLeakySlope = 0.2;
inline constexpr double kPositionScale = 1.0 / 100.0;  // meters -> features

/// Degree-normalized convolution step. Adapted mode aggregates strictly over
/// non-self in-edges and adds the self_weight transformation of the node's
/// own features; base mode relies on the unit self-loops inserted by
/// gcn_normalization. Requires g.norm_coeff to be populated.
Tape::Id gcn_layer_forward(Tape& tape, Tape::Id H, const InteractionGraph& g, GcnLayer& layer,
                           bool adapted, bool relu_output);

struct GatLayerOptions {
    bool use_edge_features = true;
    bool average_heads = false;  // averaged only when the layer is the output
    bool relu_output = true;
};

/// Attention step over in-neighbours per head. Nodes without in-edges
/// aggregate to zero rather than erroring.
Tape::Id gat_layer_forward(Tape& tape, Tape::Id H, const InteractionGraph& g, GatLayer& layer,
                           const GatLayerOptions& options);

Tape::Id ff_forward(Tape& tape, Tape::Id features, FfParams& params);

/// Assembled predictor in the two-layer-plus-head configuration. Outputs are
/// cumulative displacements (scaled by kPositionScale) of the future samples
/// relative to the position at the last observed sample.
class Model {
public:
    ModelConfig config;
    std::variant<FfParams, GcnParams, GatParams> params;

    static Model create(const ModelConfig& config, std::uint64_t seed);

    /// Parameters in declaration (= serialization) order.
    std::vector<Param*> parameters();

    Tape::Id forward(Tape& tape, Tape::Id features, const InteractionGraph& g);
    Tensor predict(const Tensor& features, const InteractionGraph& g);

    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static Model load(std::istream& in);
    static Model load(const std::filesystem::path& path);
};

/// Builds the strategy graph and attaches whatever the model consumes
/// (inverse-distance weights, normalization coefficients, edge features).
InteractionGraph prepare_graph(const SceneFrame& frame, const ModelConfig& config);

/// Node features in window vehicle order: per history sample, position
/// relative to the last observed position and velocity, all scaled.
Tensor window_node_features(const PredictionWindow& window);

/// Scaled displacement targets for the given vehicle rows (must be
/// loss-masked vehicles).
Tensor window_targets(const PredictionWindow& window, const std::vector<int>& rows);

}  // namespace trajgnn
