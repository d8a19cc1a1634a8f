#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trajgnn/scene.hpp"

namespace trajgnn {

/// Edge construction strategies over a scene frame.
enum class Strategy {
    SelfConnections,
    AllConnections,
    PrecedingConnection,
    NeighbourConnection,
};

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

inline constexpr double kNeighborCutoffM = 100.0;  // longitudinal search radius
inline constexpr double kAlongsideThresholdM = 5.0;
inline constexpr double kEdgeFeatureScale = 1.0 / 100.0;

/// Directed interaction graph. Edges lead from a neighbouring vehicle to the
/// ego vehicle it may influence; messages aggregate over in-edges.
///
/// Edges are stored sorted by (dst index, then the sender's physical state).
/// Keying the within-receiver order on sender kinematics rather than node
/// index keeps every per-node reduction bit-identical under vehicle-id
/// relabeling.
struct InteractionGraph {
    std::vector<std::int64_t> node_ids;  // ascending vehicle_id
    std::vector<int> node_rank;  // rank in the kinematics-keyed node ordering
    std::vector<int> edge_src;
    std::vector<int> edge_dst;
    std::vector<double> edge_weight;    // 1.0 unless inverse-distance weighted
    std::vector<double> norm_coeff;     // per-edge GCN coefficient (may be empty)
    std::vector<std::array<double, 2>> edge_feature;  // scaled (dx, dy), may be empty

    std::size_t num_nodes() const { return node_ids.size(); }
    std::size_t num_edges() const { return edge_src.size(); }
};

enum class GcnNormMode {
    base_with_selfloops,   // unit self-loops added before normalization
    adapted_no_selfloops,  // self-edges dropped from degrees and aggregation
};

/// Lane-based neighbour search: per ego, nearest ahead/behind in the own
/// lane, plus nearest ahead/behind/alongside in each adjacent lane, all
/// within the longitudinal cutoff. Ties break toward the smaller vehicle_id.
std::vector<VehicleState> find_neighbors(const SceneFrame& frame, const VehicleState& ego);

InteractionGraph build_graph(const SceneFrame& frame, Strategy strategy);

/// edge_weight = 1/max(distance, 1 m); self-loops get weight 1.
void inverse_distance_weights(InteractionGraph& g, const SceneFrame& frame);

/// Populates norm_coeff(j->i) = w_ij / sqrt(d_in(i) * d_out(j)) with weighted
/// degrees. Base mode first inserts unit self-loops; adapted mode assigns
/// self-edges coefficient 0 and excludes them from degrees.
void gcn_normalization(InteractionGraph& g, GcnNormMode mode);

/// edge_feature(j->i) = ((x_j-x_i)/100, (y_j-y_i)/100) at the frame's
/// timestamp; self-loops get (0,0).
void relative_position_edge_features(InteractionGraph& g, const SceneFrame& frame);

/// Same-lane predecessor (nearest vehicle ahead) within the cutoff, or -1.
int preceding_vehicle_index(const SceneFrame& frame, std::size_t ego_index);

/// Appends `other` to `base`, offsetting node and edge indices; used to batch
/// window graphs into one block-diagonal graph.
void append_disjoint(InteractionGraph& base, const InteractionGraph& other);

}  // namespace trajgnn
