#include "trajgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace trajgnn {

namespace {

constexpr double kDegreeFloor = 1e-300;  // isolated-node safety for 1/sqrt

std::vector<VehicleState> sorted_states(const SceneFrame& frame) {
    std::vector<VehicleState> states = frame.states;
    std::sort(states.begin(), states.end(),
              [](const VehicleState& a, const VehicleState& b) {
                  return a.vehicle_id < b.vehicle_id;
              });
    for (std::size_t i = 1; i < states.size(); ++i) {
        if (states[i].vehicle_id == states[i - 1].vehicle_id) {
            throw std::invalid_argument("frame has duplicate vehicle_id " +
                                        std::to_string(states[i].vehicle_id));
        }
    }
    return states;
}

// Rank of each node in an ordering keyed on kinematic state alone. The rank
// is invariant under vehicle-id relabeling, so sorting edges by it keeps
// per-node reduction order stable under permutations.
std::vector<int> physical_ranks(const std::vector<VehicleState>& states) {
    std::vector<int> order(states.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const VehicleState& sa = states[a];
        const VehicleState& sb = states[b];
        if (sa.x != sb.x) return sa.x < sb.x;
        if (sa.y != sb.y) return sa.y < sb.y;
        if (sa.vx != sb.vx) return sa.vx < sb.vx;
        if (sa.vy != sb.vy) return sa.vy < sb.vy;
        if (sa.lane_id != sb.lane_id) return sa.lane_id < sb.lane_id;
        return a < b;
    });
    std::vector<int> rank(states.size());
    for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i);
    return rank;
}

struct EdgeDraft {
    int src;
    int dst;
};

void sort_edges_canonical(InteractionGraph& g, const std::vector<int>& node_rank) {
    std::vector<std::size_t> order(g.num_edges());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (g.edge_dst[a] != g.edge_dst[b]) return g.edge_dst[a] < g.edge_dst[b];
        return node_rank[g.edge_src[a]] < node_rank[g.edge_src[b]];
    });
    auto permute_int = [&](std::vector<int>& v) {
        std::vector<int> out(v.size());
        for (std::size_t i = 0; i < order.size(); ++i) out[i] = v[order[i]];
        v = std::move(out);
    };
    auto permute_dbl = [&](std::vector<double>& v) {
        if (v.empty()) return;
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < order.size(); ++i) out[i] = v[order[i]];
        v = std::move(out);
    };
    permute_int(g.edge_src);
    permute_int(g.edge_dst);
    permute_dbl(g.edge_weight);
    permute_dbl(g.norm_coeff);
    if (!g.edge_feature.empty()) {
        std::vector<std::array<double, 2>> out(g.edge_feature.size());
        for (std::size_t i = 0; i < order.size(); ++i) out[i] = g.edge_feature[order[i]];
        g.edge_feature = std::move(out);
    }
}

int find_state_index(const std::vector<VehicleState>& states, std::int64_t vehicle_id) {
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i].vehicle_id == vehicle_id) return static_cast<int>(i);
    }
    return -1;
}

}  // namespace

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::SelfConnections: return "self";
        case Strategy::AllConnections: return "all";
        case Strategy::PrecedingConnection: return "preceding";
        case Strategy::NeighbourConnection: return "neighbour";
    }
    return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "self") return Strategy::SelfConnections;
    if (name == "all") return Strategy::AllConnections;
    if (name == "preceding") return Strategy::PrecedingConnection;
    if (name == "neighbour") return Strategy::NeighbourConnection;
    throw std::invalid_argument("unknown strategy '" + name + "'");
}

std::vector<VehicleState> find_neighbors(const SceneFrame& frame, const VehicleState& ego) {
    const std::vector<VehicleState> states = sorted_states(frame);
    if (find_state_index(states, ego.vehicle_id) < 0) {
        throw std::invalid_argument("ego vehicle " + std::to_string(ego.vehicle_id) +
                                    " is not part of the frame");
    }

    struct Slot {
        bool taken = false;
        double key = 0.0;
        std::int64_t id = 0;
        const VehicleState* state = nullptr;

        void offer(double k, const VehicleState& s) {
            if (!taken || k < key || (k == key && s.vehicle_id < id)) {
                taken = true;
                key = k;
                id = s.vehicle_id;
                state = &s;
            }
        }
    };

    // Slots: own-lane ahead/behind, then ahead/behind/alongside per adjacent lane.
    Slot own_ahead, own_behind;
    Slot adj_ahead[2], adj_behind[2], adj_alongside[2];

    for (const VehicleState& s : states) {
        if (s.vehicle_id == ego.vehicle_id) continue;
        const double dx = s.x - ego.x;
        if (std::abs(dx) > kNeighborCutoffM) continue;
        if (s.lane_id == ego.lane_id) {
            if (dx > kAlongsideThresholdM) own_ahead.offer(dx, s);
            else if (dx < -kAlongsideThresholdM) own_behind.offer(-dx, s);
        } else if (s.lane_id == ego.lane_id - 1 || s.lane_id == ego.lane_id + 1) {
            const int side = (s.lane_id == ego.lane_id - 1) ? 0 : 1;
            if (dx > kAlongsideThresholdM) adj_ahead[side].offer(dx, s);
            else if (dx < -kAlongsideThresholdM) adj_behind[side].offer(-dx, s);
            else adj_alongside[side].offer(std::abs(dx), s);
        }
    }

    std::vector<VehicleState> result;
    for (const Slot* slot : {&own_ahead, &own_behind, &adj_ahead[0], &adj_behind[0],
                             &adj_alongside[0], &adj_ahead[1], &adj_behind[1],
                             &adj_alongside[1]}) {
        if (slot->taken) result.push_back(*slot->state);
    }
    return result;
}

int preceding_vehicle_index(const SceneFrame& frame, std::size_t ego_index) {
    const VehicleState& ego = frame.states[ego_index];
    int best = -1;
    double best_dx = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < frame.states.size(); ++i) {
        if (i == ego_index) continue;
        const VehicleState& s = frame.states[i];
        if (s.lane_id != ego.lane_id) continue;
        const double dx = s.x - ego.x;
        if (dx <= 0.0 || dx > kNeighborCutoffM) continue;
        if (dx < best_dx || (dx == best_dx && s.vehicle_id < frame.states[best].vehicle_id)) {
            best = static_cast<int>(i);
            best_dx = dx;
        }
    }
    return best;
}

InteractionGraph build_graph(const SceneFrame& frame, Strategy strategy) {
    if (frame.states.empty()) throw std::invalid_argument("build_graph: empty frame");
    const std::vector<VehicleState> states = sorted_states(frame);
    const int n = static_cast<int>(states.size());

    std::vector<EdgeDraft> drafts;
    switch (strategy) {
        case Strategy::SelfConnections:
            for (int i = 0; i < n; ++i) drafts.push_back({i, i});
            break;
        case Strategy::AllConnections:
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (i != j) drafts.push_back({j, i});
                }
            }
            break;
        case Strategy::PrecedingConnection: {
            SceneFrame sorted_frame{frame.timestamp, states};
            for (int i = 0; i < n; ++i) {
                const int pred = preceding_vehicle_index(sorted_frame, i);
                if (pred >= 0) drafts.push_back({pred, i});
            }
            break;
        }
        case Strategy::NeighbourConnection: {
            SceneFrame sorted_frame{frame.timestamp, states};
            for (int i = 0; i < n; ++i) {
                for (const VehicleState& nb : find_neighbors(sorted_frame, states[i])) {
                    drafts.push_back({find_state_index(states, nb.vehicle_id), i});
                }
            }
            break;
        }
    }

    InteractionGraph g;
    for (const VehicleState& s : states) g.node_ids.push_back(s.vehicle_id);
    g.node_rank = physical_ranks(states);
    for (const EdgeDraft& d : drafts) {
        g.edge_src.push_back(d.src);
        g.edge_dst.push_back(d.dst);
        g.edge_weight.push_back(1.0);
    }
    sort_edges_canonical(g, g.node_rank);
    return g;
}

void inverse_distance_weights(InteractionGraph& g, const SceneFrame& frame) {
    const std::vector<VehicleState> states = sorted_states(frame);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (g.edge_src[e] == g.edge_dst[e]) {
            g.edge_weight[e] = 1.0;
            continue;
        }
        const VehicleState& a = states[g.edge_src[e]];
        const VehicleState& b = states[g.edge_dst[e]];
        const double dist = std::hypot(a.x - b.x, a.y - b.y);
        g.edge_weight[e] = 1.0 / std::max(dist, 1.0);
    }
}

void gcn_normalization(InteractionGraph& g, GcnNormMode mode) {
    const std::size_t n = g.num_nodes();
    if (mode == GcnNormMode::base_with_selfloops) {
        std::vector<bool> has_self(n, false);
        for (std::size_t e = 0; e < g.num_edges(); ++e) {
            if (g.edge_src[e] == g.edge_dst[e]) has_self[g.edge_dst[e]] = true;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (has_self[i]) continue;
            g.edge_src.push_back(static_cast<int>(i));
            g.edge_dst.push_back(static_cast<int>(i));
            g.edge_weight.push_back(1.0);
            if (!g.edge_feature.empty()) g.edge_feature.push_back({0.0, 0.0});
        }
        sort_edges_canonical(g, g.node_rank);
    }

    const bool skip_self = (mode == GcnNormMode::adapted_no_selfloops);
    std::vector<double> d_in(n, 0.0), d_out(n, 0.0);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (skip_self && g.edge_src[e] == g.edge_dst[e]) continue;
        d_in[g.edge_dst[e]] += g.edge_weight[e];
    }
    // Out-degrees accumulate per sender with receivers ordered by node_rank,
    // mirroring the in-degree pass; both sums are then relabeling-stable.
    std::vector<std::size_t> by_src(g.num_edges());
    std::iota(by_src.begin(), by_src.end(), std::size_t{0});
    std::sort(by_src.begin(), by_src.end(), [&](std::size_t a, std::size_t b) {
        if (g.edge_src[a] != g.edge_src[b]) return g.edge_src[a] < g.edge_src[b];
        return g.node_rank[g.edge_dst[a]] < g.node_rank[g.edge_dst[b]];
    });
    for (std::size_t idx : by_src) {
        if (skip_self && g.edge_src[idx] == g.edge_dst[idx]) continue;
        d_out[g.edge_src[idx]] += g.edge_weight[idx];
    }

    g.norm_coeff.assign(g.num_edges(), 0.0);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (skip_self && g.edge_src[e] == g.edge_dst[e]) continue;
        const double din = std::max(d_in[g.edge_dst[e]], kDegreeFloor);
        const double dout = std::max(d_out[g.edge_src[e]], kDegreeFloor);
        g.norm_coeff[e] = g.edge_weight[e] / std::sqrt(din * dout);
    }
}

void relative_position_edge_features(InteractionGraph& g, const SceneFrame& frame) {
    const std::vector<VehicleState> states = sorted_states(frame);
    g.edge_feature.assign(g.num_edges(), {0.0, 0.0});
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (g.edge_src[e] == g.edge_dst[e]) continue;
        const VehicleState& src = states[g.edge_src[e]];
        const VehicleState& dst = states[g.edge_dst[e]];
        g.edge_feature[e] = {(src.x - dst.x) * kEdgeFeatureScale,
                             (src.y - dst.y) * kEdgeFeatureScale};
    }
}

void append_disjoint(InteractionGraph& base, const InteractionGraph& other) {
    const int offset = static_cast<int>(base.num_nodes());
    base.node_ids.insert(base.node_ids.end(), other.node_ids.begin(), other.node_ids.end());
    for (int r : other.node_rank) base.node_rank.push_back(r + offset);
    for (std::size_t e = 0; e < other.num_edges(); ++e) {
        base.edge_src.push_back(other.edge_src[e] + offset);
        base.edge_dst.push_back(other.edge_dst[e] + offset);
        base.edge_weight.push_back(other.edge_weight[e]);
        if (!other.norm_coeff.empty()) base.norm_coeff.push_back(other.norm_coeff[e]);
        if (!other.edge_feature.empty()) base.edge_feature.push_back(other.edge_feature[e]);
    }
}

}  // namespace trajgnn
