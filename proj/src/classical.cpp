#include "trajgnn/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "trajgnn/tensor.hpp"
#include "trajgnn/textio.hpp"

namespace trajgnn {

namespace {

constexpr double kGapFloorM = 0.1;

struct Bounds {
    double lo, hi;
    double clip(double v) const { return std::clamp(v, lo, hi); }
};

// Global search bounds; delta stays fixed at 4.
constexpr Bounds kV0Bounds{1.0, 70.0};
constexpr Bounds kAmaxBounds{0.05, 5.0};
constexpr Bounds kTauBounds{0.05, 3.0};
constexpr Bounds kBBounds{0.5, 15.0};
constexpr Bounds kS0Bounds{0.5, 20.0};

int nearest_leader(const std::vector<IdmAgent>& agents, std::size_t ego) {
    int best = -1;
    double best_dx = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (i == ego || agents[i].lane_id != agents[ego].lane_id) continue;
        const double dx = agents[i].x - agents[ego].x;
        if (dx > 0.0 && dx < best_dx) {
            best = static_cast<int>(i);
            best_dx = dx;
        }
    }
    return best;
}

}  // namespace

void IdmParams::validate() const {
    if (!(v0 > 0.0 && a_max > 0.0 && tau > 0.0 && b > 0.0 && s0 > 0.0 && delta > 0.0)) {
        throw std::invalid_argument("idm parameters must be strictly positive");
    }
}

std::vector<std::array<double, 2>> cvm_predict(const VehicleState& state, int horizon_steps) {
    if (horizon_steps < 1) throw std::invalid_argument("cvm_predict: horizon must be >= 1");
    std::vector<std::array<double, 2>> out;
    out.reserve(horizon_steps);
    for (int k = 1; k <= horizon_steps; ++k) {
        out.push_back({state.x + k * state.vx, state.y + k * state.vy});
    }
    return out;
}

double idm_acceleration(double v, double s, double dv, bool leader_present,
                        const IdmParams& p) {
    const double a_free = p.a_max * (1.0 - std::pow(v / p.v0, p.delta));
    if (!leader_present) return a_free;
    if (!(s > 0.0)) {
        throw std::invalid_argument("idm_acceleration: gap must be positive with a leader");
    }
    const double a_int =
        -p.a_max * ((p.s0 + v * p.tau) / s + v * dv / (2.0 * s * std::sqrt(p.a_max * p.b)));
    return a_free + a_int;
}

void idm_joint_step(std::vector<IdmAgent>& agents, double dt) {
    std::vector<double> accel(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const int leader = nearest_leader(agents, i);
        if (leader < 0) {
            accel[i] = idm_acceleration(agents[i].v, 1.0, 0.0, false, agents[i].params);
        } else {
            const double gap = std::max(agents[leader].x - agents[i].x, kGapFloorM);
            const double dv = agents[i].v - agents[leader].v;
            accel[i] = idm_acceleration(agents[i].v, gap, dv, true, agents[i].params);
        }
    }
    for (std::size_t i = 0; i < agents.size(); ++i) {
        agents[i].x += agents[i].v * dt;
        agents[i].v = std::max(0.0, agents[i].v + accel[i] * dt);
    }
}

std::vector<std::vector<std::array<double, 2>>> idm_rollout(
    const std::vector<VehicleState>& states, const IdmParams& p, const RolloutConfig& cfg) {
    p.validate();
    if (!(cfg.dt > 0.0) || cfg.horizon_s < 1) {
        throw std::invalid_argument("idm_rollout: invalid rollout config");
    }
    std::vector<IdmAgent> agents;
    agents.reserve(states.size());
    for (const VehicleState& s : states) {
        agents.push_back(IdmAgent{s.x, s.y, std::max(0.0, s.vx), s.lane_id, p});
    }
    const int steps_per_second = static_cast<int>(std::lround(1.0 / cfg.dt));
    std::vector<std::vector<std::array<double, 2>>> out(states.size());
    for (int second = 1; second <= cfg.horizon_s; ++second) {
        for (int k = 0; k < steps_per_second; ++k) idm_joint_step(agents, cfg.dt);
        for (std::size_t i = 0; i < agents.size(); ++i) {
            out[i].push_back({agents[i].x, agents[i].y});
        }
    }
    return out;
}

double idm_scene_objective(const CanonicalSceneSet& scenes, const IdmParams& p) {
    double total = 0.0;
    std::size_t count = 0;
    const RolloutConfig cfg{};
    for (const PredictionWindow& window : scenes) {
        const SceneFrame frame = last_observed_frame(window);
        const auto rollout = idm_rollout(frame.states, p, cfg);
        for (std::size_t i = 0; i < window.vehicles.size(); ++i) {
            const WindowVehicle& v = window.vehicles[i];
            if (!v.loss_mask) continue;
            double acc = 0.0;
            for (int k = 0; k < kFutureSamples; ++k) {
                const SceneSample& truth = *v.samples[kHistorySamples + k];
                acc += std::hypot(rollout[i][k][0] - truth.x, rollout[i][k][1] - truth.y);
            }
            total += acc / kFutureSamples;
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("idm objective: no loss-masked vehicles");
    return total / static_cast<double>(count);
}

IdmParams tune_idm(const CanonicalSceneSet& training_scenes, int sample_budget,
                   std::uint64_t seed) {
    if (training_scenes.empty()) throw std::invalid_argument("tune_idm: empty scene set");
    if (sample_budget < 1) throw std::invalid_argument("tune_idm: budget must be >= 1");

    std::mt19937_64 rng(seed);
    auto draw = [&rng](const Bounds& b) {
        return b.lo + (b.hi - b.lo) * uniform01(rng());
    };

    constexpr int kRounds = 10;
    Bounds v0 = kV0Bounds, amax = kAmaxBounds, tau = kTauBounds, b = kBBounds, s0 = kS0Bounds;

    IdmParams best;
    double best_objective = std::numeric_limits<double>::infinity();
    bool have_best = false;

    for (int round = 0; round < kRounds; ++round) {
        int samples = sample_budget / kRounds;
        if (round < sample_budget % kRounds) ++samples;
        for (int i = 0; i < samples; ++i) {
            IdmParams candidate;
            candidate.v0 = draw(v0);
            candidate.a_max = draw(amax);
            candidate.tau = draw(tau);
            candidate.b = draw(b);
            candidate.s0 = draw(s0);
            candidate.delta = 4.0;
            const double objective = idm_scene_objective(training_scenes, candidate);
            if (objective < best_objective) {
                best_objective = objective;
                best = candidate;
                have_best = true;
            }
        }
        if (!have_best) continue;
        auto shrink = [](Bounds current, const Bounds& global, double center) {
            const double half = (current.hi - current.lo) / 4.0;  // half the width
            return Bounds{std::max(global.lo, center - half), std::min(global.hi, center + half)};
        };
        v0 = shrink(v0, kV0Bounds, best.v0);
        amax = shrink(amax, kAmaxBounds, best.a_max);
        tau = shrink(tau, kTauBounds, best.tau);
        b = shrink(b, kBBounds, best.b);
        s0 = shrink(s0, kS0Bounds, best.s0);
    }
    return best;
}

void save_idm_params(const std::filesystem::path& path, const IdmParams& p) {
    std::string text;
    text += "v0=" + format_double(p.v0) + "\n";
    text += "a_max=" + format_double(p.a_max) + "\n";
    text += "tau=" + format_double(p.tau) + "\n";
    text += "b=" + format_double(p.b) + "\n";
    text += "s0=" + format_double(p.s0) + "\n";
    text += "delta=" + format_double(p.delta) + "\n";
    write_file(path, text);
}

IdmParams load_idm_params(const std::filesystem::path& path) {
    const auto kv = read_key_value_file(path);
    IdmParams p;
    auto need = [&kv, &path](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) {
            throw std::runtime_error(path.string() + ": missing key '" + std::string(key) + "'");
        }
        return parse_double(it->second, key);
    };
    p.v0 = need("v0");
    p.a_max = need("a_max");
    p.tau = need("tau");
    p.b = need("b");
    p.s0 = need("s0");
    if (auto it = kv.find("delta"); it != kv.end()) p.delta = parse_double(it->second, "delta");
    p.validate();
    return p;
}

}  // namespace trajgnn
