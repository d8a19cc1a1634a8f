#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "trajgnn/scene.hpp"

namespace trajgnn {

/// Intelligent Driver Model parameters; all strictly positive.
struct IdmParams {
    double v0 = 17.8;    // desired velocity [m/s]
    double a_max = 0.76; // maximum acceleration [m/s^2]
    double tau = 0.92;   // time gap [s]
    double b = 3.81;     // comfortable deceleration [m/s^2]
    double s0 = 5.249;   // minimum distance [m]
    double delta = 4.0;  // acceleration exponent

    void validate() const;
};

struct RolloutConfig {
    double dt = 0.1;    // integration step [s]
    int horizon_s = 5;  // whole seconds, sampled at 1 Hz
};

/// Constant-velocity positions at 1 Hz: (x + k*vx, y + k*vy), k = 1..steps.
std::vector<std::array<double, 2>> cvm_predict(const VehicleState& state, int horizon_steps);

/// Free-road acceleration plus, when a leader is present, the interaction
/// term evaluated at gap s and closing speed dv (ego speed minus leader
/// speed). Requires s > 0 when a leader is present.
double idm_acceleration(double v, double s, double dv, bool leader_present,
                        const IdmParams& p);

/// One vehicle integrated under a per-agent parameter set; used by the joint
/// rollout and the synthetic-traffic generator.
struct IdmAgent {
    double x = 0.0;
    double y = 0.0;
    double v = 0.0;
    int lane_id = 1;
    IdmParams params;
};

/// One explicit-Euler step of all agents: accelerations are computed from a
/// common snapshot with leaders re-resolved as the nearest same-lane agent
/// ahead; gaps are floored at 0.1 m and speeds at 0.
void idm_joint_step(std::vector<IdmAgent>& agents, double dt);

/// Jointly integrates all vehicles from their last observed states, holding
/// lateral position fixed, and samples positions back at 1 Hz.
std::vector<std::vector<std::array<double, 2>>> idm_rollout(
    const std::vector<VehicleState>& states, const IdmParams& p, const RolloutConfig& cfg);

/// Mean displacement of the IDM rollout over the loss-masked vehicles of the
/// given scenes; the tuning objective.
double idm_scene_objective(const CanonicalSceneSet& scenes, const IdmParams& p);

/// Guided random search: the budget is spread over 10 rounds of uniform
/// sampling; after each round the bounds shrink by half around the incumbent
/// (clipped to the global bounds). Deterministic per seed.
IdmParams tune_idm(const CanonicalSceneSet& training_scenes, int sample_budget,
                   std::uint64_t seed);

void save_idm_params(const std::filesystem::path& path, const IdmParams& p);
IdmParams load_idm_params(const std::filesystem::path& path);

}  // namespace trajgnn
