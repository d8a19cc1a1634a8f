#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace trajgnn {

/// One vehicle's kinematic state at a single instant. x runs longitudinally
/// (increasing in driving direction), y laterally; lane ids start at 1.
struct VehicleState {
    std::int64_t vehicle_id = 0;
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    int lane_id = 1;
};

/// All vehicles co-present at one timestamp; vehicle ids are unique.
struct SceneFrame {
    double timestamp = 0.0;
    std::vector<VehicleState> states;
};

struct SceneSample {
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    int lane_id = 1;
};

inline constexpr int kWindowSamples = 10;
inline constexpr int kHistorySamples = 5;
inline constexpr int kFutureSamples = 5;

/// One vehicle inside a prediction window. Samples 1-5 (history) are always
/// present; future samples may be missing for context vehicles. loss_mask is
/// true only when all ten samples exist.
struct WindowVehicle {
    std::int64_t vehicle_id = 0;
    std::array<std::optional<SceneSample>, kWindowSamples> samples;
    bool loss_mask = false;

    bool history_complete() const {
        for (int i = 0; i < kHistorySamples; ++i) {
            if (!samples[i].has_value()) return false;
        }
        return true;
    }
    bool fully_present() const {
        for (const auto& s : samples) {
            if (!s.has_value()) return false;
        }
        return true;
    }
};

/// A 10-sample, 1 Hz scene slice: 5 observed samples and 5 to predict.
/// Vehicles are kept sorted by ascending vehicle_id; t0 is the timestamp of
/// the first future sample.
struct PredictionWindow {
    std::int64_t window_id = 0;
    int recording_id = 0;
    double t0 = 0.0;
    std::vector<WindowVehicle> vehicles;
};

using CanonicalSceneSet = std::vector<PredictionWindow>;

/// Scene frame at the last observed sample (sample 5); every listed vehicle
/// is present there.
SceneFrame last_observed_frame(const PredictionWindow& window);

/// Indices (in vehicle order) of the loss-masked vehicles.
std::vector<int> loss_masked_rows(const PredictionWindow& window);

}  // namespace trajgnn
