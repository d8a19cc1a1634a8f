#include "trajgnn/scene.hpp"

#include <stdexcept>
#include <string>

namespace trajgnn {

SceneFrame last_observed_frame(const PredictionWindow& window) {
    SceneFrame frame;
    frame.timestamp = window.t0;
    for (const WindowVehicle& v : window.vehicles) {
        if (!v.history_complete()) {
            throw std::invalid_argument("vehicle " + std::to_string(v.vehicle_id) +
                                        " lacks history samples in window " +
                                        std::to_string(window.window_id));
        }
        const SceneSample& s = *v.samples[kHistorySamples - 1];
        frame.states.push_back(VehicleState{v.vehicle_id, s.x, s.y, s.vx, s.vy, s.lane_id});
    }
    return frame;
}

std::vector<int> loss_masked_rows(const PredictionWindow& window) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < window.vehicles.size(); ++i) {
        if (window.vehicles[i].loss_mask) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

}  // namespace trajgnn
