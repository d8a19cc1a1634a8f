#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "trajgnn/classical.hpp"
#include "trajgnn/datapipe.hpp"

using namespace trajgnn;

namespace {

VehicleState moving(double x, double y, double vx, double vy, int lane = 1,
                    std::int64_t id = 1) {
    VehicleState s;
    s.vehicle_id = id;
    s.x = x;
    s.y = y;
    s.vx = vx;
    s.vy = vy;
    s.lane_id = lane;
    return s;
}

IdmParams ngsim_params() {
    return IdmParams{17.8, 0.76, 0.92, 3.81, 5.249, 4.0};
}

}  // namespace

TEST_CASE("cvm_predict examples") {
    const auto still = cvm_predict(moving(3.0, -1.0, 0.0, 0.0), 5);
    for (const auto& p : still) {
        CHECK(p[0] == 3.0);
        CHECK(p[1] == -1.0);
    }

    const auto straight = cvm_predict(moving(0.0, 0.0, 10.0, 0.0), 5);
    for (int k = 0; k < 5; ++k) {
        CHECK(straight[k][0] == doctest::Approx(10.0 * (k + 1)));
        CHECK(straight[k][1] == 0.0);
    }

    const auto drift = cvm_predict(moving(0.0, 0.0, 10.0, 0.5), 5);
    for (int k = 0; k < 5; ++k) CHECK(drift[k][1] == doctest::Approx(0.5 * (k + 1)));

    CHECK_THROWS_AS(cvm_predict(moving(0, 0, 1, 0), 0), std::invalid_argument);
}

TEST_CASE("idm free-road acceleration endpoints") {
    const IdmParams p = ngsim_params();
    CHECK(idm_acceleration(p.v0, 1.0, 0.0, false, p) == 0.0);
    CHECK(idm_acceleration(0.0, 1.0, 0.0, false, p) == p.a_max);
}

TEST_CASE("idm acceleration matches direct formula evaluation") {
    const IdmParams p = ngsim_params();
    const double v = 10.0, s = 20.0, dv = 0.0;
    // independent evaluation of the two printed terms
    const double a_free = p.a_max * (1.0 - std::pow(v / p.v0, 4.0));
    const double a_int =
        -p.a_max * ((p.s0 + v * p.tau) / s + v * dv / (2.0 * s * std::sqrt(p.a_max * p.b)));
    CHECK(idm_acceleration(v, s, dv, true, p) == doctest::Approx(a_free + a_int).epsilon(1e-15));
    CHECK_THROWS_AS(idm_acceleration(v, 0.0, dv, true, p), std::invalid_argument);
    CHECK_THROWS_AS(idm_acceleration(v, -1.0, dv, true, p), std::invalid_argument);
}

TEST_CASE("idm acceleration non-increasing as the gap closes") {
    const IdmParams p = ngsim_params();
    double prev = idm_acceleration(12.0, 200.0, 1.5, true, p);
    for (double s = 190.0; s >= 2.0; s -= 2.0) {
        const double a = idm_acceleration(12.0, s, 1.5, true, p);
        CHECK(a <= prev + 1e-12);
        prev = a;
    }
}

TEST_CASE("idm rollout of a car at desired velocity is constant velocity") {
    IdmParams p = ngsim_params();
    const auto traj = idm_rollout({moving(0.0, 2.0, p.v0, 0.0)}, p, RolloutConfig{});
    for (int k = 0; k < 5; ++k) {
        CHECK(std::abs(traj[0][k][0] - p.v0 * (k + 1)) < 1e-9);
        CHECK(traj[0][k][1] == 2.0);
    }
}

TEST_CASE("idm rollout matches an independent Euler oracle from rest") {
    const IdmParams p = ngsim_params();
    const auto traj = idm_rollout({moving(5.0, 0.0, 0.0, 0.0)}, p, RolloutConfig{});

    // independent explicit-Euler integration at dt = 0.1
    double x = 5.0, v = 0.0;
    int sample = 0;
    for (int step = 1; step <= 50; ++step) {
        const double a = p.a_max * (1.0 - std::pow(v / p.v0, 4.0));
        x += v * 0.1;
        v = std::max(0.0, v + a * 0.1);
        if (step % 10 == 0) {
            CHECK(std::abs(traj[0][sample][0] - x) < 1e-9);
            ++sample;
        }
    }
    CHECK(sample == 5);
}

TEST_CASE("follower approaching a stationary leader brakes") {
    const IdmParams p = ngsim_params();
    const std::vector<VehicleState> states{moving(0.0, 0.0, 15.0, 0.0, 1, 1),
                                           moving(40.0, 0.0, 0.0, 0.0, 1, 2)};
    CHECK(idm_acceleration(15.0, 40.0, 15.0, true, p) < 0.0);
    const auto traj = idm_rollout(states, p, RolloutConfig{});
    // slower than constant velocity from the first sample on
    CHECK(traj[0][0][0] < 15.0);
    // leader stays at rest, lanes and lateral positions preserved
    CHECK(traj[1][4][0] == 40.0);
    for (int k = 0; k < 5; ++k) CHECK(traj[0][k][1] == 0.0);
}

TEST_CASE("idm rollout never yields negative speed") {
    const IdmParams p{10.0, 2.0, 1.0, 2.0, 2.0, 4.0};
    const std::vector<VehicleState> states{moving(0.0, 0.0, 30.0, 0.0, 1, 1),
                                           moving(8.0, 0.0, 0.0, 0.0, 1, 2)};
    const auto traj = idm_rollout(states, p, RolloutConfig{0.1, 10});
    double prev_x = 0.0;
    for (int k = 0; k < 10; ++k) {
        CHECK(traj[0][k][0] >= prev_x - 1e-12);  // x never moves backwards
        prev_x = traj[0][k][0];
    }
}

TEST_CASE("tune_idm degenerate budget and determinism") {
    SynthConfig synth;
    synth.seed = 4;
    synth.lanes = 1;
    synth.vehicles = 4;
    synth.length_m = 300.0;
    synth.duration_s = 20.0;
    synth.mode = SynthConfig::Mode::idm_interacting;
    const CanonicalSceneSet scenes =
        window_extract(smooth_and_differentiate(generate_synthetic(synth)));
    REQUIRE(!scenes.empty());

    const IdmParams single = tune_idm(scenes, 1, 9);
    const IdmParams again = tune_idm(scenes, 1, 9);
    CHECK(single.v0 == again.v0);
    CHECK(single.a_max == again.a_max);
    CHECK(single.tau == again.tau);

    CHECK_THROWS_AS(tune_idm({}, 10, 0), std::invalid_argument);
    CHECK_THROWS_AS(tune_idm(scenes, 0, 0), std::invalid_argument);
}

TEST_CASE("tune_idm recovers a known desired velocity") {
    SynthConfig synth;
    synth.seed = 11;
    synth.lanes = 2;
    synth.vehicles = 6;
    synth.length_m = 400.0;
    synth.duration_s = 40.0;
    synth.mode = SynthConfig::Mode::idm_interacting;
    synth.v0_min = synth.v0_max = 30.0;
    synth.a_max_min = synth.a_max_max = 2.0;
    synth.tau_min = synth.tau_max = 1.0;
    synth.b_min = synth.b_max = 3.0;
    synth.s0_min = synth.s0_max = 3.0;
    const CanonicalSceneSet scenes =
        window_extract(smooth_and_differentiate(generate_synthetic(synth)));
    REQUIRE(!scenes.empty());

    const IdmParams tuned = tune_idm(scenes, 3000, 1);
    CHECK(tuned.v0 == doctest::Approx(30.0).epsilon(0.10));
}

TEST_CASE("idm parameter file round-trip") {
    const auto path = std::filesystem::temp_directory_path() / "trajgnn_idm_test.txt";
    const IdmParams p{58.87, 0.14, 0.12, 12.17, 14.46, 4.0};
    save_idm_params(path, p);
    const IdmParams q = load_idm_params(path);
    CHECK(q.v0 == p.v0);
    CHECK(q.a_max == p.a_max);
    CHECK(q.tau == p.tau);
    CHECK(q.b == p.b);
    CHECK(q.s0 == p.s0);
    CHECK(q.delta == p.delta);
    std::filesystem::remove(path);
}
