#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "trajgnn/optim.hpp"
#include "trajgnn/tape.hpp"
#include "trajgnn/tensor.hpp"

using namespace trajgnn;

TEST_CASE("matmul identity and zero cases") {
    const Tensor eye = Tensor::row_major(2, 2, {1, 0, 0, 1});
    const Tensor b = Tensor::row_major(2, 3, {1, 2, 3, 4, 5, 6});
    const Tensor ib = matmul(eye, b);
    for (std::size_t i = 0; i < b.numel(); ++i) CHECK(ib.data[i] == b.data[i]);

    const Tensor z = Tensor::zeros({2, 3});
    const Tensor any = Tensor::row_major(3, 4, std::vector<double>(12, 7.5));
    const Tensor za = matmul(z, any);
    CHECK(za.rows() == 2);
    CHECK(za.cols() == 4);
    for (double v : za.data) CHECK(v == 0.0);
}

TEST_CASE("matmul hand-computed product") {
    const Tensor a = Tensor::row_major(2, 2, {1, 2, 3, 4});
    const Tensor b = Tensor::row_major(2, 2, {5, 6, 7, 8});
    const Tensor c = matmul(a, b);
    CHECK(c.data == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch names both shapes") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), std::invalid_argument);
    try {
        matmul(a, b);
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("activations") {
    const Tensor x = Tensor::vector({-1.0, 2.0, 0.0});
    const Tensor r = relu(x);
    CHECK(r.data == std::vector<double>{0.0, 2.0, 0.0});
    const Tensor l = leaky_relu(Tensor::vector({-1.0}), 0.2);
    CHECK(l.data[0] == doctest::Approx(-0.2));
    CHECK_THROWS_AS(leaky_relu(x, 1.5), std::invalid_argument);
}

TEST_CASE("segment_softmax examples") {
    CHECK(segment_softmax({3.7}, {0})[0] == doctest::Approx(1.0));

    const auto equal = segment_softmax({1.0, 1.0}, {0, 0});
    CHECK(equal[0] == doctest::Approx(0.5));
    CHECK(equal[1] == doctest::Approx(0.5));

    const auto forced = segment_softmax({0.0, std::log(3.0)}, {0, 0});
    CHECK(forced[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(forced[1] == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(segment_softmax({}, {}), std::invalid_argument);
}

TEST_CASE("segment_softmax sums to one per segment") {
    std::mt19937_64 rng(11);
    std::vector<double> logits;
    std::vector<int> segments;
    for (int i = 0; i < 64; ++i) {
        logits.push_back(200.0 * (uniform01(rng()) - 0.5));  // large logits on purpose
        segments.push_back(static_cast<int>(uniform01(rng()) * 7));
    }
    const auto probs = segment_softmax(logits, segments);
    std::vector<double> sums(8, 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        CHECK(probs[i] >= 0.0);
        CHECK(probs[i] <= 1.0);
        sums[segments[i]] += probs[i];
    }
    for (int s = 0; s < 8; ++s) {
        if (sums[s] != 0.0) CHECK(std::abs(sums[s] - 1.0) < 1e-12);
    }
}

TEST_CASE("mse_loss examples") {
    const Tensor a = Tensor::vector({1.0, 2.0, 3.0});
    CHECK(mse_loss(a, a) == 0.0);
    const Tensor b = Tensor::vector({2.0, 3.0, 4.0});
    CHECK(mse_loss(b, a) == doctest::Approx(1.0));
    CHECK(mse_loss(Tensor::vector({0.0, 0.0}), Tensor::vector({3.0, 4.0})) ==
          doctest::Approx(12.5));
    CHECK_THROWS_AS(mse_loss(a, Tensor::vector({1.0})), std::invalid_argument);
}

TEST_CASE("glorot_init bounds and determinism") {
    const double limit = std::sqrt(6.0 / 32.0);
    const Tensor t = glorot_init(16, 16, 42);
    for (double v : t.data) {
        CHECK(v <= limit);
        CHECK(v >= -limit);
    }
    const Tensor t2 = glorot_init(16, 16, 42);
    CHECK(t.data == t2.data);
    CHECK(glorot_init(16, 16, 43).data != t.data);
    CHECK_THROWS_AS(glorot_init(0, 4, 1), std::invalid_argument);
}

TEST_CASE("glorot_init sample mean near zero") {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; count < 100000; ++seed) {
        const Tensor t = glorot_init(16, 16, seed);
        for (double v : t.data) sum += v;
        count += t.numel();
    }
    CHECK(std::abs(sum / static_cast<double>(count)) < 0.01);
}

TEST_CASE("adam zero gradient is identity") {
    Param p(Tensor::vector({1.0, -2.0, 3.0}));
    std::vector<Param*> params{&p};
    AdamState state = AdamState::for_params(params);
    adam_step(params, state);
    CHECK(p.value.data == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(state.step_count == 1);
}

TEST_CASE("adam first and second step with unit gradient") {
    Param p(Tensor::vector({1.0}));
    std::vector<Param*> params{&p};
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    AdamState state = AdamState::for_params(params, cfg);

    p.grad.data[0] = 1.0;
    adam_step(params, state);
    const double expected_first = 1.0 - 0.1 / (1.0 + 1e-8);
    CHECK(p.value.data[0] == doctest::Approx(expected_first).epsilon(1e-12));

    p.grad.data[0] = 1.0;  // grad not cleared by the optimizer
    adam_step(params, state);
    CHECK(std::abs(1.0 - p.value.data[0] - 0.2) < 1e-6);
}

TEST_CASE("adam rejects uninitialized state") {
    Param p(Tensor::vector({1.0}));
    std::vector<Param*> params{&p};
    AdamState empty;
    CHECK_THROWS_AS(adam_step(params, empty), std::logic_error);
}

TEST_CASE("zero_grad clears exactly") {
    Param p(Tensor::vector({1.0, 2.0}));
    p.grad.data = {0.5, -0.25};
    p.zero_grad();
    CHECK(p.grad.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("clip_global_norm") {
    Param p(Tensor::vector({0.0, 0.0}));
    p.grad.data = {3.0, 4.0};
    std::vector<Param*> params{&p};
    const double norm = clip_global_norm(params, 5.0);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(p.grad.data[0] == doctest::Approx(3.0));  // at the limit, unchanged

    p.grad.data = {6.0, 8.0};
    clip_global_norm(params, 5.0);
    CHECK(std::hypot(p.grad.data[0], p.grad.data[1]) == doctest::Approx(5.0));
}

TEST_CASE("tape matmul backward matches hand derivation") {
    Param w(Tensor::row_major(2, 2, {1, 2, 3, 4}));
    Tape tape;
    const Tape::Id x = tape.input(Tensor::row_major(1, 2, {5, 6}));
    const Tape::Id y = tape.matmul(x, tape.param(w));
    const Tape::Id loss = tape.mse(y, Tensor::zeros({1, 2}));
    tape.backward(loss);
    // y = [23, 34]; dL/dy = y; dL/dw = x^T * dL/dy.
    CHECK(tape.value(y).data == std::vector<double>{23, 34});
    CHECK(w.grad.data[0] == doctest::Approx(5 * 23.0));
    CHECK(w.grad.data[1] == doctest::Approx(5 * 34.0));
    CHECK(w.grad.data[2] == doctest::Approx(6 * 23.0));
    CHECK(w.grad.data[3] == doctest::Approx(6 * 34.0));
}

TEST_CASE("gradients accumulate across backward passes until zero_grad") {
    Param w(Tensor::row_major(1, 1, {2.0}));
    auto run = [&w]() {
        Tape tape;
        const Tape::Id y = tape.matmul(tape.input(Tensor::row_major(1, 1, {1.0})),
                                       tape.param(w));
        const Tape::Id loss = tape.mse(y, Tensor::zeros({1, 1}));
        tape.backward(loss);
    };
    run();
    const double once = w.grad.data[0];
    run();
    CHECK(w.grad.data[0] == doctest::Approx(2.0 * once));
    w.zero_grad();
    CHECK(w.grad.data[0] == 0.0);
}

TEST_CASE("finite_diff_check on a linear objective") {
    Param p(Tensor::row_major(1, 3, {0.5, -1.0, 2.0}));
    const Tensor coeffs = Tensor::row_major(3, 1, {2.0, -3.0, 0.25});

    GradCheckTarget target;
    target.params = {&p};
    auto build = [&](bool grad) {
        Tape tape;
        const Tape::Id out = tape.matmul(tape.param(p), tape.input(coeffs));
        if (grad) tape.backward(out);
        return tape.value(out).data[0];
    };
    target.value = [&]() { return build(false); };
    target.value_and_grad = [&]() { return build(true); };
    CHECK(finite_diff_check(target, 1e-5) < 1e-10);
}

TEST_CASE("finite_diff_check on sum of squares") {
    Param p(Tensor::row_major(1, 4, {0.3, -0.8, 1.2, 2.5}));
    GradCheckTarget target;
    target.params = {&p};
    auto build = [&](bool grad) {
        Tape tape;
        const Tape::Id loss = tape.mse(tape.param(p), Tensor::zeros({1, 4}));
        if (grad) tape.backward(loss);
        return tape.value(loss).data[0];
    };
    target.value = [&]() { return build(false); };
    target.value_and_grad = [&]() { return build(true); };
    CHECK(finite_diff_check(target, 1e-5) < 1e-6);
}

TEST_CASE("finite_diff_check flags a corrupted gradient") {
    Param p(Tensor::row_major(1, 2, {0.7, -0.4}));
    GradCheckTarget target;
    target.params = {&p};
    target.value = [&]() {
        Tape tape;
        const Tape::Id loss = tape.mse(tape.param(p), Tensor::zeros({1, 2}));
        return tape.value(loss).data[0];
    };
    target.value_and_grad = [&]() {
        Tape tape;
        const Tape::Id loss = tape.mse(tape.param(p), Tensor::zeros({1, 2}));
        tape.backward(loss);
        for (double& g : p.grad.data) g *= 2.0;  // deliberate corruption
        return tape.value(loss).data[0];
    };
    const double err = finite_diff_check(target, 1e-5);
    CHECK(err > 0.9);
    CHECK(err < 1.1);
}

TEST_CASE("tape segment ops backward via finite differences") {
    // Small attention-like chain: logits from params, softmax per segment,
    // weighted row sum.
    Param logits(Tensor::vector({0.3, -0.5, 1.1, 0.2, -0.9}));
    Param rows(Tensor::row_major(5, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    const std::vector<int> segments{0, 0, 1, 1, 1};
    const Tensor target_rows = Tensor::row_major(2, 2, {1.0, 0.0, 0.0, 1.0});

    GradCheckTarget target;
    target.params = {&logits, &rows};
    auto build = [&](bool grad) {
        Tape tape;
        const Tape::Id alpha = tape.segment_softmax(tape.param(logits), segments);
        const Tape::Id scaled = tape.scale_rows(tape.param(rows), alpha);
        const Tape::Id agg = tape.segment_sum_rows(scaled, segments, 2);
        const Tape::Id loss = tape.mse(agg, target_rows);
        if (grad) tape.backward(loss);
        return tape.value(loss).data[0];
    };
    target.value = [&]() { return build(false); };
    target.value_and_grad = [&]() { return build(true); };
    CHECK(finite_diff_check(target, 1e-6) < 1e-7);
}
