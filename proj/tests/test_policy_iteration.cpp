#include <cmath>

#include "doctest.h"
#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/experiments.hpp"
#include "lqrl/policy_iteration.hpp"

using namespace lqrl;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

// K' = -(R + g B^T P B)^{-1} g B^T P A with P the cost matrix of K
Mat closed_form_improvement(const LqrModel& m, const Mat& K) {
    const Mat P = closed_loop_quantities(m, K).P;
    const double g = m.gamma;
    return -(m.R + g * m.B.transpose() * P * m.B).ldlt().solve(g * m.B.transpose() * P * m.A);
}

}  // namespace

TEST_CASE("greedy improvement from Q blocks") {
    const auto model = ref1();
    CHECK(improve(q_params(model, m1(-0.5)))(0, 0) == doctest::Approx(-0.5625 / 2.125).epsilon(1e-14));
    CHECK(-0.5625 / 2.125 == doctest::Approx(-0.264705882));

    auto a0 = model;
    a0.A = m1(0.0);
    CHECK(improve(q_params(a0, m1(0.0))).norm() == 0.0);
    CHECK(riccati(a0).K_star.norm() == 0.0);

    for (int i = 0; i < 10; ++i) {
        const auto inst = random_instance(600 + i, 1 + i % 4, 1 + i % 2);
        const Mat a = improve(q_params(inst.model, inst.K));
        CHECK((a - closed_form_improvement(inst.model, inst.K)).norm() <= 1e-12 * (1 + a.norm()));
    }
}

TEST_CASE("singular Theta22 is refused") {
    QParams th{0.0, m1(1.0), m1(1.0), m1(0.0)};
    try {
        improve(th);
        FAIL("expected SingularTheta22");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularTheta22);
    }
}

TEST_CASE("Gauss-Newton form agrees with the Q form") {
    const auto model = ref1();
    const Mat Ks = riccati(model).K_star;
    CHECK((improve_exact(model, Ks) - Ks).norm() <= 1e-9);
    const Mat K1 = improve_exact(model, m1(-0.5));
    CHECK(K1(0, 0) == doctest::Approx(-0.264705882).epsilon(1e-8));
    CHECK(cost(model, K1) < 0.6625);

    for (int i = 0; i < 50; ++i) {
        const auto inst = random_instance(700 + i, 3, 2);
        const Mat a = improve_exact(inst.model, inst.K);
        const Mat b = improve(q_params(inst.model, inst.K));
        CHECK((a - b).norm() <= 1e-10 * (1 + b.norm()));
        CHECK(cost(inst.model, a) < cost(inst.model, inst.K));
    }
}

TEST_CASE("exact policy iteration from the optimum stays put") {
    const auto model = ref1();
    const Mat Ks = riccati(model).K_star;
    PiConfig cfg;
    cfg.T = 5;
    const auto rep = run_policy_iteration(model, Ks, cfg);
    for (const auto& it : rep.iterates) {
        CHECK((it.K - Ks).norm() <= 1e-9);
        CHECK(std::abs(it.gap) <= 1e-12);
    }
}

TEST_CASE("exact policy iteration meets the iteration bound") {
    auto check_instance = [](const LqrModel& m, const Mat& K0) {
        const double J_star = cost(m, riccati(m).K_star);
        const double eps = 1e-4 * (cost(m, K0) - J_star);
        PiConfig cfg;
        cfg.T = std::max(1, pi_iteration_bound(m, K0, eps));
        const auto rep = run_policy_iteration(m, K0, cfg);
        CHECK(rep.stop_reason == "Completed");
        CHECK(rep.final_gap() <= eps);
        CHECK(rep.contraction_violations == 0);
        CHECK_FALSE(rep.sublevel_exit);
        for (std::size_t t = 1; t < rep.iterates.size(); ++t)
            CHECK(rep.iterates[t].J <= rep.iterates[t - 1].J + 1e-12 * (1 + J_star));
    };
    check_instance(ref1(), m1(-0.5));
    for (int i = 0; i < 10; ++i) {
        const auto inst = random_instance(800 + i, 1 + i % 4, 1 + i % 2);
        check_instance(inst.model, inst.K);
    }
}

TEST_CASE("iteration bound grows with the discount factor") {
    int prev = 0;
    for (double g : {0.5, 0.7, 0.8, 0.9, 0.95}) {
        auto m = ref1();
        m.gamma = g;
        const double J_star = cost(m, riccati(m).K_star);
        const double delta0 = cost(m, m1(-0.5)) - J_star;
        const int bound = pi_iteration_bound(m, m1(-0.5), 1e-4 * delta0);
        CHECK(bound >= prev);
        CHECK(pi_steps_to_tolerance(m, m1(-0.5), 1e-4) <= bound);
        prev = bound;
    }
}

TEST_CASE("learned-Q policy iteration tracks the exact run") {
    const auto model = ref1();
    const Mat K0 = m1(-0.5);
    PiConfig exact;
    exact.T = 3;
    const auto e = run_policy_iteration(model, K0, exact);

    PiConfig learned = exact;
    learned.q_source = QSource::QTdLearn;
    learned.epsilon0 = 0.02;
    learned.td.step_size = StepSizeMode::Fixed;
    learned.td.alpha = 2.0;
    learned.td.steps = 1'000'000;
    learned.td.history_stride = learned.td.steps;
    learned.seed = 1;
    const auto l = run_policy_iteration(model, K0, learned);
    REQUIRE(l.stop_reason == "Completed");
    CHECK_FALSE(l.q_miss);
    for (std::size_t t = 0; t < l.iterates.size(); ++t) {
        CHECK(std::abs(l.iterates[t].gap - e.iterates[t].gap) <= learned.epsilon0);
        CHECK(l.iterates[t].q_err <= learned.epsilon0);
    }
    const auto env = pi_learned_envelope(model, K0, learned.epsilon0);
    REQUIRE(env.has_value());
    for (const auto& it : l.iterates) CHECK(it.gap <= env->at(it.t));
}

TEST_CASE("learned mode rejects a Q tolerance above the cap") {
    PiConfig cfg;
    cfg.q_source = QSource::QTdLearn;
    cfg.epsilon0 = 0.6;  // cap is ||R^-1|| / 2 = 0.5
    CHECK_THROWS_AS(run_policy_iteration(ref1(), m1(-0.5), cfg), Error);
}
