#include <cmath>

#include "doctest.h"
#include "lqrl/actor_critic.hpp"
#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/experiments.hpp"
#include "lqrl/parallel.hpp"

using namespace lqrl;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

double ref1_eps() {
    const auto m = ref1();
    return 0.05 * (0.6625 - cost(m, riccati(m).K_star));
}

}  // namespace

TEST_CASE("zero-length trajectory gives a zero estimate") {
    const auto model = ref1();
    const auto critic = value_params(model, m1(-0.5));
    for (std::uint64_t s = 0; s < 20; ++s)
        CHECK(ac_gradient_estimate(model, m1(-0.5), critic, rollout(model, m1(-0.5), 0, s)).G.norm() == 0.0);
}

TEST_CASE("estimator written out by hand") {
    const auto model = ref1();
    const Mat K = m1(-0.3);
    const ValueParams critic{0.3, m1(1.7)};
    const auto traj = rollout(model, K, 5, 8);
    auto V = [&](double x) { return 0.3 + 1.7 * x * x; };
    double G = 0.0;
    for (int t = 0; t <= 5; ++t) {
        const double x = traj.X(0, t);
        const double td = traj.c(t) + model.gamma * V(traj.X(0, t + 1)) - V(x);
        G += (traj.U(0, t) - K(0, 0) * x) * x * std::pow(model.gamma, t) * td;
    }
    G /= model.sigma * model.sigma;
    CHECK(ac_gradient_estimate(model, K, critic, traj).G(0, 0) == doctest::Approx(G).epsilon(1e-12));
    CHECK_THROWS_AS(ac_gradient_estimate(model, K, ValueParams::zero(2), traj), Error);
}

TEST_CASE("exact critic: mean estimate matches the gradient") {
    const auto model = ref1();
    const Mat K = m1(-0.3);
    const auto critic = value_params(model, K);
    const double grad = closed_loop_quantities(model, K).grad(0, 0);
    const Eigen::Index L = 40;
    const long reps = 100000;
    std::vector<double> g(reps);
    parallel_for(reps, [&](std::size_t r) {
        g[r] = ac_gradient_estimate(model, K, critic, rollout(model, K, L, derive_seed(31, r))).G(0, 0);
    });
    const auto s = summarize(g);
    CHECK(std::abs(s.mean - grad) <= 3 * s.std_error + std::pow(model.gamma, L + 1));
}

TEST_CASE("critic perturbation shifts the mean linearly") {
    const auto model = ref1();
    const auto lin = ac_bias_linearity(model, m1(-0.3), m1(1.0), 60, {0.0, 1e-3, 1e-2, 1e-1}, 20000, 4);
    CHECK(lin.fit.r2 >= 0.99);
    CHECK(std::abs(lin.fit.slope - lin.predicted_slope) <= 0.05 * std::abs(lin.predicted_slope));
}

TEST_CASE("length presets") {
    const auto model = ref1();
    const double eps = ref1_eps();
    int L = 0;
    while (std::pow(0.9, L + 1) / 0.1 > std::sqrt(0.1 * eps)) ++L;
    CHECK(ac_trajectory_length(model, AcLengthPreset::Threshold, eps, 0.1, 1.0, 0) == L);
    CHECK(L == 60);
    CHECK(ac_trajectory_length(model, AcLengthPreset::Table1, eps, 0.1, 1.0, 0) == 10000);
    CHECK(ac_trajectory_length(model, AcLengthPreset::Fixed, eps, 0.1, 1.0, 17) == 17);
}

TEST_CASE("oracle critic from the optimum stays in a diffusion band") {
    const auto model = ref1();
    const Mat Ks = riccati(model).K_star;
    AcConfig cfg;
    cfg.critic_mode = CriticMode::Oracle;
    cfg.T = 3000;
    cfg.L = 40;
    cfg.alpha = 1e-2;
    cfg.seed = 2;
    const double m2 = ac_second_moment(model, Ks, value_params(model, Ks), cfg.L, 5000, 1);
    const auto rep = run_actor_critic(model, Ks, cfg);
    double worst = 0.0;
    for (const auto& it : rep.history) worst = std::max(worst, it.gap);
    CHECK(worst <= cfg.alpha * m2);
}

TEST_CASE("learned critic run reaches the target gap") {
    AcConfig cfg;
    cfg.critic_mode = CriticMode::Learned;
    cfg.critic.step_size = StepSizeMode::Fixed;
    cfg.critic.alpha = 1.0;
    cfg.critic.steps = 10000;
    cfg.critic.history_stride = cfg.critic.steps;
    cfg.step_rule = StepRule::PaperSchedule;
    cfg.length_preset = AcLengthPreset::Threshold;
    cfg.epsilon = ref1_eps();
    cfg.paper_T = true;
    cfg.c_alpha = 1e-2 / ac_paper_alpha(ref1(), cfg.epsilon, cfg.delta, 60, 1.0);
    cfg.seed = 1;
    const auto rep = run_actor_critic(ref1(), m1(-0.5), cfg);
    CHECK(rep.L == 60);
    CHECK(rep.alpha == doctest::Approx(1e-2));
    CHECK(rep.final_gap <= cfg.epsilon);
    CHECK(rep.critic_transitions > 0);
    CHECK(rep.transitions >= rep.critic_transitions);
}

TEST_CASE("variance comparison") {
    const auto model = ref1();
    const auto zero = variance_comparison(model, m1(-0.5), 0, 1000, 1);
    CHECK(zero.pg_var == 0.0);
    CHECK(zero.ac_var == 0.0);

    const auto row = variance_comparison(model, m1(-0.5), 40, 10000, 2);
    CHECK(row.ac_lower_95);
    CHECK(row.ac_var < row.pg_var);

    const auto rep = compare_over_lengths(model, m1(-0.5), {10, 20, 40, 80}, 10000, 3);
    CHECK(rep.pg_fit.slope <= 3.0);
    CHECK(rep.ac_fit.slope <= 1.2);
}
