#pragma once

// Shared outer loop of the sampled-gradient methods (policy gradient and actor-critic).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/policy_gradient.hpp"

namespace lqrl::detail {

struct DescentSettings {
    long T = 0;
    double alpha = 0.0;
    double epsilon = 0.0;
    double delta = 0.1;
    double M_G = 0.0;
    long record_stride = 1;
    double J_star = 0.0;
    double delta0 = 0.0;
};

/// estimate(K, iteration, G) fills G and returns the number of transitions it sampled.
using GradientOracle = std::function<long(const Mat&, long, Mat&)>;

inline void run_descent(const LqrModel& model, const Mat& K0, const DescentSettings& s,
                        const GradientOracle& estimate, PgReport& rep) {
    rep.J_star = s.J_star;
    rep.delta0 = s.delta0;
    rep.alpha = s.alpha;
    rep.T = s.T;
    const double stop_gap = 10.0 * std::max(s.delta0, 1e-9 * (1.0 + s.J_star)) / s.delta;

    Mat K = K0;
    Mat G(model.d(), model.n());
    double J = cost(model, K);
    rep.history.push_back({0, J, J - s.J_star, 0.0, false});
    if (s.epsilon > 0.0 && J - s.J_star <= s.epsilon) {
        rep.first_hit_iter = 0;
        rep.first_hit_transitions = rep.transitions;
    }
    for (long it = 1; it <= s.T; ++it) {
        try {
            rep.transitions += estimate(K, it, G);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NumericalOverflow) throw;
            rep.left_domain = true;
            rep.exit_reason = "IterateLeftDomain";
            break;
        }
        const double gnorm = G.norm();
        const bool guard = s.M_G > 0.0 && gnorm > s.M_G;
        if (guard) ++rep.guard_events;
        K.noalias() -= s.alpha * G;
        if (!K.allFinite() || classify_policy(model, K) == Feasibility::Infeasible) {
            rep.history.push_back({it, INFINITY, INFINITY, gnorm, guard});
            rep.left_domain = true;
            rep.exit_reason = "IterateLeftDomain";
            break;
        }
        J = cost(model, K);
        const double gap = J - s.J_star;
        if (s.epsilon > 0.0 && rep.first_hit_iter < 0 && gap <= s.epsilon) {
            rep.first_hit_iter = it;
            rep.first_hit_transitions = rep.transitions;
        }
        const bool stop = gap > stop_gap;
        if (it % s.record_stride == 0 || it == s.T || guard || stop)
            rep.history.push_back({it, J, gap, gnorm, guard});
        if (stop) {
            rep.exit_reason = "StoppingTime";
            break;
        }
    }
    rep.K_final = K;
    rep.final_gap = rep.history.back().gap;
}

}  // namespace lqrl::detail
