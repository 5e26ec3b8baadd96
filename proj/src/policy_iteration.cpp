#include "lqrl/policy_iteration.hpp"

#include <cmath>
#include <limits>

#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/rng.hpp"

namespace lqrl {

Mat improve(const QParams& theta, double* condition) {
    const Vec ev = sym_eigenvalues(theta.Theta22).cwiseAbs();
    const double cond = ev.minCoeff() > 0.0 ? ev.maxCoeff() / ev.minCoeff() : std::numeric_limits<double>::infinity();
    if (condition) *condition = cond;
    if (!(cond <= kMaxTheta22Condition))
        throw Error(ErrorCode::SingularTheta22, "cond(Theta22) = " + std::to_string(cond));
    return -symmetrize(theta.Theta22).ldlt().solve(theta.Theta21());
}

Mat improve_exact(const LqrModel& model, const Mat& K) {
    const auto q = closed_loop_quantities(model, K);
    if (q.feasibility != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "exact improvement needs a stable gain");
    const Mat H = model.R + model.gamma * model.B.transpose() * q.P * model.B;
    const Mat right = q.Sigma.ldlt().solve(q.grad.transpose()).transpose();  // grad Sigma^{-1}
    return K - 0.5 * H.ldlt().solve(right);
}

void PiConfig::validate(const LqrModel& model) const {
    if (T < 1) throw Error(ErrorCode::ConfigInvalid, "PI needs T >= 1");
    if (epsilon0 < 0.0) throw Error(ErrorCode::ConfigInvalid, "epsilon0 must be >= 0");
    if (q_source == QSource::QTdLearn) {
        const double cap = 0.5 * norm2(model.R.inverse());
        if (epsilon0 > cap)
            throw Error(ErrorCode::ConfigInvalid,
                        "epsilon0 exceeds ||R^-1||_2 / 2 = " + std::to_string(cap));
        td.validate();
    }
}

double pi_gap_floor(double J_star) { return 1e-12 * (1.0 + std::abs(J_star)); }

PiReport run_policy_iteration(const LqrModel& model, const Mat& K0, const PiConfig& cfg) {
    cfg.validate(model);
    if (classify_policy(model, K0) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "PI needs a stable initial gain");

    const auto ric = riccati(model);
    PiReport rep;
    rep.J_star = cost(model, ric.K_star);
    rep.alpha_c = model.gamma * model.gamma * sigma_min(model.D_omega_tilde()) /
                  norm2(closed_loop_quantities(model, ric.K_star).Sigma);
    rep.learned = cfg.q_source == QSource::QTdLearn;
    const double floor = pi_gap_floor(rep.J_star);

    PiIterate it;
    it.t = 0;
    it.K = K0;
    it.J = cost(model, K0);
    it.gap = it.J - rep.J_star;
    it.ratio = std::numeric_limits<double>::quiet_NaN();
    rep.iterates.push_back(it);
    const double delta0 = it.gap;

    for (int t = 1; t <= cfg.T; ++t) {
        const PiIterate& prev = rep.iterates.back();
        PiIterate next;
        next.t = t;
        QParams theta;
        if (rep.learned) {
            TdConfig td = cfg.td;
            td.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(t));
            const auto learned = q_td_learn(model, prev.K, td);
            theta = learned.theta;
            const QParams star = q_params(model, prev.K);
            next.q_err = (theta.block() - star.block()).norm();
            next.theta0_err = std::abs(theta.Theta0 - star.Theta0);
        } else {
            theta = q_params(model, prev.K);
        }
        next.K = improve(theta);
        next.feasibility = classify_policy(model, next.K);
        if (next.feasibility == Feasibility::Infeasible) {
            next.J = next.gap = std::numeric_limits<double>::infinity();
            next.ratio = std::numeric_limits<double>::quiet_NaN();
            rep.iterates.push_back(next);
            rep.left_domain = true;
            rep.stop_reason = "IterateLeftDomain";
            break;
        }
        next.J = cost(model, next.K);
        next.gap = next.J - rep.J_star;
        next.ratio = prev.gap > floor ? next.gap / prev.gap : std::numeric_limits<double>::quiet_NaN();
        if (!rep.learned && std::isfinite(next.ratio) && next.ratio > 1.0 - rep.alpha_c)
            ++rep.contraction_violations;
        if (cfg.gamma_guard && next.gap > 2.0 * delta0 + floor) rep.sublevel_exit = true;
        const bool stable = next.feasibility == Feasibility::Stable;
        rep.iterates.push_back(next);
        if (rep.learned && next.q_err > cfg.epsilon0) {
            rep.q_miss = true;
            if (cfg.stop_on_q_miss) {
                rep.stop_reason = "QEstimateMissedEpsilon0";
                break;
            }
        }
        if (!stable) {
            // Finite cost but not stable: Q evaluation is undefined from here on.
            rep.left_domain = true;
            rep.stop_reason = "IterateLeftDomain";
            break;
        }
    }
    if (rep.stop_reason.empty()) rep.stop_reason = "Completed";
    return rep;
}

int pi_iteration_bound(const LqrModel& model, const Mat& K0, double eps) {
    const auto ric = riccati(model);
    const double J_star = cost(model, ric.K_star);
    const double delta0 = cost(model, K0) - J_star;
    if (delta0 <= eps) return 0;
    const double s_norm = norm2(closed_loop_quantities(model, ric.K_star).Sigma);
    const double factor =
        2.0 * s_norm / (model.gamma * model.gamma * sigma_min(model.D_omega_tilde())) - 1.0;
    return static_cast<int>(std::ceil(factor * std::log(delta0 / eps)));
}

double PiLearnedEnvelope::at(int t) const {
    return std::pow((1.0 - alpha) / (1.0 - beta), t) * delta0 + beta / (alpha - beta) * J_star;
}

std::optional<PiLearnedEnvelope> pi_learned_envelope(const LqrModel& model, const Mat& K0, double eps0) {
    const auto ric = riccati(model);
    PiLearnedEnvelope env;
    env.J_star = cost(model, ric.K_star);
    env.delta0 = cost(model, K0) - env.J_star;
    const double Dmin = sigma_min(model.D_omega_tilde());
    env.alpha = model.gamma * model.gamma * Dmin / norm2(closed_loop_quantities(model, ric.K_star).Sigma);
    const double Rinv = norm2(model.R.inverse());
    const double C0 = 2.0 * Rinv * norm2(model.B) * norm2(model.A) / Dmin;
    const double J0 = cost(model, K0);
    // Iterates stay in {J <= 2 J(K0)}, hence the factor 2 on the J(K0) term.
    const double lead = 2.0 * C0 * (1.0 - model.gamma) * J0 + 2.0;
    env.beta = Rinv * lead * lead * eps0 * eps0 / sigma_min(model.S);
    if (env.beta >= env.alpha) return std::nullopt;
    return env;
}

}  // namespace lqrl
