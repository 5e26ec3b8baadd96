#include "lqrl/policy_gradient.hpp"

#include <cmath>

#include "descent.hpp"
#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/rng.hpp"

namespace lqrl {

void check_trajectory_policy(const Mat& K, const Trajectory& traj) {
    if (traj.K.rows() != K.rows() || traj.K.cols() != K.cols() || traj.K != K)
        throw Error(ErrorCode::PolicyMismatch, "trajectory was generated under a different gain");
}

void pg_gradient_into(const LqrModel& model, const Trajectory& traj, Mat& G) {
    const auto L = traj.L();
    G.setZero(traj.K.rows(), traj.K.cols());
    // tail = sum_{k>=t} gamma^k c_k, accumulated backwards.
    double disc = std::pow(model.gamma, static_cast<double>(L));
    double tail = 0.0;
    for (Eigen::Index t = L; t >= 0; --t) {
        tail += disc * traj.c(t);
        disc /= model.gamma;
        G.noalias() += tail * (traj.U.col(t) - traj.K * traj.X.col(t)) * traj.X.col(t).transpose();
    }
    G /= model.sigma * model.sigma;
}

GradientEstimate pg_gradient_estimate(const LqrModel& model, const Mat& K, const Trajectory& traj) {
    check_trajectory_policy(K, traj);
    GradientEstimate est;
    est.L = traj.L();
    est.seed = traj.seed;
    pg_gradient_into(model, traj, est.G);
    return est;
}

void PgConfig::validate() const {
    if (T < 0) throw Error(ErrorCode::ConfigInvalid, "T must be >= 0");
    if (L < 0) throw Error(ErrorCode::ConfigInvalid, "L must be >= 0");
    if (batch < 1) throw Error(ErrorCode::ConfigInvalid, "batch must be >= 1");
    if (record_stride < 1) throw Error(ErrorCode::ConfigInvalid, "record stride must be >= 1");
    if (step_rule == StepRule::Fixed && !(alpha > 0.0))
        throw Error(ErrorCode::ConfigInvalid, "fixed step size must be > 0");
    if (step_rule != StepRule::Fixed && !(epsilon > 0.0 && delta > 0.0 && delta < 1.0))
        throw Error(ErrorCode::ConfigInvalid, "schedules need epsilon > 0 and 0 < delta < 1");
    if ((paper_T || paper_L) && !(epsilon > 0.0 && delta > 0.0 && delta < 1.0))
        throw Error(ErrorCode::ConfigInvalid, "paper T/L need epsilon > 0 and 0 < delta < 1");
    if (step_rule == StepRule::SecondMoment && pilot_reps < 2)
        throw Error(ErrorCode::ConfigInvalid, "pilot_reps must be >= 2");
}

Eigen::Index pg_trajectory_length(const LqrModel& model, const Mat& K, double eps, double delta,
                                  double c_L) {
    const double rho = spectral_radius(model.closed_loop(K));
    const auto cert = stability_certificate(model, K, 0.5 * (1.0 + rho));
    const double factor = cert.Gamma * cert.Gamma / (1.0 - cert.rho_bar * cert.rho_bar) + 1.0 / (1.0 - model.gamma);
    const double target = c_L * std::sqrt(delta * eps / static_cast<double>(model.n()));
    // smallest L with gamma^{L+1} factor <= target
    const double need = std::log(target / factor) / std::log(model.gamma) - 1.0;
    return std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(need)));
}

bool schedule_tolerance_ok(double delta0, double eps, double delta) {
    const double lg = std::log(120.0 * delta0);
    const double cap = lg > 0.0 ? std::min(1.0, 10.0 * delta0 / (3.0 * lg)) : 1.0;
    return delta * eps < cap;
}

double pg_paper_alpha(const LqrModel& model, double eps, double delta, Eigen::Index L, double c_alpha) {
    const double Ld = static_cast<double>(std::max<Eigen::Index>(L, 1));
    return c_alpha * delta * eps * (1.0 - model.gamma * model.gamma) * model.sigma * model.sigma /
           (Ld * Ld * Ld * static_cast<double>(model.d()));
}

double pg_second_moment(const LqrModel& model, const Mat& K, Eigen::Index L, long reps, std::uint64_t seed) {
    Simulator sim(model, K);
    Trajectory traj;
    Mat G;
    double acc = 0.0;
    for (long r = 0; r < reps; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        sim.rollout(traj, L, rng, Start::zero());
        pg_gradient_into(model, traj, G);
        acc += G.squaredNorm();
    }
    return acc / static_cast<double>(reps);
}

PgReport run_policy_gradient(const LqrModel& model, const Mat& K0, const PgConfig& cfg) {
    cfg.validate();
    check_gain_shape(model, K0);
    if (classify_policy(model, K0) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "PG needs a stable initial gain");

    PgReport rep;
    const double J_star = cost(model, riccati(model).K_star);
    const double delta0 = cost(model, K0) - J_star;
    const double eps = cfg.epsilon;
    rep.L = cfg.paper_L ? pg_trajectory_length(model, K0, eps, cfg.delta, cfg.c_L) : cfg.L;
    rep.extra_paper = cfg.batch > 1 || cfg.step_rule == StepRule::SecondMoment;

    double alpha = cfg.alpha;
    if (cfg.step_rule == StepRule::PaperSchedule) {
        alpha = pg_paper_alpha(model, eps, cfg.delta, rep.L, cfg.c_alpha);
    } else if (cfg.step_rule == StepRule::SecondMoment) {
        const double m2 = pg_second_moment(model, K0, rep.L, cfg.pilot_reps, derive_seed(cfg.seed, ~0ULL));
        rep.pilot_transitions = cfg.pilot_reps * (rep.L + 1);
        rep.transitions = rep.pilot_transitions;
        alpha = cfg.c_alpha * cfg.delta * eps / m2;
    }
    long T = cfg.T;
    if (cfg.paper_T) {
        const double ratio = 120.0 * delta0 / (cfg.delta * eps);
        const double T_paper = std::ceil(cfg.c_T / alpha * std::log(std::max(ratio, 1.0)));
        if (!(T_paper <= static_cast<double>(cfg.max_T)))
            throw Error(ErrorCode::ConfigInvalid, "schedule asks for T = " + std::to_string(T_paper) +
                                                      " iterations, above max_T; raise c_alpha or max_T");
        T = static_cast<long>(T_paper);
    }

    detail::DescentSettings s{T, alpha, eps, cfg.delta, cfg.M_G, cfg.record_stride, J_star, delta0};
    Simulator sim(model, K0);
    Trajectory traj;
    Mat Gb;
    const long per_rollout = static_cast<long>(rep.L) + 1;
    detail::run_descent(
        model, K0, s,
        [&](const Mat& K, long it, Mat& G) -> long {
            if (cfg.oracle_gradient) {
                G = closed_loop_quantities(model, K).grad;
                return 0;
            }
            sim.set_gain(K);
            G.setZero(model.d(), model.n());
            for (int b = 0; b < cfg.batch; ++b) {
                Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it) * cfg.batch + b));
                sim.rollout(traj, rep.L, rng, Start::zero());
                pg_gradient_into(model, traj, Gb);
                G += Gb;
            }
            G /= static_cast<double>(cfg.batch);
            return per_rollout * cfg.batch;
        },
        rep);
    return rep;
}

}  // namespace lqrl
