#include "lqrl/actor_critic.hpp"

#include <cmath>
#include <vector>

#include "descent.hpp"
#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/parallel.hpp"
#include "lqrl/rng.hpp"

namespace lqrl {

void ac_gradient_into(const LqrModel& model, const ValueParams& critic, const Trajectory& traj, Mat& G) {
    const auto L = traj.L();
    G.setZero(traj.K.rows(), traj.K.cols());
    double disc = 1.0;
    double v_next = 0.0;
    double v_cur = critic.value(traj.X.col(0));
    for (Eigen::Index t = 0; t <= L; ++t) {
        v_next = critic.value(traj.X.col(t + 1));
        const double td = traj.c(t) + model.gamma * v_next - v_cur;
        G.noalias() += (disc * td) * (traj.U.col(t) - traj.K * traj.X.col(t)) * traj.X.col(t).transpose();
        disc *= model.gamma;
        v_cur = v_next;
    }
    G /= model.sigma * model.sigma;
}

GradientEstimate ac_gradient_estimate(const LqrModel& model, const Mat& K, const ValueParams& critic,
                                      const Trajectory& traj) {
    check_trajectory_policy(K, traj);
    if (traj.X.cols() < traj.c.size() + 1)
        throw Error(ErrorCode::TrajectoryTooShort, "the estimator needs the state after the last action");
    if (critic.Theta1.rows() != model.n() || critic.Theta1.cols() != model.n())
        throw Error(ErrorCode::DimensionMismatch, "critic has the wrong dimension");
    GradientEstimate est;
    est.L = traj.L();
    est.seed = traj.seed;
    ac_gradient_into(model, critic, traj, est.G);
    return est;
}

void AcConfig::validate() const {
    if (T < 0) throw Error(ErrorCode::ConfigInvalid, "T must be >= 0");
    if (L < 0) throw Error(ErrorCode::ConfigInvalid, "L must be >= 0");
    if (batch < 1) throw Error(ErrorCode::ConfigInvalid, "batch must be >= 1");
    if (critic_refresh < 1) throw Error(ErrorCode::ConfigInvalid, "critic refresh must be >= 1");
    if (record_stride < 1) throw Error(ErrorCode::ConfigInvalid, "record stride must be >= 1");
    if (step_rule == StepRule::Fixed && !(alpha > 0.0))
        throw Error(ErrorCode::ConfigInvalid, "fixed step size must be > 0");
    const bool needs_tolerance = step_rule != StepRule::Fixed || paper_T || length_preset == AcLengthPreset::Threshold;
    if (needs_tolerance && !(epsilon > 0.0 && delta > 0.0 && delta < 1.0))
        throw Error(ErrorCode::ConfigInvalid, "schedules need epsilon > 0 and 0 < delta < 1");
    if (critic_mode == CriticMode::Learned) critic.validate();
}

Eigen::Index ac_trajectory_length(const LqrModel& model, AcLengthPreset preset, double eps, double delta,
                                  double c_L, Eigen::Index fixed_L) {
    const double g = model.gamma;
    switch (preset) {
        case AcLengthPreset::Fixed: return fixed_L;
        case AcLengthPreset::Threshold: {
            const double target = c_L * std::sqrt(delta * eps / static_cast<double>(model.n()));
            const double need = std::log(target * (1.0 - g)) / std::log(g) - 1.0;
            return std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(need)));
        }
        case AcLengthPreset::Table1: {
            // guard ceil against round-off: 1/(1-0.9)^4 evaluates to 10000.000000000002
            const double raw = c_L / std::pow(1.0 - g, 4);
            return static_cast<Eigen::Index>(std::ceil(raw * (1.0 - 1e-12)));
        }
    }
    return fixed_L;
}

double ac_paper_alpha(const LqrModel& model, double eps, double delta, Eigen::Index L, double c_alpha) {
    const double Ld = static_cast<double>(std::max<Eigen::Index>(L, 1));
    return c_alpha * delta * eps * (1.0 - model.gamma * model.gamma) / (Ld * static_cast<double>(model.d()));
}

double ac_second_moment(const LqrModel& model, const Mat& K, const ValueParams& critic, Eigen::Index L,
                        long reps, std::uint64_t seed) {
    Simulator sim(model, K);
    Trajectory traj;
    Mat G;
    double acc = 0.0;
    for (long r = 0; r < reps; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        sim.rollout(traj, L, rng, Start::zero());
        ac_gradient_into(model, critic, traj, G);
        acc += G.squaredNorm();
    }
    return acc / static_cast<double>(reps);
}

namespace {

const char* preset_name(AcLengthPreset p) {
    switch (p) {
        case AcLengthPreset::Fixed: return "fixed";
        case AcLengthPreset::Threshold: return "threshold";
        case AcLengthPreset::Table1: return "table1";
    }
    return "fixed";
}

}  // namespace

AcReport run_actor_critic(const LqrModel& model, const Mat& K0, const AcConfig& cfg) {
    cfg.validate();
    check_gain_shape(model, K0);
    if (classify_policy(model, K0) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "AC needs a stable initial gain");

    AcReport rep;
    const double J_star = cost(model, riccati(model).K_star);
    const double delta0 = cost(model, K0) - J_star;
    const double eps = cfg.epsilon;
    rep.L = ac_trajectory_length(model, cfg.length_preset, eps, cfg.delta, cfg.c_L, cfg.L);
    rep.length_preset = preset_name(cfg.length_preset);
    rep.extra_paper = cfg.batch > 1 || cfg.critic_refresh > 1 || cfg.step_rule == StepRule::SecondMoment;

    // Critic for the current gain; refreshed per cfg.critic_refresh.
    ValueParams critic = ValueParams::zero(model.n());
    long refreshes = 0;
    auto refresh = [&](const Mat& K) -> long {
        if (classify_policy(model, K) != Feasibility::Stable)
            throw Error(ErrorCode::IterateLeftDomain, "critic refresh at an unstable gain");
        const ValueParams star = value_params(model, K);
        long used = 0;
        if (cfg.critic_mode == CriticMode::Oracle) {
            critic = star;
        } else {
            TdConfig td = cfg.critic;
            td.seed = derive_seed(cfg.seed ^ 0xac7c0ffeeULL, static_cast<std::uint64_t>(refreshes));
            critic = td_learn(model, K, td).theta;
            used = td.update == TdUpdate::Stochastic ? td.steps - 1 : 0;
        }
        ++refreshes;
        rep.critic_errors.push_back((critic - star).norm());
        rep.critic_transitions += used;
        return used;
    };

    double alpha = cfg.alpha;
    bool pilot_refreshed = false;
    if (cfg.step_rule == StepRule::PaperSchedule) {
        alpha = ac_paper_alpha(model, eps, cfg.delta, rep.L, cfg.c_alpha);
    } else if (cfg.step_rule == StepRule::SecondMoment) {
        rep.transitions += refresh(K0);
        pilot_refreshed = true;
        const double m2 = ac_second_moment(model, K0, critic, rep.L, cfg.pilot_reps, derive_seed(cfg.seed, ~0ULL));
        rep.pilot_transitions = cfg.pilot_reps * (rep.L + 1) + rep.transitions;
        rep.transitions = rep.pilot_transitions;
        alpha = cfg.c_alpha * cfg.delta * eps / m2;
    }
    long T = cfg.T;
    if (cfg.paper_T) {
        const double ratio = delta0 / (cfg.delta * eps);
        const double T_paper = std::ceil(cfg.c_T / alpha * std::log(std::max(ratio, 1.0)));
        if (!(T_paper <= static_cast<double>(cfg.max_T)))
            throw Error(ErrorCode::ConfigInvalid, "schedule asks for T = " + std::to_string(T_paper) +
                                                      " iterations, above max_T; raise c_alpha or max_T");
        T = static_cast<long>(T_paper);
    }

    detail::DescentSettings s{T, alpha, eps, cfg.delta, cfg.M_G_AC, cfg.record_stride, J_star, delta0};
    Simulator sim(model, K0);
    Trajectory traj;
    Mat Gb;
    const long per_rollout = static_cast<long>(rep.L) + 1;
    try {
        detail::run_descent(
            model, K0, s,
            [&](const Mat& K, long it, Mat& G) -> long {
                long used = 0;
                // The pilot already trained a critic for K0.
                if ((it - 1) % cfg.critic_refresh == 0 && !(it == 1 && pilot_refreshed)) used += refresh(K);
                sim.set_gain(K);
                G.setZero(model.d(), model.n());
                for (int b = 0; b < cfg.batch; ++b) {
                    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it) * cfg.batch + b));
                    sim.rollout(traj, rep.L, rng, Start::zero());
                    ac_gradient_into(model, critic, traj, Gb);
                    G += Gb;
                }
                G /= static_cast<double>(cfg.batch);
                return used + per_rollout * cfg.batch;
            },
            rep);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::IterateLeftDomain) throw;
        rep.left_domain = true;
        rep.exit_reason = "IterateLeftDomain";
        rep.final_gap = rep.history.back().gap;
    }
    return rep;
}

ComparisonRow variance_comparison(const LqrModel& model, const Mat& K, Eigen::Index L, long reps,
                                  std::uint64_t seed) {
    if (classify_policy(model, K) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "variance comparison needs a stable gain");
    if (reps < 2) throw Error(ErrorCode::ConfigInvalid, "reps must be >= 2");
    const ValueParams critic = value_params(model, K);
    const Mat grad = closed_loop_quantities(model, K).grad;
    const auto sz = static_cast<std::size_t>(reps);
    std::vector<Mat> pg(sz), ac(sz);
    const unsigned workers = thread_count();
    parallel_for(workers, [&](std::size_t w) {
        Simulator sim(model, K);
        Trajectory traj;
        for (std::size_t r = w; r < sz; r += workers) {
            Rng rng(derive_seed(seed, r));
            sim.rollout(traj, L, rng, Start::zero());
            pg_gradient_into(model, traj, pg[r]);
            ac_gradient_into(model, critic, traj, ac[r]);
        }
    });
    Mat pg_mean = Mat::Zero(K.rows(), K.cols()), ac_mean = pg_mean;
    for (std::size_t r = 0; r < sz; ++r) {
        pg_mean += pg[r];
        ac_mean += ac[r];
    }
    pg_mean /= static_cast<double>(reps);
    ac_mean /= static_cast<double>(reps);

    ComparisonRow row;
    row.L = L;
    row.reps = reps;
    std::vector<double> diff(sz);
    double pg_m2 = 0.0, ac_m2 = 0.0;
    for (std::size_t r = 0; r < sz; ++r) {
        const double dp = (pg[r] - pg_mean).squaredNorm();
        const double da = (ac[r] - ac_mean).squaredNorm();
        row.pg_var += dp;
        row.ac_var += da;
        diff[r] = dp - da;
        pg_m2 += pg[r].squaredNorm();
        ac_m2 += ac[r].squaredNorm();
    }
    const double bessel = static_cast<double>(reps - 1);
    row.pg_var /= bessel;
    row.ac_var /= bessel;
    row.pg_second_moment = pg_m2 / static_cast<double>(reps);
    row.ac_second_moment = ac_m2 / static_cast<double>(reps);
    const auto d = summarize(diff);
    row.var_diff = row.pg_var - row.ac_var;
    row.var_diff_se = d.std_error * static_cast<double>(reps) / bessel;
    row.pg_bias = (pg_mean - grad).norm();
    row.ac_bias = (ac_mean - grad).norm();
    row.ac_lower_95 = row.var_diff - 1.6448536269514722 * row.var_diff_se > 0.0;
    return row;
}

ComparisonReport compare_over_lengths(const LqrModel& model, const Mat& K, const std::vector<Eigen::Index>& Ls,
                                      long reps, std::uint64_t seed) {
    ComparisonReport rep;
    std::vector<double> x, pg, ac;
    for (std::size_t i = 0; i < Ls.size(); ++i) {
        rep.rows.push_back(variance_comparison(model, K, Ls[i], reps, derive_seed(seed, i)));
        if (Ls[i] > 0) {
            x.push_back(static_cast<double>(Ls[i]));
            pg.push_back(rep.rows.back().pg_second_moment);
            ac.push_back(rep.rows.back().ac_second_moment);
        }
    }
    if (x.size() >= 2) {
        rep.pg_fit = loglog_fit(x, pg);
        rep.ac_fit = loglog_fit(x, ac);
    }
    return rep;
}

}  // namespace lqrl
