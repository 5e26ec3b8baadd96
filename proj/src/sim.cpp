#include "lqrl/sim.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/parallel.hpp"

namespace lqrl {

Simulator::Simulator(const LqrModel& model, Mat K)
    : model_(model), K_(std::move(K)), sqrt_Dw_(sym_sqrt(model.D_omega)) {
    check_gain_shape(model_, K_);
    scratch_n_.resize(model_.n());
    scratch_d_.resize(model_.d());
}

void Simulator::set_gain(const Mat& K) {
    check_gain_shape(model_, K);
    K_ = K;
    sqrt_DK_.reset();
}

void Simulator::stationary_draw(Eigen::Ref<Vec> x, Rng& rng) const {
    if (!sqrt_DK_) {
        if (classify_policy(model_, K_) != Feasibility::Stable)
            throw Error(ErrorCode::InfeasiblePolicy, "stationary sampling needs a stable gain");
        sqrt_DK_ = sym_sqrt(stationary_covariance(model_, K_));
    }
    rng.fill_normal(scratch_n_);
    x.noalias() = *sqrt_DK_ * scratch_n_;
}

void Simulator::step(const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> u, Eigen::Ref<Vec> x_next,
                     Rng& rng) const {
    rng.fill_normal(scratch_d_);
    u.noalias() = K_ * x;
    u += model_.sigma * scratch_d_;
    advance(x, u, x_next, rng);
}

void Simulator::advance(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& u,
                        Eigen::Ref<Vec> x_next, Rng& rng) const {
    rng.fill_normal(scratch_n_);
    x_next.noalias() = model_.A * x;
    x_next.noalias() += model_.B * u;
    x_next.noalias() += sqrt_Dw_ * scratch_n_;
}

void Simulator::rollout(Trajectory& traj, Eigen::Index L, Rng& rng, const Start& start) const {
    if (L < 0) throw Error(ErrorCode::ConfigInvalid, "rollout length must be >= 0");
    const auto n = model_.n();
    const auto d = model_.d();
    if (traj.K.rows() != K_.rows() || traj.K.cols() != K_.cols() || traj.K != K_) traj.K = K_;
    traj.X.resize(n, L + 2);
    traj.U.resize(d, L + 1);
    traj.c.resize(L + 1);
    traj.eta.resize(d, L + 1);
    traj.omega.resize(n, L + 1);
    traj.start = start;

    switch (start.kind) {
        case StartKind::Zero: traj.X.col(0).setZero(); break;
        case StartKind::Stationary: stationary_draw(traj.X.col(0), rng); break;
        case StartKind::Given:
            if (start.x.size() != n) throw Error(ErrorCode::DimensionMismatch, "start state has wrong size");
            traj.X.col(0) = start.x;
            break;
    }
    for (Eigen::Index t = 0; t <= L; ++t) {
        auto x = traj.X.col(t);
        auto u = traj.U.col(t);
        auto eta = traj.eta.col(t);
        auto w = traj.omega.col(t);
        rng.fill_normal(scratch_d_);
        eta = model_.sigma * scratch_d_;
        u.noalias() = K_ * x;
        u += eta;
        rng.fill_normal(scratch_n_);
        w.noalias() = sqrt_Dw_ * scratch_n_;
        traj.c(t) = x.dot(model_.S * x) + u.dot(model_.R * u);
        auto next = traj.X.col(t + 1);
        next.noalias() = model_.A * x;
        next.noalias() += model_.B * u;
        next += w;
        const double norm = next.norm();
        if (!(norm <= kOverflowNorm))
            throw Error(ErrorCode::NumericalOverflow,
                        "state norm exceeded 1e12 at t=" + std::to_string(t + 1));
    }
}

Trajectory rollout(const LqrModel& model, const Mat& K, Eigen::Index L, std::uint64_t seed,
                   const Start& start) {
    Simulator sim(model, K);
    Trajectory traj;
    traj.seed = seed;
    Rng rng(seed);
    sim.rollout(traj, L, rng, start);
    return traj;
}

Vec stationary_sample(const LqrModel& model, const Mat& K, std::uint64_t seed,
                      const StationarySampling& mode) {
    if (classify_policy(model, K) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "stationary sampling needs a stable gain");
    Simulator sim(model, K);
    Rng rng(seed);
    Vec x = Vec::Zero(model.n());
    if (mode.mode == StationaryMode::OracleLyapunov) {
        sim.stationary_draw(x, rng);
        return x;
    }
    Vec u(model.d()), next(model.n());
    for (int t = 0; t < mode.burn_in; ++t) {
        sim.step(x, u, next, rng);
        x.swap(next);
    }
    return x;
}

namespace {

McEstimate discounted_returns(const LqrModel& model, const Mat& K, std::size_t reps,
                              Eigen::Index horizon, std::uint64_t seed, const Start& start,
                              const Vec* u0) {
    if (classify_policy(model, K) == Feasibility::Infeasible)
        throw Error(ErrorCode::InfeasiblePolicy, "Monte-Carlo cost needs a finite-cost gain");
    const Simulator sim(model, K);
    std::vector<double> returns(reps);
    const unsigned workers = thread_count();
    parallel_for(workers, [&](std::size_t w) {
        Simulator local(sim);
        Vec x(model.n()), u(model.d()), next(model.n());
        for (std::size_t i = w; i < reps; i += workers) {
            Rng rng(derive_seed(seed, i));
            x = start.kind == StartKind::Given ? start.x : Vec::Zero(model.n());
            double total = 0.0, disc = 1.0;
            for (Eigen::Index t = 0; t <= horizon; ++t) {
                local.step(x, u, next, rng);
                if (t == 0 && u0) {
                    // Replace the sampled first action; the process noise already drawn stays.
                    next.noalias() += model.B * (*u0 - u);
                    u = *u0;
                }
                total += disc * local.stage_cost(x, u);
                disc *= model.gamma;
                x.swap(next);
                if (!(x.norm() <= kOverflowNorm))
                    throw Error(ErrorCode::NumericalOverflow, "state norm exceeded 1e12");
            }
            returns[i] = total;
        }
    });
    return summarize(returns);
}

}  // namespace

McEstimate mc_cost(const LqrModel& model, const Mat& K, std::size_t reps, Eigen::Index horizon,
                   std::uint64_t seed) {
    return discounted_returns(model, K, reps, horizon, seed, Start::zero(), nullptr);
}

McEstimate mc_q_value(const LqrModel& model, const Mat& K, const Vec& x0, const Vec& u0,
                      std::size_t reps, Eigen::Index horizon, std::uint64_t seed) {
    return discounted_returns(model, K, reps, horizon, seed, Start::given(x0), &u0);
}

}  // namespace lqrl
