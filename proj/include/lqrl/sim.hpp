#pragma once

#include <cstdint>
#include <optional>

#include "lqrl/linalg.hpp"
#include "lqrl/model.hpp"
#include "lqrl/rng.hpp"
#include "lqrl/stats.hpp"

namespace lqrl {

inline constexpr double kOverflowNorm = 1e12;

enum class StartKind { Zero, Stationary, Given };

struct Start {
    StartKind kind = StartKind::Zero;
    Vec x;  // used when kind == Given

    static Start zero() { return {}; }
    static Start stationary() { return {StartKind::Stationary, {}}; }
    static Start given(Vec x0) { return {StartKind::Given, std::move(x0)}; }
};

/// Rollout of length L: controls, costs and noises for t = 0..L, states for t = 0..L+1.
/// The extra state x_{L+1} is what bootstrapped estimators need at the horizon.
struct Trajectory {
    Mat K;
    Mat X;      ///< n x (L+2)
    Mat U;      ///< d x (L+1)
    Vec c;      ///< L+1
    Mat eta;    ///< d x (L+1), policy noise
    Mat omega;  ///< n x (L+1), process noise
    std::uint64_t seed = 0;
    Start start;

    [[nodiscard]] Eigen::Index L() const { return c.size() - 1; }
};

/// Reusable sampler for one (model, K) pair. Holds preallocated square roots so that
/// repeated rollouts do not allocate once the trajectory buffers have been sized.
class Simulator {
public:
    Simulator(const LqrModel& model, Mat K);

    /// Switches the gain; the stationary square root is recomputed on first use.
    void set_gain(const Mat& K);

    /// Fills `traj` with a rollout of length L. Throws NumericalOverflow once ||x_t|| > 1e12.
    void rollout(Trajectory& traj, Eigen::Index L, Rng& rng, const Start& start) const;

    /// x ~ N(0, D_K) using the symmetric square root; throws InfeasiblePolicy unless K is stable.
    void stationary_draw(Eigen::Ref<Vec> x, Rng& rng) const;

    /// One transition from x: u = Kx + eta, x' = Ax + Bu + omega.
    void step(const Eigen::Ref<const Vec>& x, Eigen::Ref<Vec> u, Eigen::Ref<Vec> x_next, Rng& rng) const;

    /// Dynamics only: x' = Ax + Bu + omega for a given action.
    void advance(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& u, Eigen::Ref<Vec> x_next,
                 Rng& rng) const;

    [[nodiscard]] const LqrModel& model() const { return model_; }
    [[nodiscard]] const Mat& K() const { return K_; }
    [[nodiscard]] double stage_cost(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& u) const {
        return x.dot(model_.S * x) + u.dot(model_.R * u);
    }

private:
    LqrModel model_;
    Mat K_;
    Mat sqrt_Dw_;
    mutable std::optional<Mat> sqrt_DK_;  // computed on first stationary draw
    mutable Vec scratch_n_;
    mutable Vec scratch_d_;
};

Trajectory rollout(const LqrModel& model, const Mat& K, Eigen::Index L, std::uint64_t seed,
                   const Start& start = Start::zero());

enum class StationaryMode { OracleLyapunov, BurnIn };

struct StationarySampling {
    StationaryMode mode = StationaryMode::OracleLyapunov;
    int burn_in = 0;  ///< T for BurnIn

    static StationarySampling oracle() { return {}; }
    static StationarySampling burn(int T) { return {StationaryMode::BurnIn, T}; }
};

Vec stationary_sample(const LqrModel& model, const Mat& K, std::uint64_t seed,
                      const StationarySampling& mode = StationarySampling::oracle());

/// Mean of sum_{t<=horizon} gamma^t c_t over `reps` rollouts from x_0 = 0; stream i uses
/// derive_seed(seed, i), so the result does not depend on the thread count.
McEstimate mc_cost(const LqrModel& model, const Mat& K, std::size_t reps, Eigen::Index horizon,
                   std::uint64_t seed);

/// Discounted return sum_{t<=horizon} gamma^t c_t from a given (x_0, u_0); u_t = K x_t + eta_t for t >= 1.
McEstimate mc_q_value(const LqrModel& model, const Mat& K, const Vec& x0, const Vec& u0,
                      std::size_t reps, Eigen::Index horizon, std::uint64_t seed);

}  // namespace lqrl
