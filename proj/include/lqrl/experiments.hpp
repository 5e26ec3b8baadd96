#pragma once

#include <cstdint>
#include <vector>

#include "lqrl/model.hpp"
#include "lqrl/params.hpp"
#include "lqrl/stats.hpp"
#include "lqrl/td.hpp"

namespace lqrl {

/// Random instance with n states and d inputs together with a stabilizing gain.
struct Instance {
    LqrModel model;
    Mat K;
};
Instance random_instance(std::uint64_t seed, int n, int d);

/// Stochastic TD error against N, averaged over seeds.
struct TdRatePoint {
    long N = 0;
    double mean_iterate_error = 0.0;  ///< (1/N) sum_s E(theta^(s)), seed-averaged
    double averaged_error = 0.0;      ///< E(theta~), seed-averaged
    double alpha = 0.0;
};
struct TdRateSweep {
    std::vector<TdRatePoint> points;
    LinearFit iterate_fit;  ///< log error vs log N
    LinearFit averaged_fit;
};
TdRateSweep td_rate_sweep(const LqrModel& model, const Mat& K, const std::vector<long>& Ns, int seeds,
                          std::uint64_t master, TdConfig base = {});

/// Truncation bias and second moment of the PG estimator over a grid of L, using common
/// random numbers: every replicate is one rollout of length L_ref, and G^(L) is computed on
/// its prefix. bias(L) is estimated as mean(G^(L) - G^(L_ref)); the reference itself is
/// compared with the exact gradient separately.
struct PgBiasPoint {
    long L = 0;
    Mat bias;              ///< mean(G^(L) - G^(L_ref))
    double bias_norm = 0.0;
    double bias_se = 0.0;  ///< sqrt of summed entrywise variances of the difference, over reps
    double second_moment = 0.0;
};
struct PgBiasCurve {
    std::vector<PgBiasPoint> points;
    long L_ref = 0;
    long reps = 0;
    Mat ref_mean;        ///< mean G^(L_ref)
    Mat ref_se;          ///< entrywise standard error
    Mat exact_grad;
    LinearFit log_bias_fit;  ///< log ||bias|| vs L; slope should be log gamma
};
PgBiasCurve pg_bias_curve(const LqrModel& model, const Mat& K, const std::vector<long>& Ls, long L_ref,
                          long reps, std::uint64_t seed);

/// Mean shift of the AC estimator when the exact critic is perturbed by eps0 * U (U unit
/// Frobenius norm in the quadratic block), with the exact prediction 2 B^T (eps0 U) M sum_t gamma^{t+1} E[x_t x_t^T].
/// All grid points share trajectories. The estimator is affine in the critic, so the fitted line is
/// exact per sample; the informative comparison is the fitted slope against the prediction.
struct AcBiasPoint {
    double eps0 = 0.0;
    double bias = 0.0;     ///< <mean(G_AC(theta* + eps0 U)) - grad J, direction>
    double bias_se = 0.0;
};
struct AcBiasLinearity {
    std::vector<AcBiasPoint> points;
    Mat direction;          ///< unit-norm prediction direction in gain space
    double predicted_slope = 0.0;
    LinearFit fit;          ///< bias vs eps0
    double slope_se = 0.0;  ///< MC standard error of the per-trajectory slope
};
AcBiasLinearity ac_bias_linearity(const LqrModel& model, const Mat& K, const Mat& U, long L,
                                  const std::vector<double>& eps_grid, long reps, std::uint64_t seed);

/// sum_{t=0..L} gamma^{t+1} E[x_t x_t^T] from x_0 = 0.
Mat discounted_second_moment_sum(const LqrModel& model, const Mat& K, long L);

/// Gradient-dominance grid check.
struct PlPoint {
    double K = 0.0;
    double grad_sq = 0.0;
    double gap = 0.0;
    double mu = 0.0;           ///< stated constant
    double mu_provable = 0.0;  ///< 4 sigma_min(Sigma)^2 sigma_min(R) / ||Sigma*||
};
std::vector<PlPoint> pl_grid_scalar(const LqrModel& model, double lo, double hi, int points);

/// Number of exact PI steps until gap <= rel * Delta0.
int pi_steps_to_tolerance(const LqrModel& model, const Mat& K0, double rel, int max_steps = 10000);

}  // namespace lqrl
