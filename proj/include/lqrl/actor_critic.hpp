#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lqrl/params.hpp"
#include "lqrl/policy_gradient.hpp"
#include "lqrl/stats.hpp"
#include "lqrl/td.hpp"

namespace lqrl {

/// (1/sigma^2) sum_{t<=L} (u_t - K x_t) x_t^T gamma^t (c_t + gamma V(x_{t+1}) - V(x_t)).
/// Uses the trajectory's terminal state x_{L+1}.
GradientEstimate ac_gradient_estimate(const LqrModel& model, const Mat& K, const ValueParams& critic,
                                      const Trajectory& traj);

void ac_gradient_into(const LqrModel& model, const ValueParams& critic, const Trajectory& traj, Mat& G);

enum class CriticMode { Oracle, Learned };

/// Threshold: smallest L with gamma^{L+1} / (1-gamma) <= c_L sqrt(delta eps / n) (the closing analysis).
/// Table1: L = ceil(c_L / (1-gamma)^4) (the complexity table's column).
enum class AcLengthPreset { Fixed, Threshold, Table1 };

struct AcConfig {
    long T = 500;
    Eigen::Index L = 40;
    AcLengthPreset length_preset = AcLengthPreset::Fixed;
    CriticMode critic_mode = CriticMode::Learned;
    TdConfig critic;         ///< learned-critic settings; seed re-derived per refresh
    int critic_refresh = 1;  ///< retrain every k iterations; k > 1 is outside the analysed setting
    StepRule step_rule = StepRule::Fixed;
    double alpha = 1e-3;
    double c_alpha = 1.0;
    double c_T = 1.0;
    double c_L = 1.0;
    bool paper_T = false;  ///< T = c_T / alpha * log(Delta0 / (delta eps))
    double epsilon = 0.0;
    double delta = 0.1;
    int batch = 1;
    long pilot_reps = 200;
    std::uint64_t seed = 0;
    double M_G_AC = 0.0;
    long record_stride = 1;
    long max_T = 100'000'000;  ///< refuse schedules that ask for more iterations

    void validate() const;
};

struct AcReport : PgReport {
    std::vector<double> critic_errors;  ///< ||theta - theta*|| at each refresh
    long critic_transitions = 0;
    std::string length_preset;
};

Eigen::Index ac_trajectory_length(const LqrModel& model, AcLengthPreset preset, double eps, double delta,
                                  double c_L, Eigen::Index fixed_L);

double ac_paper_alpha(const LqrModel& model, double eps, double delta, Eigen::Index L, double c_alpha);

/// E||G_AC||_F^2 at K with critic theta from `reps` rollouts.
double ac_second_moment(const LqrModel& model, const Mat& K, const ValueParams& critic, Eigen::Index L,
                        long reps, std::uint64_t seed);

AcReport run_actor_critic(const LqrModel& model, const Mat& K0, const AcConfig& cfg);

/// Paired PG / AC estimator statistics on common trajectories with the exact critic.
struct ComparisonRow {
    Eigen::Index L = 0;
    long reps = 0;
    double pg_var = 0.0;  ///< E||G - E G||_F^2
    double ac_var = 0.0;
    double pg_second_moment = 0.0;
    double ac_second_moment = 0.0;
    double var_diff = 0.0;     ///< pg_var - ac_var
    double var_diff_se = 0.0;  ///< standard error of the paired difference
    double pg_bias = 0.0;      ///< ||mean(G) - grad J||_F
    double ac_bias = 0.0;
    bool ac_lower_95 = false;  ///< one-sided 95% test that ac_var < pg_var
};

ComparisonRow variance_comparison(const LqrModel& model, const Mat& K, Eigen::Index L, long reps,
                                  std::uint64_t seed);

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    LinearFit pg_fit;  ///< log second moment vs log L
    LinearFit ac_fit;
};

ComparisonReport compare_over_lengths(const LqrModel& model, const Mat& K, const std::vector<Eigen::Index>& Ls,
                                      long reps, std::uint64_t seed);

}  // namespace lqrl
