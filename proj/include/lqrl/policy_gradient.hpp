#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lqrl/model.hpp"
#include "lqrl/sim.hpp"

namespace lqrl {

struct GradientEstimate {
    Mat G;
    Eigen::Index L = 0;
    std::uint64_t seed = 0;
};

/// (1/sigma^2) sum_{t<=L} (u_t - K x_t) x_t^T sum_{k=t..L} gamma^k c_k, via a backward cumulative sum.
GradientEstimate pg_gradient_estimate(const LqrModel& model, const Mat& K, const Trajectory& traj);

/// Same estimator written into G (resized if needed) without further allocation.
void pg_gradient_into(const LqrModel& model, const Trajectory& traj, Mat& G);

/// Throws PolicyMismatch unless the trajectory was generated with K.
void check_trajectory_policy(const Mat& K, const Trajectory& traj);

/// How the step size is chosen.
///  Fixed: cfg.alpha.
///  PaperSchedule: c_alpha * delta eps (1-g^2) sigma^2 / (L^3 d) for PG, c_alpha * delta eps (1-g^2) / (L d) for AC.
///  SecondMoment: c_alpha * delta eps / M2, with M2 = E||G||_F^2 estimated at K0 from pilot rollouts
///  (the paper schedules are delta eps divided by a second-moment bound; this uses the measured value).
enum class StepRule { Fixed, PaperSchedule, SecondMoment };

struct PgConfig {
    long T = 1000;
    Eigen::Index L = 40;
    StepRule step_rule = StepRule::Fixed;
    double alpha = 1e-3;
    double c_alpha = 1.0;
    double c_T = 1.0;
    double c_L = 1.0;
    bool paper_T = false;  ///< T = c_T / alpha * log(120 Delta0 / (delta eps))
    bool paper_L = false;  ///< L from the stability certificate threshold
    double epsilon = 0.0;  ///< target gap; required by the paper schedules
    double delta = 0.1;
    int batch = 1;  ///< rollouts averaged per step
    long pilot_reps = 200;
    std::uint64_t seed = 0;
    double M_G = 0.0;  ///< guard on ||G||_F; 0 disables
    bool oracle_gradient = false;  ///< replace the estimate by the exact gradient
    long record_stride = 1;
    long max_T = 100'000'000;  ///< refuse schedules that ask for more iterations

    void validate() const;
};

struct PgIter {
    long iter = 0;
    double J = 0.0;
    double gap = 0.0;
    double grad_norm_est = 0.0;
    bool guard_flag = false;
};

struct PgReport {
    std::vector<PgIter> history;
    Mat K_final;
    double J_star = 0.0;
    double delta0 = 0.0;
    double alpha = 0.0;
    long T = 0;
    Eigen::Index L = 0;
    double final_gap = 0.0;
    long transitions = 0;               ///< sampled transitions, pilot included
    long pilot_transitions = 0;
    long first_hit_iter = -1;           ///< first iteration with gap <= epsilon
    long first_hit_transitions = -1;
    long guard_events = 0;
    bool left_domain = false;
    std::string exit_reason = "Completed";
    bool extra_paper = false;           ///< batch > 1 or SecondMoment rule
};

/// Trajectory length with gamma^{L+1} (Gamma^2/(1-rho_bar^2) + 1/(1-gamma)) <= c_L sqrt(delta eps / n),
/// using the stability certificate at rho_bar = (1 + rho(A+BK))/2.
Eigen::Index pg_trajectory_length(const LqrModel& model, const Mat& K, double eps, double delta, double c_L);

/// Admissibility of (eps, delta) for the paper schedules: delta eps < min(1, 10 Delta0 / (3 log(120 Delta0))).
bool schedule_tolerance_ok(double delta0, double eps, double delta);

double pg_paper_alpha(const LqrModel& model, double eps, double delta, Eigen::Index L, double c_alpha);

/// E||G||_F^2 of the PG estimator at K from `reps` rollouts.
double pg_second_moment(const LqrModel& model, const Mat& K, Eigen::Index L, long reps, std::uint64_t seed);

PgReport run_policy_gradient(const LqrModel& model, const Mat& K0, const PgConfig& cfg);

}  // namespace lqrl
