#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lqrl/model.hpp"
#include "lqrl/moments.hpp"
#include "lqrl/params.hpp"

namespace lqrl {

enum class TdUpdate { Semi, Stochastic };

/// PaperSemi: (1-g) / (2(1+(m+2)||D||_F^2)).  PaperStochastic: min((1-g) / (4(1+(m+2)||D||_F^2)), 1/sqrt(N)).
/// m is the feature-state dimension (n for V, n+d for Q) and D its stationary covariance.
enum class StepSizeMode { PaperSemi, PaperStochastic, Fixed };

/// IidStationary draws a fresh x ~ mu_K every step. SingleTrajectory follows one
/// Markov chain instead; it is outside the analysed setting and reports flag it.
enum class SampleMode { IidStationary, SingleTrajectory };

/// Where ||D||_F in the paper step sizes comes from.
enum class NormSource { Oracle, SampleEstimate };

struct TdConfig {
    long steps = 1000;  ///< N: iterates theta^(0..N-1) are averaged
    TdUpdate update = TdUpdate::Stochastic;
    StepSizeMode step_size = StepSizeMode::PaperStochastic;
    double alpha = 0.0;  ///< used when step_size == Fixed
    SampleMode sample = SampleMode::IidStationary;
    NormSource norm_source = NormSource::Oracle;
    double M_theta = 0.0;  ///< guard radius; 0 selects 10 * ||theta*||
    bool stop_on_guard = true;
    std::uint64_t seed = 0;
    long history_stride = 1;  ///< record every k-th step (the last step is always recorded)

    void validate() const;
};

struct TdStep {
    long step = 0;
    double theta0 = 0.0;
    double value_error = 0.0;  ///< E[(critic(theta^(s)) - critic(theta*))^2] under the stationary law
    double grad_norm = 0.0;    ///< norm of the update direction used at this step
    double param_error = 0.0;  ///< ||Theta - Theta*||_F (matrix part only)
    bool guard_flag = false;
};

struct TdSummary {
    double alpha = 0.0;
    double M_theta = 0.0;
    double max_iterate_norm = 0.0;
    double averaged_error = 0.0;        ///< value error of the averaged parameters
    double mean_iterate_error = 0.0;    ///< (1/N) sum_s value error of theta^(s)
    double averaged_param_error = 0.0;  ///< ||Theta~ - Theta*||_F
    double averaged_theta0_error = 0.0;
    bool guard_triggered = false;
    bool extra_paper = false;  ///< SingleTrajectory sampling
    std::vector<TdStep> history;
};

struct TdResult {
    ValueParams theta;  ///< averaged parameters
    ValueParams last;
    TdSummary summary;
};

struct QTdResult {
    QParams theta;  ///< averaged, symmetrized block parameters
    QParams last;
    TdSummary summary;
};

/// [1; vec(x x^T)].
Vec features(const Vec& x);

/// Critic value at x minus the bootstrapped target: V(x) - c(x,u) - gamma V(x').
double td_error(const LqrModel& model, const ValueParams& theta, const Vec& x, const Vec& u,
                const Vec& x_next);

/// Expected TD direction under the stationary law of K, in closed form.
ValueParams semi_gradient(const LqrModel& model, const Mat& K, const ValueParams& theta);

/// phi(x) * td_error for a single transition.
ValueParams stochastic_semi_gradient(const LqrModel& model, const ValueParams& theta, const Vec& x,
                                     const Vec& u, const Vec& x_next);

/// E_{mu_K}[(V(x;theta) - V(x;theta*))^2], exact.
double value_error(const LqrModel& model, const Mat& K, const ValueParams& theta);

/// Step size selected by cfg for a chain of feature-state dimension m with stationary covariance D.
double td_step_size(const TdConfig& cfg, double gamma, Eigen::Index m, double D_frobenius);

TdResult td_learn(const LqrModel& model, const Mat& K, const TdConfig& cfg,
                  const std::optional<ValueParams>& init = std::nullopt);

QTdResult q_td_learn(const LqrModel& model, const Mat& K, const TdConfig& cfg,
                     const std::optional<QParams>& init = std::nullopt);

/// Mean over `samples` i.i.d. transitions of the Q-TD update direction, evaluated at theta.
struct QUpdateMean {
    double h0 = 0.0;
    double h0_se = 0.0;
    Mat H;
    Mat H_se;
};
QUpdateMean q_update_mean(const LqrModel& model, const Mat& K, const QParams& theta,
                          long samples, std::uint64_t seed);

}  // namespace lqrl
