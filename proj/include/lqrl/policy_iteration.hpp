#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lqrl/model.hpp"
#include "lqrl/params.hpp"
#include "lqrl/td.hpp"

namespace lqrl {

inline constexpr double kMaxTheta22Condition = 1e12;

/// K' = -Theta22^{-1} Theta21. Throws SingularTheta22 when cond(Theta22) > 1e12.
Mat improve(const QParams& theta, double* condition = nullptr);

/// Gauss-Newton form K - 1/2 (R + g B^T P B)^{-1} grad Sigma^{-1}; K must be stable.
Mat improve_exact(const LqrModel& model, const Mat& K);

enum class QSource { ExactOracle, QTdLearn };

struct PiConfig {
    int T = 20;
    double epsilon0 = 0.0;
    QSource q_source = QSource::ExactOracle;
    TdConfig td;            ///< Q-TD settings in learned mode; its seed is re-derived per iteration
    bool gamma_guard = true;  ///< flag iterates that leave the sublevel set {J - J* <= 2 (J(K0) - J*)}
    bool stop_on_q_miss = true;
    std::uint64_t seed = 0;

    void validate(const LqrModel& model) const;
};

struct PiIterate {
    int t = 0;
    Mat K;
    double J = 0.0;
    double gap = 0.0;
    double ratio = 0.0;   ///< gap_t / gap_{t-1}; NaN once the previous gap is at the numerical floor
    double q_err = 0.0;   ///< ||Theta - Theta*||_F over the quadratic blocks (learned mode)
    double theta0_err = 0.0;
    Feasibility feasibility = Feasibility::Stable;
};

struct PiReport {
    std::vector<PiIterate> iterates;  ///< t = 0 is K0
    double J_star = 0.0;
    double alpha_c = 0.0;            ///< gamma^2 sigma_min(D~) / ||Sigma_{K*}||_2
    int contraction_violations = 0;  ///< exact mode: steps with ratio > 1 - alpha_c
    bool left_domain = false;        ///< an iterate became infeasible
    bool sublevel_exit = false;      ///< gamma_guard observation
    bool q_miss = false;             ///< learned Q missed epsilon0
    std::string stop_reason;
    bool learned = false;

    [[nodiscard]] double final_gap() const { return iterates.back().gap; }
};

/// Gap below which ratios are not formed: round-off in J dominates there.
double pi_gap_floor(double J_star);

PiReport run_policy_iteration(const LqrModel& model, const Mat& K0, const PiConfig& cfg);

/// Iterations sufficient for gap <= eps in exact mode:
/// ceil([2 ||Sigma_{K*}||_2 / (g^2 sigma_min(D~)) - 1] log(Delta0 / eps)).
int pi_iteration_bound(const LqrModel& model, const Mat& K0, double eps);

/// Envelope for learned mode with Q error eps0:
/// ((1-a)/(1-b))^t Delta0 + b/(a-b) J*, b = ||R^-1|| [2 C0 (1-g) J(K0) + 2]^2 eps0^2 / sigma_min(S),
/// C0 = 2 ||R^-1|| ||B|| ||A|| / sigma_min(D~). Returns nullopt when b >= a (no guarantee).
struct PiLearnedEnvelope {
    double alpha = 0.0;
    double beta = 0.0;
    double delta0 = 0.0;
    double J_star = 0.0;
    [[nodiscard]] double at(int t) const;
};
std::optional<PiLearnedEnvelope> pi_learned_envelope(const LqrModel& model, const Mat& K0, double eps0);

}  // namespace lqrl
