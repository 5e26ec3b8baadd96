#pragma once

#include <optional>

#include "lqrl/linalg.hpp"
#include "lqrl/model.hpp"
#include "lqrl/params.hpp"

namespace lqrl {

/// Unique X with X = Q + gamma * M^T X M. Requires gamma * rho(M)^2 < 1 and Q symmetric.
/// Kronecker-vectorized direct solve for n <= 20, Smith doubling above.
Mat solve_discounted_lyapunov(const Mat& M, const Mat& Q, double gamma);

/// Frobenius norm of X - Q - gamma M^T X M.
double lyapunov_residual(const Mat& M, const Mat& Q, double gamma, const Mat& X);

/// Model-based quantities of a (model, gain) pair.
struct ExactQuantities {
    Mat P;                   ///< discounted cost-to-go matrix
    Mat Sigma;               ///< sum_t gamma^t E[x_t x_t^T] from x_0 = 0
    std::optional<Mat> D_K;  ///< stationary covariance; only for stable gains
    double J = 0.0;          ///< cumulative discounted cost
    Mat grad;                ///< dJ/dK, d x n
    Feasibility feasibility = Feasibility::Infeasible;

    [[nodiscard]] const Mat& stationary() const;  // throws InfeasiblePolicy if unset
};

/// Requires a FiniteCost gain (throws InfeasiblePolicy otherwise).
ExactQuantities closed_loop_quantities(const LqrModel& model, const Mat& K);

/// Cumulative cost J(K) alone.
double cost(const LqrModel& model, const Mat& K);

/// Stationary state covariance D_K = M D_K M^T + D_omega_tilde; requires a stable gain.
Mat stationary_covariance(const LqrModel& model, const Mat& K);

struct RiccatiSolution {
    Mat P_gamma;
    Mat K_star;
    int iterations = 0;
    double residual = 0.0;  ///< relative ARE residual at exit
};

/// Right-hand side of the discounted ARE evaluated at P.
Mat riccati_map(const LqrModel& model, const Mat& P);

/// Fixed-point iteration on the discounted ARE from P_0 = S until the relative residual <= tol.
RiccatiSolution riccati(const LqrModel& model, double tol = 1e-10, int max_iter = 1'000'000);

/// theta1* = P, theta0* = gamma/(1-gamma) Tr[P D~] + sigma^2 Tr[R]/(1-gamma) (= J(K)).
ValueParams value_params(const LqrModel& model, const Mat& K);

/// Exact Q-function blocks of a stable gain.
QParams q_params(const LqrModel& model, const Mat& K);

/// Gradient-dominance constant in the form stated with the algorithm analysis:
/// gamma sigma_min(Sigma_K)^2 sigma_min(R) / ((1-gamma) ||Sigma_{K*}||_2).
double pl_constant(const LqrModel& model, const Mat& K);
double pl_constant(const LqrModel& model, const Mat& K, double sigma_star_norm);

/// Constant that follows from the cost-difference identity:
/// 4 sigma_min(Sigma_K)^2 sigma_min(R) / ||Sigma_{K*}||_2.
double gradient_dominance_constant(const LqrModel& model, const Mat& K, double sigma_star_norm);

/// ||Sigma_{K*,gamma}||_2 for the Riccati gain.
double optimal_sigma_norm(const LqrModel& model);

/// kappa = lambda^2 min(1, 1/(lambda^2 + ||D_K||_F^2)), lambda = lambda_min(D_K).
double td_conditioning(const LqrModel& model, const Mat& K);
double td_conditioning_from_covariance(const Mat& D_K);

}  // namespace lqrl
