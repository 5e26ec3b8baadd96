#include "lqrl/exact.hpp"

#include <cmath>
#include <string>

#include "lqrl/error.hpp"

namespace lqrl {

namespace {

constexpr Eigen::Index kDirectSolveMaxDim = 20;

Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Mat smith_doubling(const Mat& M, const Mat& Q, double gamma) {
    // X = sum_k a^k Q (a^T)^k with a = sqrt(gamma) M^T.
    Mat a = std::sqrt(gamma) * M.transpose();
    Mat X = Q;
    for (int it = 0; it < 200; ++it) {
        const Mat increment = a * X * a.transpose();
        X += increment;
        a = a * a;
        if (increment.norm() <= 1e-16 * (1.0 + X.norm())) break;
    }
    return X;
}

}  // namespace

Mat solve_discounted_lyapunov(const Mat& M, const Mat& Q, double gamma) {
    if (M.rows() != M.cols() || Q.rows() != M.rows() || Q.cols() != M.cols())
        throw Error(ErrorCode::DimensionMismatch, "Lyapunov operands must be square and conformant");
    if (!is_symmetric(Q, 1e-10)) throw Error(ErrorCode::NonSymmetricInput, "Q is not symmetric");
    const double rho = spectral_radius(M);
    if (gamma * rho * rho >= 1.0)
        throw Error(ErrorCode::SpectralConditionViolated,
                    "gamma*rho(M)^2 = " + std::to_string(gamma * rho * rho));
    const auto n = M.rows();
    Mat X;
    if (n <= kDirectSolveMaxDim) {
        const Mat Mt = M.transpose();
        const Mat lhs = Mat::Identity(n * n, n * n) - gamma * kron(Mt, Mt);
        const Vec x = lhs.partialPivLu().solve(vec(Q));
        X = unvec(x, n, n);
    } else {
        X = smith_doubling(M, Q, gamma);
    }
    return symmetrize(X);
}

double lyapunov_residual(const Mat& M, const Mat& Q, double gamma, const Mat& X) {
    return (X - Q - gamma * M.transpose() * X * M).norm();
}

const Mat& ExactQuantities::stationary() const {
    if (!D_K) throw Error(ErrorCode::InfeasiblePolicy, "stationary covariance needs a stable gain");
    return *D_K;
}

ExactQuantities closed_loop_quantities(const LqrModel& model, const Mat& K) {
    ExactQuantities q;
    q.feasibility = classify_policy(model, K);
    if (q.feasibility == Feasibility::Infeasible)
        throw Error(ErrorCode::InfeasiblePolicy,
                    "rho(A+BK)=" + std::to_string(spectral_radius(model.closed_loop(K))) +
                        " >= 1/sqrt(gamma)");
    const double g = model.gamma;
    const Mat M = model.closed_loop(K);
    const Mat Dt = model.D_omega_tilde();
    q.P = solve_discounted_lyapunov(M, symmetrize(model.S + K.transpose() * model.R * K), g);
    q.Sigma = solve_discounted_lyapunov(M.transpose(), (g / (1.0 - g)) * Dt, g);
    if (q.feasibility == Feasibility::Stable)
        q.D_K = solve_discounted_lyapunov(M.transpose(), Dt, 1.0);
    const double s2 = model.sigma * model.sigma;
    q.J = g / (1.0 - g) * (Dt * q.P).trace() + s2 * model.R.trace() / (1.0 - g);
    const Mat E = (model.R + g * model.B.transpose() * q.P * model.B) * K +
                  g * model.B.transpose() * q.P * model.A;
    q.grad = 2.0 * E * q.Sigma;
    return q;
}

double cost(const LqrModel& model, const Mat& K) { return closed_loop_quantities(model, K).J; }

Mat stationary_covariance(const LqrModel& model, const Mat& K) {
    check_gain_shape(model, K);
    const Mat M = model.closed_loop(K);
    const double rho = spectral_radius(M);
    if (rho >= 1.0 - kFeasibilityTol)
        throw Error(ErrorCode::InfeasiblePolicy, "stationary covariance needs rho(A+BK) < 1, got " +
                                                     std::to_string(rho));
    return solve_discounted_lyapunov(M.transpose(), model.D_omega_tilde(), 1.0);
}

Mat riccati_map(const LqrModel& model, const Mat& P) {
    const double g = model.gamma;
    const Mat& A = model.A;
    const Mat& B = model.B;
    const Mat BtPA = B.transpose() * P * A;
    const Mat inner = g * B.transpose() * P * B + model.R;
    return symmetrize(g * A.transpose() * P * A + model.S -
                      g * g * BtPA.transpose() * inner.ldlt().solve(BtPA));
}

RiccatiSolution riccati(const LqrModel& model, double tol, int max_iter) {
    RiccatiSolution sol;
    Mat P = model.S;
    for (int it = 1; it <= max_iter; ++it) {
        const Mat next = riccati_map(model, P);
        const double scale = std::max(next.norm(), 1e-300);
        sol.residual = (next - P).norm() / scale;
        P = next;
        sol.iterations = it;
        if (!std::isfinite(sol.residual))
            throw Error(ErrorCode::NoConvergence, "Riccati iteration diverged");
        if (sol.residual <= tol) break;
    }
    if (sol.residual > tol)
        throw Error(ErrorCode::NoConvergence,
                    "Riccati residual " + std::to_string(sol.residual) + " after " +
                        std::to_string(max_iter) + " iterations");
    const double g = model.gamma;
    const Mat& B = model.B;
    sol.P_gamma = P;
    sol.K_star = -g * (model.R + g * B.transpose() * P * B).ldlt().solve(B.transpose() * P * model.A);
    return sol;
}

ValueParams value_params(const LqrModel& model, const Mat& K) {
    const auto q = closed_loop_quantities(model, K);
    if (q.feasibility != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "value parameters need a stable gain");
    const double g = model.gamma;
    const double s2 = model.sigma * model.sigma;
    return {g / (1.0 - g) * (q.P * model.D_omega_tilde()).trace() + s2 * model.R.trace() / (1.0 - g),
            q.P};
}

QParams q_params(const LqrModel& model, const Mat& K) {
    const auto q = closed_loop_quantities(model, K);
    if (q.feasibility != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "Q parameters need a stable gain");
    const double g = model.gamma;
    const double s2 = model.sigma * model.sigma;
    const Mat& P = q.P;
    const Mat& A = model.A;
    const Mat& B = model.B;
    QParams out;
    out.Theta11 = symmetrize(model.S + g * A.transpose() * P * A);
    out.Theta12 = g * A.transpose() * P * B;
    out.Theta22 = symmetrize(model.R + g * B.transpose() * P * B);
    out.Theta0 = g / (1.0 - g) * (g * P * model.D_omega_tilde() + s2 * model.R).trace() +
                 g * (P * model.D_omega).trace();
    return out;
}

double optimal_sigma_norm(const LqrModel& model) {
    const auto sol = riccati(model);
    return norm2(closed_loop_quantities(model, sol.K_star).Sigma);
}

double pl_constant(const LqrModel& model, const Mat& K, double sigma_star_norm) {
    const auto q = closed_loop_quantities(model, K);
    if (q.feasibility != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "PL constant needs a stable gain");
    const double g = model.gamma;
    const double s = sigma_min(q.Sigma);
    return g * s * s * sigma_min(model.R) / ((1.0 - g) * sigma_star_norm);
}

double pl_constant(const LqrModel& model, const Mat& K) {
    return pl_constant(model, K, optimal_sigma_norm(model));
}

double gradient_dominance_constant(const LqrModel& model, const Mat& K, double sigma_star_norm) {
    const auto q = closed_loop_quantities(model, K);
    const double s = sigma_min(q.Sigma);
    return 4.0 * s * s * sigma_min(model.R) / sigma_star_norm;
}

double td_conditioning_from_covariance(const Mat& D_K) {
    const double lam = lambda_min(D_K);
    const double lam2 = lam * lam;
    return lam2 * std::min(1.0, 1.0 / (lam2 + D_K.squaredNorm()));
}

double td_conditioning(const LqrModel& model, const Mat& K) {
    return td_conditioning_from_covariance(stationary_covariance(model, K));
}

}  // namespace lqrl
