#pragma once

#include "lqrl/linalg.hpp"
#include "lqrl/model.hpp"

namespace lqrl {

/// Linear-Gaussian chain z' = F z + xi with z ~ N(0, D) stationary, xi ~ N(0, Xi) independent,
/// and stage cost z^T C z + c0 (in expectation over everything but z).
/// Both the state-value and the state-action TD problems are instances of this.
struct GaussianChain {
    Mat D;
    Mat F;
    Mat Xi;
    Mat C;
    double c0 = 0.0;
};

/// State chain under pi_K: D = D_K, F = A+BK, Xi = D~, C = S+K^T R K, c0 = sigma^2 Tr R.
GaussianChain value_chain(const LqrModel& model, const Mat& K);

/// State-action chain z = [x; u] under pi_K with fresh policy noise on u'.
GaussianChain q_chain(const LqrModel& model, const Mat& K);

/// Expected TD update direction E[phi(z) delta] for the quadratic critic theta0 + z^T Theta z.
/// With W = Theta - C - gamma F^T Theta F and w0 = (1-gamma) theta0 - c0 - gamma Tr(Theta Xi):
/// h0 = Tr(DW) + w0, H1 = Tr(DW) D + 2 D W D + w0 D.
struct ChainGradient {
    double h0 = 0.0;
    Mat H1;
};

ChainGradient chain_semi_gradient(const GaussianChain& chain, double gamma, double theta0,
                                  const Mat& Theta);

/// E[(d0 + z^T Delta z)^2] for z ~ N(0, D), Delta symmetric: 2 Tr(D Delta D Delta) + (d0 + Tr(D Delta))^2.
double quadratic_mean_square(const Mat& D, double d0, const Mat& Delta);

}  // namespace lqrl
