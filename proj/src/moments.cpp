#include "lqrl/moments.hpp"

#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"

namespace lqrl {

GaussianChain value_chain(const LqrModel& model, const Mat& K) {
    GaussianChain ch;
    ch.D = stationary_covariance(model, K);
    ch.F = model.closed_loop(K);
    ch.Xi = model.D_omega_tilde();
    ch.C = symmetrize(model.S + K.transpose() * model.R * K);
    ch.c0 = model.sigma * model.sigma * model.R.trace();
    return ch;
}

GaussianChain q_chain(const LqrModel& model, const Mat& K) {
    const auto n = model.n();
    const auto d = model.d();
    const Mat Dx = stationary_covariance(model, K);
    const double s2 = model.sigma * model.sigma;
    const Mat Id = Mat::Identity(d, d);

    GaussianChain ch;
    ch.D.resize(n + d, n + d);
    ch.D << Dx, Dx * K.transpose(), K * Dx, K * Dx * K.transpose() + s2 * Id;
    ch.D = symmetrize(ch.D);

    ch.F.resize(n + d, n + d);
    ch.F << model.A, model.B, K * model.A, K * model.B;

    const Mat& Dw = model.D_omega;
    ch.Xi.resize(n + d, n + d);
    ch.Xi << Dw, Dw * K.transpose(), K * Dw, K * Dw * K.transpose() + s2 * Id;
    ch.Xi = symmetrize(ch.Xi);

    ch.C = Mat::Zero(n + d, n + d);
    ch.C.topLeftCorner(n, n) = model.S;
    ch.C.bottomRightCorner(d, d) = model.R;
    ch.c0 = 0.0;
    return ch;
}

ChainGradient chain_semi_gradient(const GaussianChain& chain, double gamma, double theta0,
                                  const Mat& Theta) {
    if (Theta.rows() != chain.D.rows() || Theta.cols() != chain.D.cols())
        throw Error(ErrorCode::DimensionMismatch, "critic matrix does not match the chain dimension");
    const Mat W = Theta - chain.C - gamma * chain.F.transpose() * Theta * chain.F;
    const double w0 = (1.0 - gamma) * theta0 - chain.c0 - gamma * (Theta * chain.Xi).trace();
    const double tr = (chain.D * W).trace();
    ChainGradient g;
    g.h0 = tr + w0;
    g.H1 = (tr + w0) * chain.D + chain.D * (W + W.transpose()) * chain.D;
    return g;
}

double quadratic_mean_square(const Mat& D, double d0, const Mat& Delta) {
    const Mat DDelta = D * Delta;
    const double shift = d0 + DDelta.trace();
    return 2.0 * (DDelta * DDelta).trace() + shift * shift;
}

}  // namespace lqrl
