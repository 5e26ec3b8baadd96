#include "lqrl/td.hpp"

#include <cmath>
#include <string>

#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/rng.hpp"
#include "lqrl/sim.hpp"

namespace lqrl {

void TdConfig::validate() const {
    if (steps < 1) throw Error(ErrorCode::ConfigInvalid, "TD steps must be >= 1");
    if (step_size == StepSizeMode::Fixed && !(alpha > 0.0))
        throw Error(ErrorCode::ConfigInvalid, "fixed TD step size must be > 0");
    if (M_theta < 0.0) throw Error(ErrorCode::ConfigInvalid, "M_theta must be >= 0");
    if (history_stride < 1) throw Error(ErrorCode::ConfigInvalid, "history stride must be >= 1");
}

Vec features(const Vec& x) {
    const auto n = x.size();
    Vec phi(1 + n * n);
    phi(0) = 1.0;
    const Mat outer = x * x.transpose();
    phi.tail(n * n) = vec(outer);
    return phi;
}

double td_error(const LqrModel& model, const ValueParams& theta, const Vec& x, const Vec& u,
                const Vec& x_next) {
    const double c = x.dot(model.S * x) + u.dot(model.R * u);
    return theta.value(x) - c - model.gamma * theta.value(x_next);
}

ValueParams semi_gradient(const LqrModel& model, const Mat& K, const ValueParams& theta) {
    if (classify_policy(model, K) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "semi-gradient needs a stable gain");
    const auto g = chain_semi_gradient(value_chain(model, K), model.gamma, theta.theta0, theta.Theta1);
    return {g.h0, g.H1};
}

ValueParams stochastic_semi_gradient(const LqrModel& model, const ValueParams& theta, const Vec& x,
                                     const Vec& u, const Vec& x_next) {
    const double delta = td_error(model, theta, x, u, x_next);
    return {delta, delta * x * x.transpose()};
}

double value_error(const LqrModel& model, const Mat& K, const ValueParams& theta) {
    const ValueParams star = value_params(model, K);
    return quadratic_mean_square(stationary_covariance(model, K), theta.theta0 - star.theta0,
                                 symmetrize(theta.Theta1) - star.Theta1);
}

double td_step_size(const TdConfig& cfg, double gamma, Eigen::Index m, double D_frobenius) {
    const double scale = 1.0 + static_cast<double>(m + 2) * D_frobenius * D_frobenius;
    switch (cfg.step_size) {
        case StepSizeMode::PaperSemi: return (1.0 - gamma) / (2.0 * scale);
        case StepSizeMode::PaperStochastic:
            return std::min((1.0 - gamma) / (4.0 * scale), 1.0 / std::sqrt(static_cast<double>(cfg.steps)));
        case StepSizeMode::Fixed: return cfg.alpha;
    }
    return cfg.alpha;
}

namespace {

struct EngineOutput {
    double avg0 = 0.0;
    Mat avg;
    double last0 = 0.0;
    Mat last;
    TdSummary summary;
};

constexpr long kNormEstimateBurnIn = 1000;
constexpr long kNormEstimateSamples = 10000;

// Draws (z, cost, z') transitions for either chain. For the state chain z = x; for the
// state-action chain z = [x; u] with u' = K x' + fresh policy noise.
class TransitionSampler {
public:
    TransitionSampler(const LqrModel& model, const Mat& K, bool state_action, SampleMode mode,
                      std::uint64_t seed)
        : sim_(model, K), state_action_(state_action), mode_(mode), rng_(seed) {
        const auto n = model.n();
        const auto d = model.d();
        x_.resize(n);
        u_.resize(d);
        xn_.resize(n);
        un_.resize(d);
        noise_.resize(d);
        const auto m = state_action ? n + d : n;
        z_.resize(m);
        zn_.resize(m);
    }

    /// Returns the stage cost; z() and z_next() hold the transition.
    double next() {
        if (mode_ == SampleMode::IidStationary || !started_) {
            sim_.stationary_draw(x_, rng_);
            started_ = true;
        } else {
            x_ = xn_;
        }
        if (state_action_ && mode_ == SampleMode::SingleTrajectory && have_u_) {
            // Follow the action already committed as u' on the previous step.
            u_ = un_;
            sim_.advance(x_, u_, xn_, rng_);
        } else {
            sim_.step(x_, u_, xn_, rng_);
        }
        const double cost = sim_.stage_cost(x_, u_);
        if (state_action_) {
            rng_.fill_normal(noise_);
            un_.noalias() = sim_.K() * xn_;
            un_ += sim_.model().sigma * noise_;
            have_u_ = true;
            const auto n = x_.size();
            z_.head(n) = x_;
            z_.tail(u_.size()) = u_;
            zn_.head(n) = xn_;
            zn_.tail(un_.size()) = un_;
        } else {
            z_ = x_;
            zn_ = xn_;
        }
        return cost;
    }

    const Vec& z() const { return z_; }
    const Vec& z_next() const { return zn_; }

private:
    Simulator sim_;
    bool state_action_;
    SampleMode mode_;
    Rng rng_;
    bool started_ = false;
    bool have_u_ = false;
    Vec x_, u_, xn_, un_, noise_, z_, zn_;
};

double estimate_covariance_norm(const LqrModel& model, const Mat& K, bool state_action,
                                std::uint64_t seed) {
    TransitionSampler sampler(model, K, state_action, SampleMode::SingleTrajectory, seed);
    for (long i = 0; i < kNormEstimateBurnIn; ++i) sampler.next();
    const auto m = sampler.z().size();
    Mat acc = Mat::Zero(m, m);
    for (long i = 0; i < kNormEstimateSamples; ++i) {
        sampler.next();
        acc.noalias() += sampler.z() * sampler.z().transpose();
    }
    return (acc / static_cast<double>(kNormEstimateSamples)).norm();
}

EngineOutput run_engine(const LqrModel& model, const Mat& K, const TdConfig& cfg,
                        const GaussianChain& chain, double star0, const Mat& star, double init0,
                        const Mat& init, bool state_action) {
    cfg.validate();
    const double g = model.gamma;
    const auto m = chain.D.rows();
    const double D_norm = cfg.norm_source == NormSource::Oracle
                              ? chain.D.norm()
                              : estimate_covariance_norm(model, K, state_action, derive_seed(cfg.seed, 1));

    EngineOutput out;
    TdSummary& sum = out.summary;
    sum.alpha = td_step_size(cfg, g, m, D_norm);
    sum.M_theta = cfg.M_theta > 0.0 ? cfg.M_theta : 10.0 * std::sqrt(star0 * star0 + star.squaredNorm());
    sum.extra_paper = cfg.sample == SampleMode::SingleTrajectory;
    sum.history.reserve(static_cast<std::size_t>(cfg.steps / cfg.history_stride + 2));

    double theta0 = init0;
    Mat Theta = symmetrize(init);
    double acc0 = 0.0;
    Mat acc = Mat::Zero(m, m);
    double err_sum = 0.0;
    const double alpha = sum.alpha;

    TransitionSampler sampler(model, K, state_action, cfg.sample, derive_seed(cfg.seed, 0));
    Mat Delta(m, m);

    for (long s = 0; s < cfg.steps; ++s) {
        const double theta0_s = theta0;
        acc0 += theta0;
        acc += Theta;
        Delta = Theta - star;
        const double err = quadratic_mean_square(chain.D, theta0 - star0, Delta);
        err_sum += err;
        const double norm = std::sqrt(theta0 * theta0 + Theta.squaredNorm());
        sum.max_iterate_norm = std::max(sum.max_iterate_norm, norm);
        const bool guard = !(norm <= sum.M_theta);

        double grad_norm = 0.0;
        const bool last = s + 1 == cfg.steps;
        if (!last) {
            if (cfg.update == TdUpdate::Semi) {
                const auto h = chain_semi_gradient(chain, g, theta0, Theta);
                grad_norm = std::sqrt(h.h0 * h.h0 + h.H1.squaredNorm());
                theta0 -= alpha * h.h0;
                Theta -= alpha * h.H1;
                Theta = symmetrize(Theta);
            } else {
                const double cost = sampler.next();
                const Vec& z = sampler.z();
                const Vec& zn = sampler.z_next();
                const double delta = theta0 + z.dot(Theta * z) - cost - g * (theta0 + zn.dot(Theta * zn));
                const double zz = z.squaredNorm();
                grad_norm = std::abs(delta) * std::sqrt(1.0 + zz * zz);
                theta0 -= alpha * delta;
                Theta.noalias() -= (alpha * delta) * z * z.transpose();
            }
        }
        if (s % cfg.history_stride == 0 || last || guard)
            sum.history.push_back({s, theta0_s, err, grad_norm, Delta.norm(), guard});
        if (guard) {
            sum.guard_triggered = true;
            if (cfg.stop_on_guard)
                throw Error(ErrorCode::GuardViolated, "||theta|| = " + std::to_string(norm) +
                                                          " exceeds M_theta = " + std::to_string(sum.M_theta) +
                                                          " at step " + std::to_string(s));
        }
        if (!std::isfinite(theta0) || !Theta.allFinite())
            throw Error(ErrorCode::NumericalOverflow, "TD iterate is not finite at step " + std::to_string(s));
    }
    const double N = static_cast<double>(cfg.steps);
    out.avg0 = acc0 / N;
    out.avg = symmetrize(acc / N);
    out.last0 = theta0;
    out.last = Theta;
    sum.averaged_error = quadratic_mean_square(chain.D, out.avg0 - star0, out.avg - star);
    sum.mean_iterate_error = err_sum / N;
    sum.averaged_param_error = (out.avg - star).norm();
    sum.averaged_theta0_error = std::abs(out.avg0 - star0);
    return out;
}

}  // namespace

TdResult td_learn(const LqrModel& model, const Mat& K, const TdConfig& cfg,
                  const std::optional<ValueParams>& init) {
    if (classify_policy(model, K) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "TD evaluation needs a stable gain");
    const ValueParams star = value_params(model, K);
    const ValueParams start = init.value_or(ValueParams::zero(model.n()));
    if (start.Theta1.rows() != model.n() || start.Theta1.cols() != model.n())
        throw Error(ErrorCode::DimensionMismatch, "initial Theta1 must be n x n");
    auto out = run_engine(model, K, cfg, value_chain(model, K), star.theta0, star.Theta1, start.theta0,
                          start.Theta1, false);
    return {{out.avg0, out.avg}, {out.last0, out.last}, std::move(out.summary)};
}

QTdResult q_td_learn(const LqrModel& model, const Mat& K, const TdConfig& cfg,
                     const std::optional<QParams>& init) {
    if (classify_policy(model, K) != Feasibility::Stable)
        throw Error(ErrorCode::InfeasiblePolicy, "Q evaluation needs a stable gain");
    const auto n = model.n();
    const auto m = n + model.d();
    const QParams star = q_params(model, K);
    const double init0 = init ? init->Theta0 : 0.0;
    const Mat init_block = init ? init->block() : Mat::Zero(m, m);
    if (init_block.rows() != m) throw Error(ErrorCode::DimensionMismatch, "initial Q blocks have wrong size");
    auto out = run_engine(model, K, cfg, q_chain(model, K), star.Theta0, star.block(), init0, init_block, true);
    return {QParams::from_block(out.avg0, out.avg, n), QParams::from_block(out.last0, out.last, n),
            std::move(out.summary)};
}

QUpdateMean q_update_mean(const LqrModel& model, const Mat& K, const QParams& theta, long samples,
                          std::uint64_t seed) {
    if (samples < 2) throw Error(ErrorCode::ConfigInvalid, "need at least two samples");
    const auto m = model.n() + model.d();
    const Mat Theta = theta.block();
    TransitionSampler sampler(model, K, true, SampleMode::IidStationary, seed);
    double s0 = 0.0, q0 = 0.0;
    Mat s = Mat::Zero(m, m), q = Mat::Zero(m, m), h(m, m);
    for (long i = 0; i < samples; ++i) {
        const double cost = sampler.next();
        const Vec& z = sampler.z();
        const Vec& zn = sampler.z_next();
        const double delta = theta.Theta0 + z.dot(Theta * z) - cost -
                             model.gamma * (theta.Theta0 + zn.dot(Theta * zn));
        s0 += delta;
        q0 += delta * delta;
        h.noalias() = delta * z * z.transpose();
        s += h;
        q += h.cwiseProduct(h);
    }
    const double N = static_cast<double>(samples);
    QUpdateMean r;
    r.h0 = s0 / N;
    r.h0_se = std::sqrt(std::max(0.0, q0 / N - r.h0 * r.h0) / (N - 1.0));
    r.H = s / N;
    r.H_se = ((q / N - r.H.cwiseProduct(r.H)).cwiseMax(0.0) / (N - 1.0)).cwiseSqrt();
    return r;
}

}  // namespace lqrl
