#include "lqrl/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "lqrl/actor_critic.hpp"
#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/parallel.hpp"
#include "lqrl/policy_iteration.hpp"
#include "lqrl/rng.hpp"
#include "lqrl/sim.hpp"

namespace lqrl {

namespace {

// Replicates are grouped in fixed blocks so reductions never depend on the thread count.
constexpr long kBlock = 1000;

Mat random_spd(Rng& rng, Eigen::Index n, double floor) {
    Mat G(n, n);
    rng.fill_normal(G);
    return symmetrize(G * G.transpose() / static_cast<double>(n) + floor * Mat::Identity(n, n));
}

}  // namespace

Instance random_instance(std::uint64_t seed, int n, int d) {
    if (n < 1 || d < 1) throw Error(ErrorCode::ConfigInvalid, "instance dimensions must be positive");
    Rng rng(seed);
    LqrModel m;
    m.A.resize(n, n);
    rng.fill_normal(m.A);
    const double target = 0.3 + 0.6 * rng.uniform();
    m.A *= target / std::max(spectral_radius(m.A), 1e-12);
    m.B.resize(n, d);
    rng.fill_normal(m.B);
    m.S = random_spd(rng, n, 0.5);
    m.R = random_spd(rng, d, 0.5);
    m.D_omega = 0.05 * random_spd(rng, n, 0.2);
    m.gamma = 0.8 + 0.15 * rng.uniform();
    m.sigma = 0.1 + 0.3 * rng.uniform();

    Mat K = Mat::Zero(d, n);
    for (int attempt = 0; attempt < 100; ++attempt) {
        Mat trial(d, n);
        rng.fill_normal(trial);
        trial *= 0.2;
        if (spectral_radius(m.closed_loop(trial)) < 0.95) {
            K = trial;
            break;
        }
    }
    return {m, K};
}

TdRateSweep td_rate_sweep(const LqrModel& model, const Mat& K, const std::vector<long>& Ns, int seeds,
                          std::uint64_t master, TdConfig base) {
    if (Ns.size() < 2 || seeds < 1) throw Error(ErrorCode::ConfigInvalid, "rate sweep needs >= 2 N values and >= 1 seed");
    const std::size_t cells = Ns.size() * static_cast<std::size_t>(seeds);
    std::vector<TdSummary> out(cells);
    parallel_for(cells, [&](std::size_t i) {
        TdConfig cfg = base;
        cfg.steps = Ns[i / static_cast<std::size_t>(seeds)];
        cfg.seed = derive_seed(master, i % static_cast<std::size_t>(seeds));
        cfg.history_stride = cfg.steps;
        out[i] = td_learn(model, K, cfg).summary;
    });
    TdRateSweep sweep;
    std::vector<double> xs, yi, ya;
    for (std::size_t k = 0; k < Ns.size(); ++k) {
        TdRatePoint p;
        p.N = Ns[k];
        for (int s = 0; s < seeds; ++s) {
            const auto& sum = out[k * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(s)];
            p.mean_iterate_error += sum.mean_iterate_error / seeds;
            p.averaged_error += sum.averaged_error / seeds;
            p.alpha = sum.alpha;
        }
        sweep.points.push_back(p);
        xs.push_back(static_cast<double>(p.N));
        yi.push_back(p.mean_iterate_error);
        ya.push_back(p.averaged_error);
    }
    sweep.iterate_fit = loglog_fit(xs, yi);
    sweep.averaged_fit = loglog_fit(xs, ya);
    return sweep;
}

PgBiasCurve pg_bias_curve(const LqrModel& model, const Mat& K, const std::vector<long>& Ls_in, long L_ref,
                          long reps, std::uint64_t seed) {
    std::vector<long> Ls = Ls_in;
    std::sort(Ls.begin(), Ls.end());
    if (Ls.empty() || Ls.front() < 0 || Ls.back() >= L_ref)
        throw Error(ErrorCode::ConfigInvalid, "bias grid must lie in [0, L_ref)");
    if (reps < 2) throw Error(ErrorCode::ConfigInvalid, "bias curve needs reps >= 2");
    const auto d = model.d();
    const auto n = model.n();
    const std::size_t nL = Ls.size();

    struct Acc {
        std::vector<Mat> diff, diff_sq;
        std::vector<double> m2;
        Mat ref, ref_sq;
    };
    const long blocks = (reps + kBlock - 1) / kBlock;
    std::vector<Acc> acc(static_cast<std::size_t>(blocks));
    parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t b) {
        Acc& a = acc[b];
        a.diff.assign(nL, Mat::Zero(d, n));
        a.diff_sq.assign(nL, Mat::Zero(d, n));
        a.m2.assign(nL, 0.0);
        a.ref = Mat::Zero(d, n);
        a.ref_sq = Mat::Zero(d, n);
        Simulator sim(model, K);
        Trajectory traj;
        std::vector<Mat> GL(nL, Mat::Zero(d, n));
        Mat S1(d, n), S2(d, n), E(d, n), G(d, n);
        const double inv_s2 = 1.0 / (model.sigma * model.sigma);
        const long lo = static_cast<long>(b) * kBlock;
        const long hi = std::min(reps, lo + kBlock);
        for (long r = lo; r < hi; ++r) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
            sim.rollout(traj, L_ref, rng, Start::zero());
            // G^(L) = (C_L sum_{t<=L} E_t - sum_{t<=L} E_t C_{t-1}) / sigma^2, C_k = sum_{j<=k} g^j c_j.
            S1.setZero();
            S2.setZero();
            double C_prev = 0.0, disc = 1.0;
            std::size_t next = 0;
            for (long t = 0; t <= L_ref; ++t) {
                E.noalias() = traj.eta.col(t) * traj.X.col(t).transpose();
                S1 += E;
                S2 += C_prev * E;
                const double C = C_prev + disc * traj.c(t);
                while (next < nL && Ls[next] == t) {
                    GL[next] = inv_s2 * (C * S1 - S2);
                    ++next;
                }
                C_prev = C;
                disc *= model.gamma;
            }
            G = inv_s2 * (C_prev * S1 - S2);
            a.ref += G;
            a.ref_sq += G.cwiseProduct(G);
            for (std::size_t k = 0; k < nL; ++k) {
                const Mat diff = GL[k] - G;
                a.diff[k] += diff;
                a.diff_sq[k] += diff.cwiseProduct(diff);
                a.m2[k] += GL[k].squaredNorm();
            }
        }
    });

    PgBiasCurve curve;
    curve.L_ref = L_ref;
    curve.reps = reps;
    curve.exact_grad = closed_loop_quantities(model, K).grad;
    const double R = static_cast<double>(reps);
    Mat ref = Mat::Zero(d, n), ref_sq = Mat::Zero(d, n);
    for (const auto& a : acc) {
        ref += a.ref;
        ref_sq += a.ref_sq;
    }
    curve.ref_mean = ref / R;
    curve.ref_se = ((ref_sq / R - curve.ref_mean.cwiseProduct(curve.ref_mean)) * (R / (R - 1.0)))
                       .cwiseMax(0.0)
                       .cwiseSqrt() /
                   std::sqrt(R);
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < nL; ++k) {
        Mat s = Mat::Zero(d, n), sq = Mat::Zero(d, n);
        double m2 = 0.0;
        for (const auto& a : acc) {
            s += a.diff[k];
            sq += a.diff_sq[k];
            m2 += a.m2[k];
        }
        PgBiasPoint p;
        p.L = Ls[k];
        p.bias = s / R;
        p.bias_norm = p.bias.norm();
        const Mat var = ((sq / R - p.bias.cwiseProduct(p.bias)) * (R / (R - 1.0))).cwiseMax(0.0);
        p.bias_se = std::sqrt(var.sum() / R);
        p.second_moment = m2 / R;
        curve.points.push_back(p);
        if (p.bias_norm > 0.0) {
            xs.push_back(static_cast<double>(p.L));
            ys.push_back(std::log(p.bias_norm));
        }
    }
    if (xs.size() >= 2) curve.log_bias_fit = linear_fit(xs, ys);
    return curve;
}

Mat discounted_second_moment_sum(const LqrModel& model, const Mat& K, long L) {
    const Mat M = model.closed_loop(K);
    const Mat Dt = model.D_omega_tilde();
    Mat C = Mat::Zero(model.n(), model.n());
    Mat sum = Mat::Zero(model.n(), model.n());
    double disc = model.gamma;
    for (long t = 0; t <= L; ++t) {
        sum += disc * C;
        C = M * C * M.transpose() + Dt;
        disc *= model.gamma;
    }
    return sum;
}

AcBiasLinearity ac_bias_linearity(const LqrModel& model, const Mat& K, const Mat& U_in, long L,
                                  const std::vector<double>& eps_grid, long reps, std::uint64_t seed) {
    if (eps_grid.size() < 2 || reps < 2) throw Error(ErrorCode::ConfigInvalid, "need >= 2 grid points and reps");
    if (U_in.rows() != model.n() || U_in.cols() != model.n() || U_in.norm() == 0.0)
        throw Error(ErrorCode::DimensionMismatch, "critic perturbation must be a nonzero n x n matrix");
    const Mat U = symmetrize(U_in) / symmetrize(U_in).norm();
    const ValueParams star = value_params(model, K);
    const ValueParams shifted{star.theta0, star.Theta1 + U};
    const Mat pred = 2.0 * model.B.transpose() * U * model.closed_loop(K) * discounted_second_moment_sum(model, K, L);
    AcBiasLinearity out;
    out.predicted_slope = pred.norm();
    if (out.predicted_slope == 0.0) throw Error(ErrorCode::ConfigInvalid, "perturbation has no predicted effect");
    out.direction = pred / out.predicted_slope;
    const Mat grad = closed_loop_quantities(model, K).grad;

    struct Acc {
        double a = 0, aa = 0, b = 0, bb = 0, ab = 0;
    };
    const long blocks = (reps + kBlock - 1) / kBlock;
    std::vector<Acc> acc(static_cast<std::size_t>(blocks));
    parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t blk) {
        Simulator sim(model, K);
        Trajectory traj;
        Mat G0, G1;
        Acc& s = acc[blk];
        const long lo = static_cast<long>(blk) * kBlock;
        const long hi = std::min(reps, lo + kBlock);
        for (long r = lo; r < hi; ++r) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
            sim.rollout(traj, L, rng, Start::zero());
            ac_gradient_into(model, star, traj, G0);
            ac_gradient_into(model, shifted, traj, G1);
            const double a = G0.cwiseProduct(out.direction).sum();
            const double b = (G1 - G0).cwiseProduct(out.direction).sum();
            s.a += a;
            s.aa += a * a;
            s.b += b;
            s.bb += b * b;
            s.ab += a * b;
        }
    });
    Acc t;
    for (const auto& s : acc) {
        t.a += s.a;
        t.aa += s.aa;
        t.b += s.b;
        t.bb += s.bb;
        t.ab += s.ab;
    }
    const double R = static_cast<double>(reps);
    const double ma = t.a / R, mb = t.b / R;
    const double va = (t.aa / R - ma * ma) * R / (R - 1.0);
    const double vb = (t.bb / R - mb * mb) * R / (R - 1.0);
    const double cab = (t.ab / R - ma * mb) * R / (R - 1.0);
    const double g_dir = grad.cwiseProduct(out.direction).sum();
    std::vector<double> xs, ys;
    for (double e : eps_grid) {
        AcBiasPoint p;
        p.eps0 = e;
        p.bias = ma - g_dir + e * mb;
        p.bias_se = std::sqrt(std::max(0.0, va + e * e * vb + 2.0 * e * cab) / R);
        out.points.push_back(p);
        xs.push_back(e);
        ys.push_back(p.bias);
    }
    out.fit = linear_fit(xs, ys);
    out.slope_se = std::sqrt(std::max(0.0, vb) / R);
    return out;
}

std::vector<PlPoint> pl_grid_scalar(const LqrModel& model, double lo, double hi, int points) {
    if (model.n() != 1 || model.d() != 1) throw Error(ErrorCode::DimensionMismatch, "scalar grid needs n = d = 1");
    if (points < 2 || !(hi > lo)) throw Error(ErrorCode::ConfigInvalid, "grid needs >= 2 points and hi > lo");
    const auto sol = riccati(model);
    const double J_star = cost(model, sol.K_star);
    const double s_star = norm2(closed_loop_quantities(model, sol.K_star).Sigma);
    std::vector<PlPoint> out;
    for (int i = 0; i < points; ++i) {
        const double k = lo + (hi - lo) * i / (points - 1);
        const Mat K = Mat::Constant(1, 1, k);
        if (classify_policy(model, K) != Feasibility::Stable)
            throw Error(ErrorCode::NotStable, "grid point K=" + std::to_string(k) + " is not stable");
        const auto q = closed_loop_quantities(model, K);
        out.push_back({k, q.grad.squaredNorm(), q.J - J_star, pl_constant(model, K, s_star),
                       gradient_dominance_constant(model, K, s_star)});
    }
    return out;
}

int pi_steps_to_tolerance(const LqrModel& model, const Mat& K0, double rel, int max_steps) {
    const double J_star = cost(model, riccati(model).K_star);
    const double target = rel * (cost(model, K0) - J_star);
    Mat K = K0;
    for (int t = 0; t <= max_steps; ++t) {
        if (cost(model, K) - J_star <= target) return t;
        K = improve_exact(model, K);
    }
    throw Error(ErrorCode::NoConvergence, "policy iteration did not reach the tolerance");
}

}  // namespace lqrl
