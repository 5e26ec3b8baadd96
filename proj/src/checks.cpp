// Invariant suite behind `lqrl check`.

#include <cmath>
#include <sstream>

#include "lqrl/actor_critic.hpp"
#include "lqrl/error.hpp"
#include "lqrl/exact.hpp"
#include "lqrl/experiments.hpp"
#include "lqrl/harness.hpp"
#include "lqrl/policy_gradient.hpp"
#include "lqrl/policy_iteration.hpp"
#include "lqrl/rng.hpp"
#include "lqrl/sim.hpp"
#include "lqrl/td.hpp"

namespace lqrl {

bool CheckReport::ok() const { return failures() == 0; }

std::size_t CheckReport::failures() const {
    std::size_t f = 0;
    for (const auto& r : results) f += r.passed ? 0 : 1;
    return f;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

std::string le(double value, double bound) { return fmt(value) + " <= " + fmt(bound); }

class Suite {
public:
    Suite(CheckReport& rep, std::string instance) : rep_(rep), instance_(std::move(instance)) {}

    // Runs fn, recording the thrown error as a failure of this invariant.
    template <typename Fn>
    void run(const std::string& module, const std::string& name, Fn&& fn) {
        InvariantResult r{instance_, module, name, false, {}};
        try {
            r.passed = fn(r.detail);
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = e.what();
        }
        rep_.results.push_back(std::move(r));
    }

private:
    CheckReport& rep_;
    std::string instance_;
};

ValueParams perturbed(const ValueParams& star, Rng& rng) {
    const auto n = star.Theta1.rows();
    Mat E(n, n);
    rng.fill_normal(E);
    const double scale = 0.5 * (1.0 + star.Theta1.norm());
    return {star.theta0 + rng.normal(), star.Theta1 + scale * symmetrize(E)};
}

void check_instance(CheckReport& rep, const std::string& name, const LqrModel& m, const Mat& K,
                    const CheckOptions& opts, std::uint64_t seed) {
    Suite s(rep, name);
    const Mat M = m.closed_loop(K);

    s.run("model", "validation", [&](std::string& why) {
        const auto v = check_model(m);
        for (const auto& c : v.checks)
            if (!c.passed) why += c.name + ": " + c.detail + "; ";
        return v.ok();
    });
    s.run("model", "norm chain rho <= ||.||_2 <= ||.||_F <= sqrt(n)||.||_2", [&](std::string& why) {
        const double rho = spectral_radius(M), n2 = norm2(M), nf = M.norm();
        const double sq = std::sqrt(static_cast<double>(M.rows())) * n2;
        why = fmt(rho) + ", " + fmt(n2) + ", " + fmt(nf) + ", " + fmt(sq);
        const double tol = 1e-12 * (1.0 + sq);
        return rho <= n2 + tol && n2 <= nf + tol && nf <= sq + tol;
    });
    s.run("model", "stability certificate bound", [&](std::string& why) {
        const double rho_bar = 0.5 * (1.0 + spectral_radius(M));
        const auto cert = stability_certificate(m, K, rho_bar, 100);
        Mat power = Mat::Identity(M.rows(), M.cols());
        double worst = 0.0;
        for (int k = 1; k <= cert.k_max; ++k) {
            power = power * M;
            worst = std::max(worst, norm2(power) / (cert.Gamma * std::pow(rho_bar, k)));
        }
        why = "max ratio " + fmt(worst);
        return worst <= 1.0 + 1e-12;
    });
    s.run("model", "feasibility monotone in gamma", [&](std::string& why) {
        int prev = 0;
        LqrModel g = m;
        for (double gamma : {0.5, 0.7, 0.9, 0.95, 0.99, 0.999}) {
            g.gamma = gamma;
            const int rank = static_cast<int>(classify_policy(g, K));
            if (rank < prev) {
                why = "class improved at gamma=" + fmt(gamma);
                return false;
            }
            prev = rank;
        }
        return true;
    });

    const auto q = closed_loop_quantities(m, K);
    s.run("exact", "Lyapunov residuals of P, Sigma, D_K", [&](std::string& why) {
        const Mat Dt = m.D_omega_tilde();
        const double rP = lyapunov_residual(M, symmetrize(m.S + K.transpose() * m.R * K), m.gamma, q.P) / q.P.norm();
        const double rS = lyapunov_residual(M.transpose(), m.gamma / (1.0 - m.gamma) * Dt, m.gamma, q.Sigma) / q.Sigma.norm();
        const double rD = lyapunov_residual(M.transpose(), Dt, 1.0, q.stationary()) / q.stationary().norm();
        const double worst = std::max({rP, rS, rD});
        why = le(worst, 1e-9);
        return worst <= 1e-9;
    });
    s.run("exact", "J(K) = V_K(0)", [&](std::string& why) {
        const double v0 = value_params(m, K).theta0;
        why = "J=" + fmt(q.J) + " V(0)=" + fmt(v0);
        return std::abs(v0 - q.J) <= 1e-12 * (1.0 + q.J);
    });
    s.run("exact", "finite-difference gradient", [&](std::string& why) {
        const double h = 1e-5;
        Mat fd(K.rows(), K.cols());
        for (Eigen::Index i = 0; i < K.rows(); ++i)
            for (Eigen::Index j = 0; j < K.cols(); ++j) {
                Mat Kp = K, Km = K;
                Kp(i, j) += h;
                Km(i, j) -= h;
                fd(i, j) = (cost(m, Kp) - cost(m, Km)) / (2.0 * h);
            }
        const double rel = (fd - q.grad).norm() / std::max(q.grad.norm(), 1e-12);
        why = le(rel, 1e-5);
        return rel <= 1e-5;
    });
    s.run("exact", "Riccati stationarity", [&](std::string& why) {
        RiccatiSolution sol;
        try {
            sol = riccati(m, opts.riccati_tol);
        } catch (const Error& e) {
            why = e.what();
            return false;
        }
        const auto qs = closed_loop_quantities(m, sol.K_star);
        const double g = qs.grad.norm();
        const double are = (riccati_map(m, sol.P_gamma) - sol.P_gamma).norm() / sol.P_gamma.norm();
        why = "||grad J(K*)|| " + le(g, 1e-7 * (1.0 + qs.J)) + ", ARE " + le(are, 1e-9);
        return g <= 1e-7 * (1.0 + qs.J) && are <= 1e-9;
    });
    s.run("exact", "exact improvement decreases J", [&](std::string& why) {
        const double J1 = cost(m, improve_exact(m, K));
        why = "J " + fmt(q.J) + " -> " + fmt(J1);
        return J1 < q.J || q.grad.norm() <= 1e-9 * (1.0 + q.J);
    });

    s.run("sim", "rollout reproducible", [&](std::string& why) {
        const auto a = rollout(m, K, 50, seed);
        const auto b = rollout(m, K, 50, seed);
        const bool same = a.X == b.X && a.U == b.U && a.c == b.c;
        if (!same) why = "trajectories differ";
        return same;
    });

    const ValueParams star = value_params(m, K);
    s.run("td", "semi-gradient vanishes at theta*", [&](std::string& why) {
        const double h = semi_gradient(m, K, star).norm();
        why = le(h, 1e-9 * (1.0 + star.norm()));
        return h <= 1e-9 * (1.0 + star.norm());
    });
    s.run("td", "descent inequality", [&](std::string& why) {
        Rng rng(derive_seed(seed, 1));
        double worst = INFINITY;
        for (int i = 0; i < 5; ++i) {
            const ValueParams th = perturbed(star, rng);
            const double lhs = semi_gradient(m, K, th).dot(th - star);
            const double rhs = (1.0 - m.gamma) * value_error(m, K, th);
            worst = std::min(worst, lhs - rhs);
        }
        why = "min lhs - rhs " + fmt(worst);
        return worst >= -1e-10;
    });
    s.run("td", "kappa equivalence", [&](std::string& why) {
        Rng rng(derive_seed(seed, 2));
        const double kappa = td_conditioning(m, K);
        double worst = INFINITY;
        for (int i = 0; i < 5; ++i) {
            const ValueParams th = perturbed(star, rng);
            const double diff = (th - star).norm();
            worst = std::min(worst, value_error(m, K, th) - kappa * diff * diff);
        }
        why = "min slack " + fmt(worst);
        return worst >= -1e-10;
    });
    s.run("td", "symmetrization leaves the critic unchanged", [&](std::string& why) {
        Rng rng(derive_seed(seed, 3));
        Mat T(m.n(), m.n());
        rng.fill_normal(T);
        Vec x(m.n());
        rng.fill_normal(x);
        const double a = ValueParams{0.3, T}.value(x);
        const double b = ValueParams{0.3, symmetrize(T)}.value(x);
        why = "difference " + fmt(std::abs(a - b));
        return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a));
    });

    s.run("policy-iteration", "Q-form and Gauss-Newton updates agree", [&](std::string& why) {
        const Mat a = improve(q_params(m, K));
        const Mat b = improve_exact(m, K);
        const double rel = (a - b).norm() / std::max(1.0, b.norm());
        why = le(rel, 1e-9);
        return rel <= 1e-9;
    });
    PiReport pi;
    s.run("policy-iteration", "exact run", [&](std::string& why) {
        PiConfig cfg;
        cfg.T = 10;
        pi = run_policy_iteration(m, K, cfg);
        why = pi.stop_reason;
        return !pi.left_domain;
    });
    s.run("policy-iteration", "monotone descent", [&](std::string& why) {
        for (std::size_t t = 1; t < pi.iterates.size(); ++t) {
            const auto& prev = pi.iterates[t - 1];
            if (pi.iterates[t].J > prev.J + 1e-12 * (1.0 + prev.J) && prev.gap > pi_gap_floor(pi.J_star)) {
                why = "J increased at t=" + std::to_string(t);
                return false;
            }
        }
        return !pi.iterates.empty();
    });
    s.run("policy-iteration", "contraction ratio <= 1 - alpha_c", [&](std::string& why) {
        why = std::to_string(pi.contraction_violations) + " violations, alpha_c=" + fmt(pi.alpha_c);
        return !pi.iterates.empty() && pi.contraction_violations == 0;
    });
    s.run("policy-iteration", "sublevel persistence", [&](std::string& why) {
        if (pi.sublevel_exit) why = "an iterate left the sublevel set";
        return !pi.iterates.empty() && !pi.sublevel_exit;
    });

    s.run("policy-gradient", "fixed seed reproduces the run", [&](std::string& why) {
        PgConfig cfg;
        cfg.T = 5;
        cfg.L = 10;
        cfg.alpha = 1e-4;
        cfg.seed = seed;
        const auto a = run_policy_gradient(m, K, cfg);
        const auto b = run_policy_gradient(m, K, cfg);
        const bool same = a.K_final == b.K_final && a.transitions == b.transitions;
        if (!same) why = "runs differ";
        return same;
    });
    s.run("actor-critic", "critic offset shifts each TD error by -(1-g)c", [&](std::string& why) {
        const auto traj = rollout(m, K, 30, derive_seed(seed, 4));
        Mat G0, G1, E = Mat::Zero(K.rows(), K.cols());
        ac_gradient_into(m, star, traj, G0);
        ac_gradient_into(m, ValueParams{star.theta0 + 1.0, star.Theta1}, traj, G1);
        double disc = 1.0;
        for (Eigen::Index t = 0; t <= traj.L(); ++t) {
            E += disc * traj.eta.col(t) * traj.X.col(t).transpose();
            disc *= m.gamma;
        }
        const Mat expect = -(1.0 - m.gamma) * E / (m.sigma * m.sigma);
        const double err = (G1 - G0 - expect).norm() / std::max(1.0, expect.norm());
        why = le(err, 1e-9);
        return err <= 1e-9;
    });
}

}  // namespace

CheckReport run_checks(const CheckOptions& opts) {
    CheckReport rep;
    if (opts.random_instances < 0) throw Error(ErrorCode::ConfigInvalid, "instance count must be >= 0");
    struct Named {
        std::string name;
        LqrModel model;
        Mat K;
    };
    std::vector<Named> set;
    if (opts.model) {
        validate(*opts.model);
        Mat K = opts.K ? *opts.K : riccati(*opts.model).K_star;
        if (classify_policy(*opts.model, K) != Feasibility::Stable)
            throw Error(ErrorCode::NotStable, "the check suite needs a stable gain");
        set.push_back({"model", *opts.model, K});
    } else if (opts.include_ref1) {
        set.push_back({"REF1", ref1(), ref1_nilpotent_gain()});
    }
    for (int i = 0; i < opts.random_instances; ++i) {
        const std::uint64_t s = derive_seed(opts.instance_seed, static_cast<std::uint64_t>(i));
        const int n = 1 + static_cast<int>(s % 4);
        const int d = 1 + static_cast<int>((s >> 8) % 2);
        auto inst = random_instance(s, n, d);
        set.push_back({"random" + std::to_string(i) + "_n" + std::to_string(n) + "_d" + std::to_string(d),
                       inst.model, inst.K});
    }
    if (set.empty()) {
        rep.warnings.push_back("empty instance set: nothing was checked");
        return rep;
    }
    for (std::size_t i = 0; i < set.size(); ++i)
        check_instance(rep, set[i].name, set[i].model, set[i].K, opts,
                       derive_seed(opts.instance_seed ^ 0x5eedULL, static_cast<std::uint64_t>(i)));
    return rep;
}

}  // namespace lqrl
