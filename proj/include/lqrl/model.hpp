#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "lqrl/linalg.hpp"

namespace lqrl {

/// Discounted LQR instance x' = A x + B u + w with Gaussian policy noise.
struct LqrModel {
    Mat A;        ///< n x n
    Mat B;        ///< n x d
    Mat S;        ///< state cost, n x n
    Mat R;        ///< control cost, d x d
    double gamma = 0.9;
    double sigma = 0.1;  ///< policy noise standard deviation
    Mat D_omega;  ///< process-noise covariance, n x n

    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
    [[nodiscard]] Eigen::Index d() const { return B.cols(); }

    /// Effective noise covariance B (sigma^2 I) B^T + D_omega.
    [[nodiscard]] Mat D_omega_tilde() const;

    /// Closed-loop matrix A + B K.
    [[nodiscard]] Mat closed_loop(const Mat& K) const { return A + B * K; }
};

/// Scalar instance (A=0.5, B=1, S=R=1, gamma=0.9, sigma=0.1, D_omega=0.04).
LqrModel ref1();

/// Gain with A + B K = 0 on `ref1()`.
inline Mat ref1_nilpotent_gain() { return Mat::Constant(1, 1, -0.5); }

struct ValidationCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    Mat D_omega_tilde;

    [[nodiscard]] bool ok() const;
};

/// Evaluates every model invariant; does not throw.
ValidationReport check_model(const LqrModel& model);

/// Like `check_model`, but throws DimensionMismatch / NotPositiveDefinite on the first failure.
ValidationReport validate(const LqrModel& model);

enum class Feasibility { Stable, FiniteCost, Infeasible };

std::string to_string(Feasibility f);

inline constexpr double kFeasibilityTol = 1e-10;

Feasibility classify_policy(const LqrModel& model, const Mat& K);

/// Gain matrix with its cached feasibility class.
class Policy {
public:
    Policy(const LqrModel& model, Mat K);

    [[nodiscard]] const Mat& K() const { return K_; }
    [[nodiscard]] Feasibility feasibility() const { return feasibility_; }
    [[nodiscard]] bool stable() const { return feasibility_ == Feasibility::Stable; }
    [[nodiscard]] bool finite_cost() const { return feasibility_ != Feasibility::Infeasible; }

private:
    Mat K_;
    Feasibility feasibility_;
};

/// Bound ||(A+BK)^k||_2 <= Gamma * rho_bar^k verified for k = 0..k_max.
struct StabilityCertificate {
    double rho_bar = 0.0;
    double Gamma = 1.0;
    int k_max = 0;
};

StabilityCertificate stability_certificate(const LqrModel& model, const Mat& K, double rho_bar,
                                           int k_max = 200);

/// Throws DimensionMismatch unless K is d x n for this model.
void check_gain_shape(const LqrModel& model, const Mat& K);

// JSON schema: keys A, B, S, R, gamma, sigma, D_omega; matrices as row-major nested arrays.
nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j, const std::string& field);
nlohmann::json model_to_json(const LqrModel& model);
LqrModel model_from_json(const nlohmann::json& j);
LqrModel load_model(const std::string& path);
void save_model(const LqrModel& model, const std::string& path);

/// Reads a gain from either a bare nested array or an object with key "K".
Mat load_gain(const std::string& path);
void save_gain(const Mat& K, const std::string& path);

}  // namespace lqrl
