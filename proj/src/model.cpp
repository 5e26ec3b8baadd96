#include "lqrl/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lqrl/error.hpp"

namespace lqrl {

using nlohmann::json;

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::NotStable: return "NotStable";
        case ErrorCode::RhoBarTooSmall: return "RhoBarTooSmall";
        case ErrorCode::InfeasiblePolicy: return "InfeasiblePolicy";
        case ErrorCode::SpectralConditionViolated: return "SpectralConditionViolated";
        case ErrorCode::NonSymmetricInput: return "NonSymmetricInput";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::NumericalOverflow: return "NumericalOverflow";
        case ErrorCode::GuardViolated: return "GuardViolated";
        case ErrorCode::SingularTheta22: return "SingularTheta22";
        case ErrorCode::PolicyMismatch: return "PolicyMismatch";
        case ErrorCode::TrajectoryTooShort: return "TrajectoryTooShort";
        case ErrorCode::IterateLeftDomain: return "IterateLeftDomain";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::ModelFileMissing: return "ModelFileMissing";
    }
    return "Unknown";
}

Mat LqrModel::D_omega_tilde() const {
    return B * (sigma * sigma) * B.transpose() + D_omega;
}

LqrModel ref1() {
    LqrModel m;
    m.A = Mat::Constant(1, 1, 0.5);
    m.B = Mat::Constant(1, 1, 1.0);
    m.S = Mat::Constant(1, 1, 1.0);
    m.R = Mat::Constant(1, 1, 1.0);
    m.gamma = 0.9;
    m.sigma = 0.1;
    m.D_omega = Mat::Constant(1, 1, 0.04);
    return m;
}

bool ValidationReport::ok() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

namespace {

ValidationCheck make_check(std::string name, bool passed, std::string detail = {}) {
    return ValidationCheck{std::move(name), passed, std::move(detail)};
}

bool dims_ok(const LqrModel& m, std::string& why) {
    const auto n = m.A.rows();
    std::ostringstream os;
    if (m.A.cols() != n) os << "A is not square; ";
    if (m.B.rows() != n) os << "B has " << m.B.rows() << " rows, expected " << n << "; ";
    if (m.S.rows() != n || m.S.cols() != n) os << "S must be " << n << "x" << n << "; ";
    if (m.R.rows() != m.B.cols() || m.R.cols() != m.B.cols())
        os << "R must be " << m.B.cols() << "x" << m.B.cols() << "; ";
    if (m.D_omega.rows() != n || m.D_omega.cols() != n) os << "D_omega must be " << n << "x" << n << "; ";
    if (n == 0 || m.B.cols() == 0) os << "empty dimensions; ";
    why = os.str();
    return why.empty();
}

}  // namespace

ValidationReport check_model(const LqrModel& model) {
    ValidationReport report;
    std::string why;
    const bool dims = dims_ok(model, why);
    report.checks.push_back(make_check("dimensions", dims, why));
    if (!dims) return report;

    auto pd = [&](const char* name, const Mat& m) {
        const bool sym = is_symmetric(m);
        const bool ok = sym && is_positive_definite(m);
        report.checks.push_back(
            make_check(std::string(name) + " positive definite", ok,
                       sym ? "lambda_min=" + std::to_string(lambda_min(m)) : "not symmetric"));
    };
    pd("S", model.S);
    pd("R", model.R);
    pd("D_omega", model.D_omega);
    report.checks.push_back(make_check("0 < gamma < 1", model.gamma > 0.0 && model.gamma < 1.0,
                                       "gamma=" + std::to_string(model.gamma)));
    report.checks.push_back(
        make_check("sigma > 0", model.sigma > 0.0, "sigma=" + std::to_string(model.sigma)));
    report.D_omega_tilde = model.D_omega_tilde();
    pd("D_omega_tilde", report.D_omega_tilde);
    return report;
}

ValidationReport validate(const LqrModel& model) {
    ValidationReport report = check_model(model);
    for (const auto& c : report.checks) {
        if (c.passed) continue;
        if (c.name == "dimensions") throw Error(ErrorCode::DimensionMismatch, c.detail);
        if (c.name.find("positive definite") != std::string::npos) {
            const std::string field = c.name.substr(0, c.name.find(' '));
            throw Error(ErrorCode::NotPositiveDefinite, field + " (" + c.detail + ")");
        }
        throw Error(ErrorCode::ConfigInvalid, c.name + " violated: " + c.detail);
    }
    return report;
}

std::string to_string(Feasibility f) {
    switch (f) {
        case Feasibility::Stable: return "Stable";
        case Feasibility::FiniteCost: return "FiniteCost";
        case Feasibility::Infeasible: return "Infeasible";
    }
    return "Unknown";
}

void check_gain_shape(const LqrModel& model, const Mat& K) {
    if (K.rows() != model.d() || K.cols() != model.n()) {
        std::ostringstream os;
        os << "gain is " << K.rows() << "x" << K.cols() << ", expected " << model.d() << "x"
           << model.n();
        throw Error(ErrorCode::DimensionMismatch, os.str());
    }
}

Feasibility classify_policy(const LqrModel& model, const Mat& K) {
    check_gain_shape(model, K);
    const double rho = spectral_radius(model.closed_loop(K));
    if (rho < 1.0 - kFeasibilityTol) return Feasibility::Stable;
    if (rho < 1.0 / std::sqrt(model.gamma) - kFeasibilityTol) return Feasibility::FiniteCost;
    return Feasibility::Infeasible;
}

Policy::Policy(const LqrModel& model, Mat K)
    : K_(std::move(K)), feasibility_(classify_policy(model, K_)) {}

StabilityCertificate stability_certificate(const LqrModel& model, const Mat& K, double rho_bar,
                                           int k_max) {
    check_gain_shape(model, K);
    const Mat M = model.closed_loop(K);
    const double rho = spectral_radius(M);
    if (rho >= 1.0 - kFeasibilityTol)
        throw Error(ErrorCode::NotStable, "rho(A+BK)=" + std::to_string(rho));
    if (!(rho_bar > rho) || rho_bar >= 1.0)
        throw Error(ErrorCode::RhoBarTooSmall, "need rho(A+BK)=" + std::to_string(rho) +
                                                   " < rho_bar=" + std::to_string(rho_bar) + " < 1");
    StabilityCertificate cert{rho_bar, 1.0, k_max};
    Mat power = Mat::Identity(M.rows(), M.cols());
    double scale = 1.0;
    for (int k = 1; k <= k_max; ++k) {
        power = power * M;
        scale *= rho_bar;
        cert.Gamma = std::max(cert.Gamma, norm2(power) / scale);
    }
    return cert;
}

json matrix_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat matrix_from_json(const json& j, const std::string& field) {
    if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty())
        throw Error(ErrorCode::ConfigInvalid, field + " must be a non-empty nested array");
    // A flat array is read as a single row.
    if (!j.front().is_array()) {
        Mat m(1, static_cast<Eigen::Index>(j.size()));
        for (std::size_t c = 0; c < j.size(); ++c) {
            if (!j[c].is_number()) throw Error(ErrorCode::ConfigInvalid, field + " has a non-numeric entry");
            m(0, static_cast<Eigen::Index>(c)) = j[c].get<double>();
        }
        return m;
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw Error(ErrorCode::ConfigInvalid, field + " is ragged");
        for (Eigen::Index c = 0; c < cols; ++c) {
            const auto& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) throw Error(ErrorCode::ConfigInvalid, field + " has a non-numeric entry");
            m(r, c) = v.get<double>();
        }
    }
    return m;
}

json model_to_json(const LqrModel& model) {
    return json{{"A", matrix_to_json(model.A)},     {"B", matrix_to_json(model.B)},
                {"S", matrix_to_json(model.S)},     {"R", matrix_to_json(model.R)},
                {"gamma", model.gamma},             {"sigma", model.sigma},
                {"D_omega", matrix_to_json(model.D_omega)}};
}

LqrModel model_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "model must be a JSON object");
    static const char* kKeys[] = {"A", "B", "S", "R", "gamma", "sigma", "D_omega"};
    for (const auto* key : kKeys)
        if (!j.contains(key)) throw Error(ErrorCode::ConfigInvalid, std::string("model is missing key ") + key);
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const auto* k : kKeys) known = known || key == k;
        if (!known) throw Error(ErrorCode::ConfigInvalid, "unknown model key " + key);
    }
    if (!j["gamma"].is_number() || !j["sigma"].is_number())
        throw Error(ErrorCode::ConfigInvalid, "gamma and sigma must be numbers");
    LqrModel m;
    m.A = matrix_from_json(j["A"], "A");
    m.B = matrix_from_json(j["B"], "B");
    m.S = matrix_from_json(j["S"], "S");
    m.R = matrix_from_json(j["R"], "R");
    m.gamma = j["gamma"].get<double>();
    m.sigma = j["sigma"].get<double>();
    m.D_omega = matrix_from_json(j["D_omega"], "D_omega");
    return m;
}

namespace {

json read_json_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::ModelFileMissing, path);
    std::ifstream in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ConfigInvalid, "cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace

LqrModel load_model(const std::string& path) { return model_from_json(read_json_file(path)); }

void save_model(const LqrModel& model, const std::string& path) {
    write_json_file(model_to_json(model), path);
}

Mat load_gain(const std::string& path) {
    const json j = read_json_file(path);
    if (j.is_object()) {
        if (!j.contains("K")) throw Error(ErrorCode::ConfigInvalid, path + ": expected key K");
        return matrix_from_json(j["K"], "K");
    }
    return matrix_from_json(j, "K");
}

void save_gain(const Mat& K, const std::string& path) {
    write_json_file(json{{"K", matrix_to_json(K)}}, path);
}

}  // namespace lqrl
