#include "lqrl/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace lqrl {

double spectral_radius(const Mat& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1) return std::abs(m(0, 0));
    Eigen::EigenSolver<Mat> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double norm2(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

double sigma_min(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& s = svd.singularValues();
    return s(s.size() - 1);
}

Vec sym_eigenvalues(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

double lambda_min(const Mat& sym) { return sym_eigenvalues(sym).minCoeff(); }

double lambda_max(const Mat& sym) { return sym_eigenvalues(sym).maxCoeff(); }

bool is_positive_definite(const Mat& sym) {
    if (sym.size() == 0) return false;
    const Vec ev = sym_eigenvalues(sym);
    return ev.minCoeff() > 1e-12 * (1.0 + ev.maxCoeff());
}

bool is_symmetric(const Mat& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

Mat sym_sqrt(const Mat& sym) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym));
    const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Vec vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Mat>(v.data(), rows, cols);
}

Mat matrix_power(const Mat& m, int k) {
    Mat result = Mat::Identity(m.rows(), m.cols());
    Mat base = m;
    while (k > 0) {
        if (k & 1) result = result * base;
        base = base * base;
        k >>= 1;
    }
    return result;
}

}  // namespace lqrl
