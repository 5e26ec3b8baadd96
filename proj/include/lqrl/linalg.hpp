#pragma once

#include <Eigen/Dense>

namespace lqrl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Largest eigenvalue modulus of a square matrix.
double spectral_radius(const Mat& m);

/// Largest singular value.
double norm2(const Mat& m);

/// Smallest singular value.
double sigma_min(const Mat& m);

/// Eigenvalues of the symmetric part, ascending.
Vec sym_eigenvalues(const Mat& m);

double lambda_min(const Mat& sym);
double lambda_max(const Mat& sym);

/// Positive definiteness: smallest eigenvalue > 1e-12 * (1 + largest).
bool is_positive_definite(const Mat& sym);

bool is_symmetric(const Mat& m, double rel_tol = 1e-12);

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues are clipped to zero.
Mat sym_sqrt(const Mat& sym);

/// Column-stacking vectorization.
Vec vec(const Mat& m);
Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols);

/// Integer power by repeated squaring.
Mat matrix_power(const Mat& m, int k);

}  // namespace lqrl
