#pragma once

#include <cmath>

#include "lqrl/linalg.hpp"

namespace lqrl {

/// Linear value-function parameters: V(x) = theta0 + x^T Theta1 x.
struct ValueParams {
    double theta0 = 0.0;
    Mat Theta1;

    static ValueParams zero(Eigen::Index n) { return {0.0, Mat::Zero(n, n)}; }

    [[nodiscard]] double value(const Vec& x) const { return theta0 + x.dot(Theta1 * x); }

    /// Euclidean norm of the stacked vector [theta0; vec(Theta1)].
    [[nodiscard]] double norm() const {
        return std::sqrt(theta0 * theta0 + Theta1.squaredNorm());
    }

    [[nodiscard]] double dot(const ValueParams& o) const {
        return theta0 * o.theta0 + Theta1.cwiseProduct(o.Theta1).sum();
    }

    /// Stacked vector [theta0; vec(Theta1)].
    [[nodiscard]] Vec stacked() const {
        Vec v(1 + Theta1.size());
        v(0) = theta0;
        v.tail(Theta1.size()) = lqrl::vec(Theta1);
        return v;
    }

    ValueParams& operator+=(const ValueParams& o) {
        theta0 += o.theta0;
        Theta1 += o.Theta1;
        return *this;
    }
    ValueParams& operator-=(const ValueParams& o) {
        theta0 -= o.theta0;
        Theta1 -= o.Theta1;
        return *this;
    }
    ValueParams& operator*=(double s) {
        theta0 *= s;
        Theta1 *= s;
        return *this;
    }
    friend ValueParams operator+(ValueParams a, const ValueParams& b) { return a += b; }
    friend ValueParams operator-(ValueParams a, const ValueParams& b) { return a -= b; }
    friend ValueParams operator*(double s, ValueParams a) { return a *= s; }
};

/// Quadratic Q-function parameters:
/// Q(x,u) = Theta0 + [x;u]^T [[Theta11, Theta12], [Theta12^T, Theta22]] [x;u].
struct QParams {
    double Theta0 = 0.0;
    Mat Theta11;
    Mat Theta12;
    Mat Theta22;

    [[nodiscard]] Mat Theta21() const { return Theta12.transpose(); }

    /// Full (n+d) x (n+d) block matrix.
    [[nodiscard]] Mat block() const {
        const auto n = Theta11.rows();
        const auto d = Theta22.rows();
        Mat m(n + d, n + d);
        m.topLeftCorner(n, n) = Theta11;
        m.topRightCorner(n, d) = Theta12;
        m.bottomLeftCorner(d, n) = Theta12.transpose();
        m.bottomRightCorner(d, d) = Theta22;
        return m;
    }

    /// Splits a block matrix, symmetrizing it first.
    static QParams from_block(double theta0, const Mat& block, Eigen::Index n) {
        const Mat sym = symmetrize(block);
        const auto d = sym.rows() - n;
        return {theta0, sym.topLeftCorner(n, n), sym.topRightCorner(n, d),
                sym.bottomRightCorner(d, d)};
    }

    [[nodiscard]] double value(const Vec& x, const Vec& u) const {
        return Theta0 + x.dot(Theta11 * x) + 2.0 * x.dot(Theta12 * u) + u.dot(Theta22 * u);
    }
};

}  // namespace lqrl
