#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "doctest.h"
#include "lqrl/error.hpp"
#include "lqrl/linalg.hpp"
#include "lqrl/model.hpp"

using namespace lqrl;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

Mat m2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m << a, b, c, d;
    return m;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an lqrl::Error");
    return ErrorCode::ConfigInvalid;
}

}  // namespace

TEST_CASE("REF1 validates and D_omega_tilde is 0.05") {
    const auto model = ref1();
    const auto rep = validate(model);
    CHECK(rep.ok());
    REQUIRE(rep.D_omega_tilde.size() == 1);
    CHECK(rep.D_omega_tilde(0, 0) == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("validation failures carry the right code") {
    auto bad = ref1();
    bad.S = m1(0.0);
    CHECK(code_of([&] { validate(bad); }) == ErrorCode::NotPositiveDefinite);
    CHECK_FALSE(check_model(bad).ok());

    bad = ref1();
    bad.B = Mat::Ones(2, 1);
    CHECK(code_of([&] { validate(bad); }) == ErrorCode::DimensionMismatch);

    bad = ref1();
    bad.gamma = 1.0;
    CHECK_FALSE(check_model(bad).ok());
}

TEST_CASE("spectral radius") {
    CHECK(spectral_radius(Mat::Zero(3, 3)) == 0.0);
    CHECK(spectral_radius(m2(0.5, 0, 0, -0.9)) == doctest::Approx(0.9));
    CHECK(spectral_radius(m2(0, 1, 0, 0)) == doctest::Approx(0.0).epsilon(1e-12));
    // rotation-scaled: complex pair of modulus 0.8
    CHECK(spectral_radius(m2(0, -0.8, 0.8, 0)) == doctest::Approx(0.8));
}

TEST_CASE("policy classes") {
    const auto model = ref1();
    CHECK(classify_policy(model, m1(-0.5)) == Feasibility::Stable);
    // 1.05 sits between 1 and 0.9^{-1/2} = 1.0541
    CHECK(1.05 < 1.0 / std::sqrt(0.9));
    CHECK(classify_policy(model, m1(0.55)) == Feasibility::FiniteCost);
    CHECK(classify_policy(model, m1(1.0)) == Feasibility::Infeasible);
    CHECK(classify_policy(model, m1(-1.4)) == Feasibility::Stable);   // rho 0.9
    CHECK(classify_policy(model, m1(-1.55)) == Feasibility::FiniteCost);  // rho 1.05

    Policy p(model, m1(-0.5));
    CHECK(p.stable());
    CHECK(p.finite_cost());
    CHECK(code_of([&] { check_gain_shape(model, Mat::Zero(2, 1)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("stability certificate examples") {
    const auto model = ref1();
    auto c = stability_certificate(model, m1(-0.5), 0.5);
    CHECK(c.Gamma == doctest::Approx(1.0));

    LqrModel two;
    two.A = 0.5 * Mat::Identity(2, 2);
    two.B = Mat::Zero(2, 1);
    two.S = Mat::Identity(2, 2);
    two.R = Mat::Identity(1, 1);
    two.D_omega = Mat::Identity(2, 2);
    c = stability_certificate(two, Mat::Zero(1, 2), 0.75);
    CHECK(c.Gamma == doctest::Approx(1.0));

    // Jordan block: Gamma is the max of ||M^k|| / rho_bar^k, computed here by direct powers.
    two.A = m2(0.5, 1, 0, 0.5);
    c = stability_certificate(two, Mat::Zero(1, 2), 0.8);
    double gmax = 1.0;
    Mat P = Mat::Identity(2, 2);
    for (int k = 1; k <= 200; ++k) {
        P = P * two.A;
        gmax = std::max(gmax, P.jacobiSvd().singularValues()(0) / std::pow(0.8, k));
    }
    CHECK(c.Gamma >= 1.0);
    CHECK(c.Gamma == doctest::Approx(gmax).epsilon(1e-9));
    Mat Mk = Mat::Identity(2, 2);
    for (int k = 0; k <= 60; ++k, Mk = Mk * two.A)
        CHECK(Mk.jacobiSvd().singularValues()(0) <= c.Gamma * std::pow(0.8, k) * (1 + 1e-12));

    CHECK(code_of([&] { stability_certificate(two, Mat::Zero(1, 2), 0.4); }) == ErrorCode::RhoBarTooSmall);
}

TEST_CASE("model and gain JSON round trip") {
    const auto model = ref1();
    const auto back = model_from_json(model_to_json(model));
    CHECK(back.A == model.A);
    CHECK(back.D_omega == model.D_omega);
    CHECK(back.gamma == model.gamma);
    CHECK(back.sigma == model.sigma);

    const auto dir = std::filesystem::temp_directory_path() / "lqrl_test_model";
    std::filesystem::create_directories(dir);
    save_model(model, (dir / "m.json").string());
    CHECK(load_model((dir / "m.json").string()).S == model.S);
    save_gain(m1(-0.25), (dir / "k.json").string());
    CHECK(load_gain((dir / "k.json").string())(0, 0) == -0.25);
    CHECK(code_of([&] { load_model((dir / "nope.json").string()); }) == ErrorCode::ModelFileMissing);
    std::filesystem::remove_all(dir);
}
