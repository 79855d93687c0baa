#include "qwave/multipliers.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace qw;
using namespace qw::multipliers;
using geometry::FrameSlot;

TEST_SUITE("multipliers") {

TEST_CASE("stress-energy tensor") {
    const Mat4 m0 = geometry::minkowski();
    const Mat4 T = stress_energy(Vec4(1, 0, 0, 0), m0);
    CHECK(T(0, 0) == doctest::Approx(0.5));
    for (int i = 1; i < 4; ++i) CHECK(T(i, i) == doctest::Approx(0.5));
    CHECK(std::abs(T(0, 1)) + std::abs(T(1, 2)) == 0.0);

    const Vec4 null(1, 1, 0, 0);
    CHECK((stress_energy(null, m0) - null * null.transpose()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(stress_energy(Vec4::Zero(), m0).isZero());

    // Trace g^{mu nu} T_{mu nu} = -(d phi)^2 in four dimensions; T_00 = energy density.
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const Vec4 d(n(rng), n(rng), n(rng), n(rng));
        const Mat4 t = stress_energy(d, m0);
        CHECK(m0.cwiseProduct(t).sum() == doctest::Approx(-d.dot(m0 * d)));
        CHECK(t(0, 0) == doctest::Approx(0.5 * d.squaredNorm()));
        CHECK((t - t.transpose()).isZero());
    }
}

TEST_CASE("morawetz multiplier") {
    const double alpha = 0.1;
    CHECK(morawetz_multiplier(alpha, 0.0).f == 0.0);
    // 20 (1 - 2^{-0.1}) evaluated independently.
    CHECK(morawetz_multiplier(alpha, 1.0).f == doctest::Approx(1.3393402).epsilon(1e-7));
    const double h = 1e-5;
    for (double r : {0.0, 1e-9, 0.3, 1.0, 7.5, 40.0, 500.0}) {
        const auto m = morawetz_multiplier(alpha, r);
        const double w = std::pow(1.0 + r, -1.0 - alpha);
        CHECK(std::abs(m.identity - w) <= 1e-14);
        CHECK(std::abs(0.5 * m.fp - w) <= 1e-14);
        CHECK(std::isfinite(m.chi));
        if (r > 1e-3) {
            const auto p = morawetz_multiplier(alpha, r + h), q = morawetz_multiplier(alpha, r - h);
            CHECK(m.fp == doctest::Approx((p.f - q.f) / (2 * h)).epsilon(1e-8));
            CHECK(m.fpp == doctest::Approx((p.fp - q.fp) / (2 * h)).epsilon(1e-6));
            CHECK(m.chip == doctest::Approx((p.chi - q.chi) / (2 * h)).epsilon(1e-6));
            CHECK(m.chi == doctest::Approx(m.f / r));
        }
    }
    CHECK(morawetz_multiplier(alpha, 0.0).chi == doctest::Approx(2.0));
    // chi - f'/2 >= 1/r beyond R for the flat-case angular bulk.
    for (double r = 10.0; r < 200.0; r += 3.7) {
        const auto m = morawetz_multiplier(alpha, r);
        CHECK(m.chi - 0.5 * m.fp >= 1.0 / r);
    }
}

TEST_CASE("p-weighted multiplier in the flat metric") {
    const Mat4 m0 = geometry::minkowski();
    for (double p : {0.0, 1.0, 1.107}) {
        const Vec3 x(3.0, -4.0, 12.0);
        const double r = 13.0;
        const Vec4 L(1.0, x[0] / r, x[1] / r, x[2] / r);
        CHECK((pweight_vector(p, x, m0) - std::pow(r, p) * L).cwiseAbs().maxCoeff() < 1e-12 * std::pow(r, p));
    }
    geometry::SpacetimePoint inside{0.0, Vec3(3, 0, 0)};
    CHECK_THROWS_AS(pweight_vector(1.0, inside, geometry::MetricSpec::flat(), 10.0), RadiusError);
}

TEST_CASE("p-weighted multiplier against a frame contraction") {
    Mat4 g = geometry::minkowski();
    g(0, 0) += 0.03;
    g(0, 1) = g(1, 0) = 0.02;
    g(2, 3) = g(3, 2) = 0.01;
    g(1, 1) -= 0.015;
    const Vec3 x(7.0, 5.0, -3.0);
    const double p = 1.107;
    const auto fr = geometry::null_frame_at({2.0, x});
    const FrameSlot slots[] = {FrameSlot::Lbar, FrameSlot::L, FrameSlot::S1, FrameSlot::S2};
    const Vec4 vecs[] = {fr.Lbar, fr.L, fr.S1, fr.S2};
    Vec4 d_lbar = Vec4::Zero();
    for (int a = 0; a < 4; ++a) d_lbar += geometry::frame_component(g, fr, FrameSlot::Lbar, slots[a]) * vecs[a];
    const double gll = geometry::frame_component(g, fr, FrameSlot::Lbar, FrameSlot::Lbar);
    const Vec4 expect = std::pow(x.norm(), p) * (-2.0 * d_lbar + gll * fr.Lbar);
    CHECK((pweight_vector(p, x, g) - expect).cwiseAbs().maxCoeff() < 1e-12 * expect.norm());
}

TEST_CASE("deformation tensors") {
    const auto flat = geometry::MetricSpec::flat();
    const Vec3 x(1.3, -0.4, 2.2);
    CHECK(deformation(MultiplierSpec::dt(), flat, 0.7, x).isZero());
    CHECK(deformation(MultiplierSpec::rotation(1, 2), flat, 0.7, x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(deformation(MultiplierSpec::dt(), geometry::MetricSpec::static_bump(0.01, 0.1, 9.0), 0.7, x).isZero());
    CHECK(deformation(MultiplierSpec::dt(), geometry::MetricSpec::interior_oscillator(0.01, 0.1, 9.0), 0.7, x)
              .cwiseAbs()
              .maxCoeff() > 1e-6);
    CHECK_THROWS_AS(MultiplierSpec::rotation(1, 1), std::invalid_argument);

    // X = r d_r = x^i d_i: half the Lie derivative of the flat metric is diag(0, 1, 1, 1).
    const auto radial = MultiplierSpec::custom([](double, const Vec3& y) { return Vec4(0.0, y[0], y[1], y[2]); });
    Mat4 expect = Mat4::Identity();
    expect(0, 0) = 0.0;
    CHECK((deformation(radial, flat, 0.7, x) - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("currents") {
    const auto flat = geometry::MetricSpec::flat();
    const Vec4 d(0.3, -1.1, 0.4, 0.9);
    const auto b = currents(MultiplierSpec::dt(), flat, 0.5, Vec3(2, 1, 0), 0.7, d, 0.0);
    CHECK((b.J_lower - b.T.col(0)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(b.K == 0.0);
    CHECK(b.density == doctest::Approx(0.0));
    const auto z = currents(MultiplierSpec::morawetz(0.1), flat, 0.5, Vec3(2, 1, 0), 0.0, Vec4::Zero(), 0.0);
    CHECK(z.J.isZero());
    CHECK(z.density == 0.0);
}

TEST_CASE("divergence of the current matches the density") {
    // phi = t x y + x^2 - y^2 + 0.3 z: flat wave solution, quadratic so the local model is exact.
    foliation::Jet j;
    j.order = 2;
    j.t = 0.8;
    j.x = Vec3(1.7, -0.6, 2.4);
    const double t = j.t, x = j.x[0], y = j.x[1], z = j.x[2];
    j.d[0] = t * x * y + x * x - y * y + 0.3 * z;
    j.at(1, 0, 0, 0) = x * y;
    j.at(0, 1, 0, 0) = t * y + 2 * x;
    j.at(0, 0, 1, 0) = t * x - 2 * y;
    j.at(0, 0, 0, 1) = 0.3;
    j.at(1, 1, 0, 0) = y;
    j.at(1, 0, 1, 0) = x;
    j.at(0, 1, 1, 0) = t;
    j.at(0, 2, 0, 0) = 2;
    j.at(0, 0, 2, 0) = -2;
    for (const auto& X : {MultiplierSpec::dt(), MultiplierSpec::morawetz(0.1), MultiplierSpec::rotation(1, 3)}) {
        const auto b = currents(X, geometry::MetricSpec::flat(), j);
        CHECK(std::abs(b.divergence_residual) < 1e-6);
    }
    CHECK(std::abs(box_from_jet(geometry::MetricSpec::flat(), j)) < 1e-14);
    const auto osc = geometry::MetricSpec::interior_oscillator(0.05, 0.1, 9.0);
    CHECK(std::abs(currents(MultiplierSpec::morawetz(0.1), osc, j).divergence_residual) < 1e-5);
}

TEST_CASE("audit report order") {
    AuditReport rep;
    for (double dx : {0.5, 0.25, 0.125}) {
        AuditTerms t;
        t.residual = 3.0 * dx * dx;
        rep.add(dx, t);
    }
    CHECK(rep.order == doctest::Approx(2.0));
    CHECK(rep.terms.size() == 3);
}

}  // TEST_SUITE
