#include "qwave/foliation.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace qw;
using namespace qw::foliation;

namespace {

constexpr double kPi = std::numbers::pi;

// Two stored levels of a field given analytically by (phi, d_t phi, d_tt phi).
struct Levels {
    GridSpec grid;
    std::vector<double> phi[2], pi[2], acc[2];
    double t[2];

    template <class F>
    Levels(const GridSpec& g, double t0, double t1, F f) : grid(g), t{t0, t1} {
        for (int l = 0; l < 2; ++l) {
            phi[l].resize(g.size());
            pi[l].resize(g.size());
            acc[l].resize(g.size());
            for (int i = 0; i < g.n; ++i)
                for (int j = 0; j < g.n; ++j)
                    for (int k = 0; k < g.n; ++k) {
                        double v[3];
                        f(t[l], g.position(i, j, k), v);
                        const auto id = g.index(i, j, k);
                        phi[l][id] = v[0];
                        pi[l][id] = v[1];
                        acc[l][id] = v[2];
                    }
        }
    }
    LevelPair pair() const {
        return {&grid, {t[0], phi[0].data(), pi[0].data(), acc[0].data()},
                {t[1], phi[1].data(), pi[1].data(), acc[1].data()}};
    }
};

}  // namespace

TEST_SUITE("foliation") {

TEST_CASE("leaf null coordinates") {
    geometry::DecayParams p;
    GridSpec g{24.0, 48};
    const auto quad = SphereQuadrature::make(5);
    LeafOptions opt;
    opt.t_available = 40.0;
    const auto l0 = make_leaf(0.0, p, g, quad, opt);
    CHECK(l0.u_tau == doctest::Approx(-5.0));
    CHECK(l0.v_tau == doctest::Approx(5.0));
    CHECK(l0.cone.front().r == doctest::Approx(10.0));
    CHECK(l0.cone.front().t == doctest::Approx(0.0));

    const auto l20 = make_leaf(20.0, p, g, quad, opt);
    CHECK(l20.u_tau == doctest::Approx(5.0));
    for (const auto& c : l20.cone) {
        CHECK(c.r == doctest::Approx(c.v - l20.u_tau));
        CHECK(c.t == doctest::Approx(c.v + l20.u_tau));
    }
}

TEST_CASE("grid too small for the disc") {
    geometry::DecayParams p;
    CHECK_THROWS_AS(make_leaf(0.0, p, GridSpec{8.0, 32}, SphereQuadrature::make(5), LeafOptions{}), GridTooSmallError);
    CHECK_THROWS(GridSpec{8.0, 8}.validate());
}

TEST_CASE("gauss-legendre integrates polynomials of degree 2n-1 exactly") {
    std::vector<double> x, w;
    gauss_legendre(6, -1.0, 3.0, x, w);
    double s = 0.0, s11 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += w[i];
        s11 += w[i] * std::pow(x[i], 11);
    }
    CHECK(s == doctest::Approx(4.0));
    CHECK(s11 == doctest::Approx((std::pow(3.0, 12) - 1.0) / 12.0).epsilon(1e-12));
}

TEST_CASE("sphere quadrature moments") {
    const auto q = SphereQuadrature::make(11);
    double one = 0, x2 = 0, x4 = 0, x2y2 = 0, odd = 0, x4y2z4 = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const Vec3& n = q.nodes[i];
        const double w = q.weights[i];
        one += w;
        x2 += w * n[0] * n[0];
        x4 += w * std::pow(n[0], 4);
        x2y2 += w * n[0] * n[0] * n[1] * n[1];
        odd += w * n[0] * n[1] * n[1] * n[2];
        x4y2z4 += w * std::pow(n[0], 4) * n[1] * n[1] * std::pow(n[2], 4);
    }
    CHECK(one == doctest::Approx(4 * kPi));
    CHECK(x2 == doctest::Approx(4 * kPi / 3));
    CHECK(x4 == doctest::Approx(4 * kPi / 5));
    CHECK(x2y2 == doctest::Approx(4 * kPi / 15));
    CHECK(std::abs(odd) < 1e-13);
    // 4 pi * 3!! 1!! 3!! / 11!! for the degree-10 monomial.
    CHECK(x4y2z4 == doctest::Approx(4 * kPi * 9.0 / 10395.0).epsilon(1e-12));
}

TEST_CASE("cone integrals against the analytic radial integrals") {
    geometry::DecayParams p;
    GridSpec g{40.0, 80};
    LeafOptions opt;
    opt.t_available = 30.0;
    opt.dv = 0.25;
    const auto leaf = make_leaf(4.0, p, g, SphereQuadrature::make(5), opt);
    const double r0 = leaf.v_tau - leaf.u_tau, r1 = leaf.r_cut();
    CHECK(r0 == doctest::Approx(p.R));
    const double one = cone_integral(leaf, [](const ConeSample&) { return 1.0; });
    CHECK(one == doctest::Approx(4 * kPi * (r1 * r1 * r1 - r0 * r0 * r0) / 3).epsilon(1e-3));
    const double inv = cone_integral(leaf, [](const ConeSample& c) { return 1.0 / (c.r * c.r); });
    CHECK(inv == doctest::Approx(4 * kPi * (r1 - r0)).epsilon(1e-12));
    CHECK(cone_integral(leaf, [](const ConeSample&) { return 0.0; }) == 0.0);
}

TEST_CASE("disc integrals with fractional cell weights") {
    geometry::DecayParams p;
    GridSpec g{12.0, 96};
    LeafOptions opt;
    opt.t_available = 0.0;
    const auto leaf = make_leaf(0.0, p, g, SphereQuadrature::make(5), opt);
    const double vol = disc_integral(leaf, [](const DiscNode&) { return 1.0; });
    const double ball = 4 * kPi * std::pow(p.R, 3) / 3;
    CHECK(std::abs(vol / ball - 1.0) <= 0.01);
    const double half = disc_integral(leaf, [&](const DiscNode& d) { return d.x.norm() <= p.R / 2 ? 1.0 : 0.0; });
    CHECK(std::abs(half / vol - 0.125) <= 0.02 * 0.125);
    CHECK(disc_integral(leaf, [](const DiscNode&) { return 0.0; }) == 0.0);
}

TEST_CASE("interpolation reproduces constants and linears") {
    GridSpec g{4.0, 16};
    Levels c(g, 0.0, 0.1, [](double, const Vec3&, double v[3]) { v[0] = 2.5, v[1] = 0, v[2] = 0; });
    const auto jc = interp_jet(c.pair(), 0.05, Vec3(0.3, -0.2, 0.7), 2);
    CHECK(jc.value() == doctest::Approx(2.5));
    for (int i = 1; i < Jet::kSize; ++i) CHECK(std::abs(jc.d[i]) < 1e-12);

    Levels lin(g, 0.0, 0.1, [](double, const Vec3& x, double v[3]) { v[0] = x[0], v[1] = 0, v[2] = 0; });
    const auto iv = interp(lin.pair(), {0.05, Vec3(0.3, -0.2, 0.7)});
    CHECK(iv.dphi[1] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(iv.phi == doctest::Approx(0.3));
}

TEST_CASE("jets of a cubic polynomial are exact to order three") {
    GridSpec g{4.0, 32};
    // phi = 1 + x - 2 y z + x y z + t x^2 + t^3
    auto f = [](double t, const Vec3& p, double v[3]) {
        const double x = p[0], y = p[1], z = p[2];
        v[0] = 1 + x - 2 * y * z + x * y * z + t * x * x + t * t * t;
        v[1] = x * x + 3 * t * t;
        v[2] = 6 * t;
    };
    Levels lv(g, 1.0, 1.1, f);
    const double t = 1.037;
    const Vec3 x(0.31, -0.47, 0.58);
    const auto j = interp_jet(lv.pair(), t, x, 3);
    double v[3];
    f(t, x, v);
    CHECK(j.value() == doctest::Approx(v[0]).epsilon(1e-12));
    CHECK(j.at(1, 0, 0, 0) == doctest::Approx(v[1]).epsilon(1e-12));
    CHECK(j.at(0, 1, 0, 0) == doctest::Approx(1 + x[1] * x[2] + 2 * t * x[0]).epsilon(1e-11));
    CHECK(j.at(0, 0, 1, 1) == doctest::Approx(-2 + x[0]).epsilon(1e-10));
    CHECK(j.at(1, 1, 0, 0) == doctest::Approx(2 * x[0]).epsilon(1e-10));
    CHECK(j.at(0, 1, 1, 1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(j.at(3, 0, 0, 0) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("interpolated derivative of sin(x1) at dx = 0.25") {
    GridSpec g{6.0, 48};
    Levels lv(g, 0.0, 0.1, [](double, const Vec3& x, double v[3]) { v[0] = std::sin(x[0]), v[1] = 0, v[2] = 0; });
    double worst = 0.0;
    for (double s = -3.0; s <= 3.0; s += 0.173) {
        const auto iv = interp(lv.pair(), {0.05, Vec3(s, 0.11, -0.4)});
        worst = std::max(worst, std::abs(iv.dphi[1] - std::cos(s)));
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("interpolation outside the stencil range throws") {
    GridSpec g{4.0, 16};
    Levels lv(g, 0.0, 0.1, [](double, const Vec3&, double v[3]) { v[0] = v[1] = v[2] = 0; });
    CHECK_THROWS_AS(interp(lv.pair(), {0.05, Vec3(3.95, 0, 0)}), OutOfDomainError);
}

TEST_CASE("jet algebra") {
    Jet j;
    j.order = 2;
    j.x = Vec3(0.7, -1.3, 0.4);
    j.d[0] = j.x[1];
    j.at(0, 0, 1, 0) = 1.0;
    // Omega_12 x_2 = x_1.
    const Jet o = j.apply_generator(1);
    CHECK(o.value() == doctest::Approx(0.7));
    CHECK(o.at(0, 1, 0, 0) == doctest::Approx(1.0));
    CHECK((j * 2.0).value() == doctest::Approx(-2.6));
    CHECK((j + j - j).value() == doctest::Approx(-1.3));
    CHECK(j.derivative(2).value() == doctest::Approx(1.0));
    CHECK(j.gradient().isApprox(Vec4(0, 0, 1, 0)));
}

}  // TEST_SUITE
