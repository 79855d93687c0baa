#include "qwave/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace qw;
using namespace qw::geometry;

namespace {

bool has_violation(const std::vector<ParamViolation>& v, const std::string& name) {
    for (const auto& e : v)
        if (e.name == name) return true;
    return false;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("reference parameter bundle satisfies the ordering chain") {
    DecayParams p;
    CHECK(validate_params(p).empty());
    // Chain evaluated by hand: alpha^2/4 = 0.0025, (2a + a e)/(2 - a) = 0.2002/1.9, (7/3)a - a1 - e = 0.124333...
    CHECK(p.alpha * p.alpha / 4.0 == doctest::Approx(0.0025));
    CHECK((2 * p.alpha + p.alpha * p.epsilon) / (2 - p.alpha) == doctest::Approx(0.10536842105).epsilon(1e-10));
    CHECK(7.0 / 3.0 * p.alpha - p.alpha1 - p.epsilon == doctest::Approx(0.12433333333).epsilon(1e-10));
}

TEST_CASE("ordering violations are reported by name") {
    DecayParams p;
    p.alpha = 0.2;
    CHECK(has_violation(validate_params(p), "alpha < 1/10"));

    DecayParams q;
    q.epsilon = q.alpha * q.alpha / 2.0;
    CHECK(has_violation(validate_params(q), "epsilon < alpha^2/4"));

    DecayParams r;
    r.R = 4.0;
    CHECK(has_violation(validate_params(r), "R > 4"));

    DecayParams s;
    s.R = std::nan("");
    CHECK_FALSE(validate_params(s).empty());
}

TEST_CASE("null coordinates satisfy u + v = t and v - u = r") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-30.0, 30.0);
    for (int i = 0; i < 200; ++i) {
        SpacetimePoint pt{d(rng), Vec3(d(rng), d(rng), d(rng))};
        CHECK(pt.u() + pt.v() == doctest::Approx(pt.t));
        CHECK(pt.v() - pt.u() == doctest::Approx(pt.r()));
        CHECK(pt.r() >= 0.0);
    }
}

TEST_CASE("null frame on the axes") {
    const auto fr = null_frame_at({0.0, Vec3(1, 0, 0)});
    CHECK(fr.L.isApprox(Vec4(1, 1, 0, 0)));
    CHECK(fr.Lbar.isApprox(Vec4(1, -1, 0, 0)));

    const auto fz = null_frame_at({0.0, Vec3(0, 0, 2)});
    CHECK(fz.Lbar.tail<3>().isApprox(Vec3(0, 0, -1)));

    CHECK_THROWS_AS(null_frame_at({0.0, Vec3::Zero()}), DegeneratePointError);
}

TEST_CASE("null frame is null and orthonormal in the flat metric") {
    const Mat4 m = lower(minkowski());
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    for (int i = 0; i < 100; ++i) {
        const auto fr = rotate_tangent(null_frame_at({d(rng), Vec3(d(rng), d(rng), d(rng))}), d(rng));
        CHECK(std::abs(fr.L.dot(m * fr.L)) < 1e-13);
        CHECK(std::abs(fr.Lbar.dot(m * fr.Lbar)) < 1e-13);
        CHECK(fr.L.dot(m * fr.Lbar) == doctest::Approx(-2.0));
        CHECK(fr.S1.dot(m * fr.S1) == doctest::Approx(1.0));
        CHECK(fr.S2.dot(m * fr.S2) == doctest::Approx(1.0));
        CHECK(std::abs(fr.S1.dot(m * fr.S2)) < 1e-13);
        CHECK(std::abs(fr.S1.dot(m * fr.L)) < 1e-13);
        CHECK(std::abs(fr.S2.dot(m * fr.Lbar)) < 1e-13);
    }
}

TEST_CASE("frame components of the flat metric") {
    const Mat4 m0 = minkowski();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    for (int i = 0; i < 50; ++i) {
        const auto fr = null_frame_at({0.0, Vec3(d(rng), d(rng), d(rng))});
        CHECK(std::abs(frame_component(m0, fr, FrameSlot::Lbar, FrameSlot::Lbar)) < 1e-14);
        CHECK(std::abs(frame_component(m0, fr, FrameSlot::L, FrameSlot::L)) < 1e-14);
        // 1/4 (-1 * 1 - omega . omega) by hand.
        CHECK(frame_component(m0, fr, FrameSlot::Lbar, FrameSlot::L) == doctest::Approx(-0.5));
        CHECK(frame_component(m0, fr, FrameSlot::S1, FrameSlot::S1) == doctest::Approx(1.0));
    }
    Mat4 k = Mat4::Zero();
    k(0, 0) = 1.0;
    const auto fr = null_frame_at({0.0, Vec3(1, 0, 0)});
    CHECK(frame_component(k, fr, FrameSlot::Lbar, FrameSlot::Lbar) == doctest::Approx(0.25));
}

TEST_CASE("lowering the inverse metric") {
    Mat4 expect = Mat4::Zero();
    expect.diagonal() << -1, 1, 1, 1;
    CHECK(lower(minkowski()).isApprox(expect));
    CHECK_THROWS(lower(Mat4::Zero()));
}

TEST_CASE("null-condition presets") {
    const auto wave = check_null_condition(NullFormTensor::wave_times_dt());
    CHECK(wave.pass);
    CHECK(wave.worst_residual < 1e-12);

    const auto ttt = check_null_condition(NullFormTensor::ttt_only());
    CHECK_FALSE(ttt.pass);
    // xi_0^3 = 1 on the normalised null covector (1, 1, 0, 0).
    CHECK(ttt.worst_residual == doctest::Approx(1.0));

    NullFormTensor a = NullFormTensor::zero();
    a.A = minkowski();
    CHECK(check_null_condition(a).pass);

    CHECK(check_null_condition(NullFormTensor::from_preset("q0i")).pass);
    CHECK(check_null_condition(NullFormTensor::zero()).pass);
    CHECK_THROWS_AS(NullFormTensor::from_preset("bogus"), std::invalid_argument);

    NullFormTensor bad = NullFormTensor::zero();
    bad.A(1, 1) = 1.0;
    CHECK_FALSE(check_null_condition(bad).pass);
}

TEST_CASE("fibonacci directions are unit vectors") {
    for (const auto& w : fibonacci_directions(257, 9)) CHECK(w.norm() == doctest::Approx(1.0));
    CHECK(fibonacci_directions(64).size() == 64);
}

TEST_CASE("compact profile derivatives agree with difference quotients") {
    const double h = 1e-5;
    for (double r : {0.3, 1.0, 2.5, 4.0, 7.9}) {
        const auto p = compact_profile(r, 0.1, 9.0, 0.2);
        const auto pp = compact_profile(r + h, 0.1, 9.0, 0.2), pm = compact_profile(r - h, 0.1, 9.0, 0.2);
        CHECK(p.dw == doctest::Approx((pp.w - pm.w) / (2 * h)).epsilon(1e-6));
        CHECK(p.d2w == doctest::Approx((pp.dw - pm.dw) / (2 * h)).epsilon(1e-5));
    }
    CHECK(compact_profile(9.5, 0.1, 9.0, 0.2).w == 0.0);
}

TEST_CASE("metric families: exact derivatives and support") {
    const MetricSpec fams[] = {MetricSpec::interior_oscillator(0.01, 0.1, 9.0), MetricSpec::static_bump(0.01, 0.1, 9.0),
                               MetricSpec::constant_htt(0.01)};
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> d(-6.0, 6.0);
    const double h = 1e-5;
    for (const auto& m : fams) {
        for (int s = 0; s < 20; ++s) {
            const double t = d(rng) + 6.0;
            const Vec3 x(d(rng), d(rng), d(rng));
            const auto e = m.eval(t, x);
            for (int g = 0; g < 4; ++g) {
                Vec3 xp = x, xm = x;
                double tp = t, tm = t;
                if (g == 0) {
                    tp += h;
                    tm -= h;
                } else {
                    xp[g - 1] += h;
                    xm[g - 1] -= h;
                }
                const Mat4 fd = (m.h(tp, xp) - m.h(tm, xm)) / (2 * h);
                CHECK((e.dh[g] - fd).cwiseAbs().maxCoeff() < 1e-8);
            }
        }
        if (m.family != MetricFamily::ConstantHtt) {
            CHECK(m.h(1.3, Vec3(9.5, 0.0, 0.0)).isZero());
        }
    }
    const auto osc = MetricSpec::interior_oscillator(0.01, 0.1, 9.0);
    CHECK_FALSE(osc.time_independent());
    CHECK(MetricSpec::static_bump(0.01, 0.1, 9.0).time_independent());
    CHECK(osc.support_radius() == doctest::Approx(9.0));
    CHECK(box_first_order(minkowski(), MetricSample{}).isZero());
    CHECK(metric_family_from_string(to_string(MetricFamily::InteriorOscillator)) == MetricFamily::InteriorOscillator);
}

TEST_CASE("bootstrap envelopes") {
    EnvelopeH env{0.01, 0.1};
    for (double tau : {0.0, 3.0, 20.0})
        for (double r = 0.0; r < 100.0; r += 0.7) {
            CHECK(env.Hbar(r) <= env.H(tau, r));
            CHECK(env.H(tau, r + 0.7) <= env.H(tau, r));
        }
}

TEST_CASE("metric envelope validation") {
    DecayParams p;
    const auto flat = validate_envelope(MetricSpec::flat(), p);
    CHECK(flat.pass());
    for (const auto& e : flat.entries) CHECK(e.max_ratio == 0.0);

    const auto osc = validate_envelope(MetricSpec::interior_oscillator(0.01, 0.1, p.R - 1.0), p);
    CHECK(osc.pass());

    const auto htt = validate_envelope(MetricSpec::constant_htt(0.01), p);
    CHECK_FALSE(htt.pass());
    double worst = 0.0;
    for (const auto& e : htt.entries) worst = std::max(worst, e.max_ratio);
    CHECK(worst > 1.0);
}

}  // TEST_SUITE
