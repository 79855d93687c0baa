#include "qwave/diagnostics.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

using namespace qw;
using namespace qw::diagnostics;

namespace {

constexpr double kPi = std::numbers::pi;

evolve::InitialData shell(double amplitude) {
    evolve::InitialData d;
    d.family = evolve::DataFamily::Shell;
    d.amplitude = amplitude;
    d.width = 3.0;
    d.profile_center = 1.5;
    d.power = 8;
    return d;
}

// Flat linear run on a small causal-domain grid with R = 5.
EnergyLedger small_ledger(const evolve::InitialData& data, std::vector<double> leaf_times, int k_max = 0,
                          bool envelopes = false, double dv = 0.0, int n = 72) {
    LedgerOptions opt;
    opt.dv = dv;
    opt.params.R = 5.0;
    opt.grid = GridSpec{13.5, n};
    opt.leaf_times = leaf_times;
    opt.k_max = k_max;
    opt.envelopes = envelopes;
    opt.sphere_degree = 11;
    evolve::EquationSpec eq;
    LedgerObserver obs(opt, eq);
    evolve::RunSetup setup;
    setup.grid = opt.grid;
    setup.eq = eq;
    setup.data = data;
    setup.leaf_times = leaf_times;
    evolve::run(setup, {&obs});
    return obs.ledger();
}

// Radial integral of f on [a, b] by composite Simpson.
template <class F>
double simpson(F f, double a, double b, int n = 4000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("Z words") {
    CHECK(z_words(0).size() == 1);
    CHECK(z_words(1).size() == 5);
    CHECK(z_words(2).size() == 21);
    CHECK(z_words(2).front().empty());
}

TEST_CASE("frame derivatives of coordinate functions") {
    foliation::Jet j;
    j.order = 1;
    j.x = Vec3(2.0, 0.0, 0.0);
    j.d[0] = 2.0;
    j.at(0, 1, 0, 0) = 1.0;  // f = x
    auto f = frame_derivs(j);
    CHECK(f.L == doctest::Approx(1.0));
    CHECK(f.Lbar == doctest::Approx(-1.0));
    CHECK(std::abs(f.angular2) < 1e-15);
    j.x = Vec3(0.0, 2.0, 0.0);
    f = frame_derivs(j);
    CHECK(std::abs(f.L) < 1e-15);
    CHECK(f.angular2 == doctest::Approx(1.0));
}

TEST_CASE("rotations annihilate radial functions") {
    foliation::Jet j;
    j.order = 2;
    j.x = Vec3(0.8, -1.1, 0.6);
    const double r2 = j.x.squaredNorm(), g = std::exp(-r2 / 4.0);
    j.d[0] = g;
    for (int a = 0; a < 3; ++a) {
        int i[4] = {0, 0, 0, 0};
        i[a + 1] = 1;
        j.at(i[0], i[1], i[2], i[3]) = -0.5 * j.x[a] * g;
        for (int b = a; b < 3; ++b) {
            int k[4] = {0, 0, 0, 0};
            k[a + 1] += 1;
            k[b + 1] += 1;
            j.at(k[0], k[1], k[2], k[3]) = (0.25 * j.x[a] * j.x[b] - (a == b ? 0.5 : 0.0)) * g;
        }
    }
    for (int gen = 1; gen < 4; ++gen) CHECK(std::abs(j.apply_generator(gen).value()) <= 1e-10);
    CHECK(std::abs(apply_word(j, {1, 2}).value()) <= 1e-10);
}

TEST_CASE("rotation of a linear grid function") {
    GridSpec g{4.0, 16};
    std::vector<double> phi(g.size()), pi(g.size(), 0.0);
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            for (int k = 0; k < g.n; ++k) phi[g.index(i, j, k)] = g.coord(j);
    foliation::LevelView now{0.0, phi.data(), pi.data(), nullptr};
    const auto out = commuted(g, now, nullptr, {1});
    double worst = 0.0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            for (int k = 0; k < g.n; ++k) worst = std::max(worst, std::abs(out.phi[g.index(i, j, k)] - g.coord(i)));
    CHECK(worst < 1e-12);
    CHECK_THROWS_AS(commuted(g, now, nullptr, {0}), InsufficientLevelsError);
}

TEST_CASE("g^p vanishes for phi = c / r") {
    geometry::DecayParams p;
    GridSpec g{30.0, 60};
    foliation::LeafOptions opt;
    opt.t_available = 20.0;
    const auto leaf = foliation::make_leaf(4.0, p, g, foliation::SphereQuadrature::make(5), opt);
    std::vector<foliation::Jet> jets;
    for (const auto& c : leaf.cone) {
        foliation::Jet j;
        j.order = 1;
        j.t = c.t;
        j.x = c.x;
        j.d[0] = 3.0 / c.r;
        for (int a = 0; a < 3; ++a) {
            int i[4] = {0, 0, 0, 0};
            i[a + 1] = 1;
            j.at(i[0], i[1], i[2], i[3]) = -3.0 * c.x[a] / (c.r * c.r * c.r);
        }
        jets.push_back(j);
    }
    ConeData cd{&leaf, &jets};
    for (double pw : {0.0, 1.0, 1.107}) CHECK(std::abs(weighted_cone_g(cd, pw)) < 1e-12);
    CHECK(weighted_cone_g(cd, 1.0, true) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("weighted energy of a synthetic unit series") {
    EnergyLedger led;
    const double T = 10.0;
    for (int i = 0; i <= 40; ++i) {
        LeafRecord r;
        r.tau = T * i / 40.0;
        r.E = 1.0;
        led.leaves.push_back(r);
    }
    CHECK(led.slab(0.0, T, 2.0).E_beta == doctest::Approx(T / (1.0 + T)).epsilon(1e-12));
    CHECK(led.slab(0.0, T).D_alpha == 0.0);
    CHECK_THROWS(led.slab(0.0, 3.3));
}

TEST_CASE("zero field ledger") {
    const auto led = small_ledger(shell(0.0), {0.0, 1.0, 2.0}, 1, true);
    for (const auto& r : led.leaves) {
        CHECK(r.E == 0.0);
        CHECK(r.S_alpha == 0.0);
        CHECK(r.g_1 == 0.0);
        CHECK(r.lem1 == 0.0);
        CHECK(r.lem2 == 0.0);
        CHECK(r.dalpha_density == 0.0);
    }
    for (const auto& e : led.envelopes) CHECK(e.max_ratio() == 0.0);
}

TEST_CASE("flat pulse ledger against the exact solution") {
    const auto data = shell(1.0);
    const evolve::Profile F = data.profile();
    const double R = 5.0;
    const auto led = small_ledger(data, {0.0, 1.0, 2.0, 3.0, 4.0, 6.0});
    auto density = [&](double t, double r) {
        const double pt = evolve::exact_spherical_dt(F, t, r), pr = evolve::exact_spherical_dr(F, t, r);
        return pt * pt + pr * pr;
    };
    auto energy = [&](const LeafRecord& rec) {
        const double tau = rec.tau, u = 0.5 * (tau - R);
        const double disc = 4 * kPi * simpson([&](double r) { return r * r * density(tau, r); }, 0.0, R);
        const double cone = 4 * kPi * simpson(
                                          [&](double v) {
                                              const double r = v - u, t = v + u;
                                              const double L = evolve::exact_spherical_dt(F, t, r) +
                                                               evolve::exact_spherical_dr(F, t, r);
                                              return r * r * L * L;
                                          },
                                          0.5 * (tau + R), u + rec.r_cut);
        return disc + cone;
    };
    // tau = 0: the pulse lies inside r < R.
    const auto& l0 = led.leaves.front();
    CHECK(l0.E == doctest::Approx(energy(l0)).epsilon(0.01));
    // tau = 3: the pulse straddles the cone.
    for (const auto& rec : led.leaves) {
        if (rec.tau != 3.0) continue;
        CHECK(rec.E == doctest::Approx(energy(rec)).epsilon(0.01));
    }
    // Ledger properties.
    for (std::size_t i = 0; i < led.leaves.size(); ++i) {
        const auto& r = led.leaves[i];
        CHECK(r.lem1 <= 1.0);
        CHECK(r.lem2 <= 1.0);
        CHECK(r.lem2_corollary <= 1.0);
        if (i > 0) CHECK(r.E <= led.leaves[i - 1].E * (1.0 + 1e-3));
    }
    // Slab additivity.
    const auto a = led.slab(0.0, 2.0), b = led.slab(2.0, 6.0), c = led.slab(0.0, 6.0);
    CHECK(a.I_alpha + b.I_alpha == doctest::Approx(c.I_alpha).epsilon(1e-12));
    CHECK(a.E_beta + b.E_beta == doctest::Approx(c.E_beta).epsilon(1e-12));
    CHECK(led.slab(0.0, 6.0, 1.0, 1.0).G_p_beta ==
          doctest::Approx(led.slab(0.0, 3.0, 1.0, 1.0).G_p_beta + led.slab(3.0, 6.0, 1.0, 1.0).G_p_beta).epsilon(1e-12));
}

TEST_CASE("g^0 integration by parts on leaves crossed by the pulse") {
    const std::vector<double> taus{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    for (int n : {72, 144}) {
        const auto led = small_ledger(shell(1.0), taus, 0, false, 0.0, n);
        int crossed = 0;
        for (const auto& r : led.leaves) {
            if (r.g0_ibp_scale < 1e-3 * r.E) continue;
            ++crossed;
            MESSAGE("n " << n << " tau " << r.tau << ": " << r.g0_ibp_mismatch);
            CHECK(r.g0_ibp_mismatch <= 1e-2);
        }
        CHECK(crossed >= 2);
    }
}

TEST_CASE("monitor ratios are quadratic in the amplitude") {
    const auto a = small_ledger(shell(1e-3), {0.0, 2.0, 4.0}, 1, true);
    const auto b = small_ledger(shell(5e-4), {0.0, 2.0, 4.0}, 1, true);
    REQUIRE(a.envelopes.size() == b.envelopes.size());
    for (std::size_t i = 0; i < a.envelopes.size(); ++i) {
        const double ra = a.envelopes[i].max_ratio(), rb = b.envelopes[i].max_ratio();
        if (ra > 0.0) CHECK(rb / ra == doctest::Approx(0.25).epsilon(0.01));
    }
    for (std::size_t i = 0; i < a.leaves.size(); ++i)
        if (a.leaves[i].E > 0.0) CHECK(b.leaves[i].E / a.leaves[i].E == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("ledger serialisation") {
    const auto led = small_ledger(shell(1.0), {0.0, 1.0, 2.0});
    std::ostringstream os;
    led.write_csv(os);
    CHECK(os.str().rfind("tau,quantity,value\n", 0) == 0);
    CHECK(led.series("E").size() == 3);
    CHECK(led.taus() == std::vector<double>{0.0, 1.0, 2.0});
    CHECK_THROWS(led.series("no_such_series"));
    CHECK(led.to_json().find("\"tau\"") != std::string::npos);
}

}  // TEST_SUITE
