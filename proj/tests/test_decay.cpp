#include "qwave/decay.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

using namespace qw::decay;

namespace {

std::vector<double> grid_taus(double a, double b, double h) {
    std::vector<double> t;
    for (int i = 0; a + i * h <= b + 1e-12; ++i) t.push_back(a + i * h);
    return t;
}

template <class F>
std::vector<double> sample(const std::vector<double>& taus, F f) {
    std::vector<double> y;
    for (double t : taus) y.push_back(f(t));
    return y;
}

// Least-squares slope in log-log coordinates by a QR solve.
double oracle_slope(const std::vector<double>& taus, const std::vector<double>& ys, double lo, double hi) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < taus.size(); ++i)
        if (taus[i] >= lo && taus[i] <= hi) {
            x.push_back(std::log1p(taus[i]));
            y.push_back(std::log(ys[i]));
        }
    Eigen::MatrixXd A(x.size(), 2);
    Eigen::VectorXd b(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = x[i];
        b(i) = y[i];
    }
    return A.colPivHouseholderQr().solve(b)(1);
}

}  // namespace

TEST_SUITE("decay") {

TEST_CASE("fit of an exact power law") {
    const auto t = grid_taus(0.0, 40.0, 1.0);
    const auto f = fit_exponent(t, sample(t, [](double s) { return std::pow(1.0 + s, -1.1); }), {0.0, 40.0});
    CHECK(std::abs(f.exponent + 1.1) <= 1e-6);
    CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.points == 41);
    CHECK(f.ci_low <= f.exponent);
    CHECK(f.ci_high >= f.exponent);
}

TEST_CASE("fit recovers the prefactor") {
    const auto t = grid_taus(0.0, 40.0, 1.0);
    const auto f = fit_exponent(t, sample(t, [](double s) { return 3.0 * std::pow(1.0 + s, -2.0); }), {0.0, 40.0});
    CHECK(f.exponent == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("fit of a two-term series on a late window") {
    const auto t = grid_taus(0.0, 40.0, 1.0);
    const auto y = sample(t, [](double s) { return 1.0 / (1.0 + s) + 1.0 / ((1.0 + s) * (1.0 + s)); });
    const auto f = fit_exponent(t, y, {10.0, 40.0});
    CHECK(f.exponent > -1.3);
    CHECK(f.exponent < -1.0);
    // Frozen from an independent least-squares solve.
    CHECK(f.exponent == doctest::Approx(-1.04478893).epsilon(1e-8));
    CHECK(f.exponent == doctest::Approx(oracle_slope(t, y, 10.0, 40.0)).epsilon(1e-10));
}

TEST_CASE("fit is equivariant under scaling") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> noise(0.9, 1.1);
    const auto t = grid_taus(0.0, 30.0, 0.5);
    const auto y = sample(t, [&](double s) { return noise(rng) * std::pow(1.0 + s, -1.3); });
    const auto a = fit_exponent(t, y, {5.0, 27.0});
    for (double c : {1e-6, 0.5, 42.0}) {
        std::vector<double> yc = y;
        for (auto& v : yc) v *= c;
        const auto b = fit_exponent(t, yc, {5.0, 27.0});
        CHECK(b.exponent == doctest::Approx(a.exponent).epsilon(1e-10));
        CHECK(b.intercept - a.intercept == doctest::Approx(std::log(c)).epsilon(1e-10));
    }
}

TEST_CASE("fit errors and zero handling") {
    const auto t = grid_taus(0.0, 10.0, 1.0);
    auto y = sample(t, [](double s) { return std::pow(1.0 + s, -1.0); });
    CHECK_THROWS_AS(fit_exponent(t, y, {0.0, 3.0}), InsufficientPointsError);
    auto neg = y;
    neg[4] = -1e-9;
    CHECK_THROWS_AS(fit_exponent(t, neg, {0.0, 10.0}), NonPositiveValuesError);
    y[5] = 0.0;
    const auto f = fit_exponent(t, y, {0.0, 10.0});
    CHECK(f.points == 10);
    CHECK(f.excluded_zero_taus == std::vector<double>{5.0});
    CHECK(f.exponent == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(f.to_json().find("excluded_zero_taus") != std::string::npos);
}

TEST_CASE("default window and staged windows") {
    const auto w = default_window(grid_taus(0.0, 40.0, 0.5));
    CHECK(w.tau_min == 5.0);
    CHECK(w.tau_max == doctest::Approx(36.0));
    CHECK_THROWS_AS(default_window({}), InsufficientPointsError);
    const auto t = grid_taus(0.0, 40.0, 1.0);
    const auto fits = fit_windows(t, sample(t, [](double s) { return std::pow(1.0 + s, -1.5); }),
                                  {{0.0, 10.0}, {10.0, 40.0}});
    REQUIRE(fits.size() == 2);
    for (const auto& f : fits) CHECK(f.exponent == doctest::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("log-log csv") {
    std::ostringstream os;
    write_loglog_csv(os, {0.0, 1.0, 2.0}, {1.0, 0.0, std::exp(-2.0)});
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "log1p_tau,log_y");
    std::getline(is, line);
    CHECK(line == "0,0");
    std::getline(is, line);
    double x = 0.0, y = 0.0;
    char comma = 0;
    std::istringstream(line) >> x >> comma >> y;
    CHECK(x == doctest::Approx(std::log(3.0)));
    CHECK(y == doctest::Approx(-2.0));
    CHECK_FALSE(std::getline(is, line));
}

TEST_CASE("pigeonhole set at half and twice the threshold") {
    const double beta = 1.0, C = 2.0;
    const auto t = grid_taus(0.0, 64.0, 0.5);
    auto threshold = [&](double s) { return C * std::pow(1.0 + s, -1.0 - beta); };
    const auto half = pigeonhole_report(t, sample(t, [&](double s) { return 0.5 * threshold(s); }), beta, C);
    for (bool b : half.in_set) CHECK(b);
    for (const auto& b : half.blocks) CHECK(b.density() == 1.0);
    CHECK(half.companion_ok);
    CHECK(half.min_complete_density() == 1.0);

    const auto twice = pigeonhole_report(t, sample(t, [&](double s) { return 2.0 * threshold(s); }), beta, C);
    for (bool b : twice.in_set) CHECK_FALSE(b);
    CHECK(twice.min_complete_density() == 0.0);
}

TEST_CASE("pigeonhole set of an alternating pattern") {
    const double beta = 0.5, C = 1.0;
    const auto t = grid_taus(0.0, 64.0, 0.25);
    std::vector<double> s;
    for (std::size_t i = 0; i < t.size(); ++i) s.push_back((i % 2 ? 3.0 : 0.25) * C * std::pow(1.0 + t[i], -1.0 - beta));
    const auto rep = pigeonhole_report(t, s, beta, C);
    int complete = 0;
    for (const auto& b : rep.blocks) {
        if (!b.complete) continue;
        ++complete;
        CHECK(b.density() == 0.5);
    }
    CHECK(complete == 6);
    CHECK(rep.companion_ok);
    CHECK(rep.companion_failures.empty());
}

TEST_CASE("companion point missing") {
    // Only tau = 2 lies in T: no companion in [4, 8].
    const auto t = grid_taus(0.0, 16.0, 1.0);
    std::vector<double> s(t.size(), 10.0);
    s[2] = 0.0;
    const auto rep = pigeonhole_report(t, s, 1.0, 1.0);
    CHECK_FALSE(rep.companion_ok);
    CHECK(rep.companion_failures == std::vector<double>{2.0});
}

TEST_CASE("pigeonhole set grows with the constant") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    const auto t = grid_taus(0.0, 40.0, 0.5);
    const auto s = sample(t, [&](double x) { return u(rng) * std::pow(1.0 + x, -2.0); });
    std::vector<bool> prev(t.size(), false);
    for (double C = 0.05; C < 3.0; C *= 1.3) {
        const auto rep = pigeonhole_report(t, s, 1.0, C);
        for (std::size_t i = 0; i < t.size(); ++i)
            if (prev[i]) CHECK(rep.in_set[i]);
        prev = rep.in_set;
    }
}

TEST_CASE("pigeonhole constant") {
    // (1+tau)^beta S = 1 exactly, so the trapezoid value is the interval length.
    const double beta = 1.1;
    const auto t = grid_taus(2.0, 30.0, 0.5);
    const auto s = sample(t, [&](double x) { return std::pow(1.0 + x, -beta); });
    CHECK(pigeonhole_constant(t, s, beta) == doctest::Approx(280.0).epsilon(1e-12));
    // Linear integrand: trapezoid is exact; 10 * int_0^4 (1+tau) dtau = 120.
    const auto t2 = grid_taus(0.0, 4.0, 1.0);
    CHECK(pigeonhole_constant(t2, std::vector<double>(t2.size(), 1.0), 1.0) == doctest::Approx(120.0).epsilon(1e-12));
}

TEST_CASE("weighted integration identity") {
    const auto one = check_lweight_identity([](double) { return 1.0; }, 1.0, 0.0, 1.0);
    CHECK(one.lhs == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(one.rhs == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(one.residual <= 1e-12);

    const auto zero = check_lweight_identity([](double) { return 0.0; }, 1.0, 0.0, 1.0);
    CHECK(zero.lhs == 0.0);
    CHECK(zero.rhs == 0.0);
    CHECK(zero.residual == 0.0);

    CHECK(check_lweight_identity([](double s) { return std::sin(s); }, -1.1, 1.0, 5.0).residual <= 1e-8);

    const std::function<double(double)> battery[] = {
        [](double s) { return std::exp(-s / 3.0); },
        [](double s) { return std::cos(2.0 * s) + 1.5; },
        [](double s) { return std::pow(1.0 + s, -2.2); },
    };
    for (double beta : {-2.0, -1.1, 0.0, 1.0, 2.5})
        for (const auto& f : battery) CHECK(check_lweight_identity(f, beta, 0.5, 12.0).residual <= 1e-8);
}

}  // TEST_SUITE
