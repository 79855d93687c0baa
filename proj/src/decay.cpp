#include "qwave/decay.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace qw::decay {

FitWindow default_window(const std::vector<double>& taus) {
    if (taus.empty()) throw InsufficientPointsError("empty series");
    const double first = taus.front(), last = taus.back();
    return FitWindow{std::max(5.0, first), last - 0.1 * (last - first)};
}

DecayFit fit_exponent(const std::vector<double>& taus, const std::vector<double>& ys, const FitWindow& window,
                      const std::string& name) {
    if (taus.size() != ys.size()) throw std::invalid_argument("fit: tau and value series differ in length");
    if (!(window.tau_max >= window.tau_min)) throw std::invalid_argument("fit: empty window");
    DecayFit fit;
    fit.name = name;
    fit.window = window;
    std::vector<double> X, Y;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (taus[i] < window.tau_min - 1e-12 || taus[i] > window.tau_max + 1e-12) continue;
        if (ys[i] < 0.0 || !std::isfinite(ys[i]))
            throw NonPositiveValuesError("fit: negative or non-finite value at tau = " + std::to_string(taus[i]));
        if (ys[i] == 0.0) {
            fit.excluded_zero_taus.push_back(taus[i]);
            continue;
        }
        X.push_back(std::log1p(taus[i]));
        Y.push_back(std::log(ys[i]));
    }
    const std::size_t n = X.size();
    if (n < 5) throw InsufficientPointsError("fit: fewer than 5 positive points in the window");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += X[i];
        my += Y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (X[i] - mx) * (X[i] - mx);
        sxy += (X[i] - mx) * (Y[i] - my);
        syy += (Y[i] - my) * (Y[i] - my);
    }
    if (!(sxx > 0.0)) throw InsufficientPointsError("fit: all points share one tau");
    fit.exponent = sxy / sxx;
    fit.intercept = my - fit.exponent * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = Y[i] - fit.intercept - fit.exponent * X[i];
        sse += e * e;
    }
    fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    fit.std_error = std::sqrt(sse / (n - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(n - 2));
    const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    fit.ci_low = fit.exponent - q * fit.std_error;
    fit.ci_high = fit.exponent + q * fit.std_error;
    fit.points = static_cast<int>(n);
    return fit;
}

std::vector<DecayFit> fit_windows(const std::vector<double>& taus, const std::vector<double>& ys,
                                  const std::vector<FitWindow>& windows, const std::string& name) {
    std::vector<DecayFit> out;
    for (const auto& w : windows) out.push_back(fit_exponent(taus, ys, w, name));
    return out;
}

std::string DecayFit::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["window"] = {window.tau_min, window.tau_max};
    j["exponent"] = exponent;
    j["intercept"] = intercept;
    j["std_error"] = std_error;
    j["ci95"] = {ci_low, ci_high};
    j["r2"] = r2;
    j["points"] = points;
    j["excluded_zero_taus"] = excluded_zero_taus;
    return j.dump(2);
}

void write_loglog_csv(std::ostream& os, const std::vector<double>& taus, const std::vector<double>& ys) {
    os << "log1p_tau,log_y\n";
    char buf[96];
    for (std::size_t i = 0; i < taus.size() && i < ys.size(); ++i) {
        if (!(ys[i] > 0.0)) continue;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", std::log1p(taus[i]), std::log(ys[i]));
        os << buf;
    }
}

// ---------------------------------------------------------------- pigeonhole set

double PigeonholeReport::min_complete_density() const {
    double m = 1.0;
    for (const auto& b : blocks)
        if (b.complete && b.leaves > 0) m = std::min(m, b.density());
    return m;
}

double pigeonhole_constant(const std::vector<double>& taus, const std::vector<double>& series, double beta) {
    if (taus.size() != series.size()) throw std::invalid_argument("pigeonhole: series length mismatch");
    double integral = 0.0;
    for (std::size_t i = 1; i < taus.size(); ++i)
        integral += 0.5 * (taus[i] - taus[i - 1]) *
                    (std::pow(1.0 + taus[i - 1], beta) * series[i - 1] + std::pow(1.0 + taus[i], beta) * series[i]);
    return 10.0 * integral;
}

PigeonholeReport pigeonhole_report(const std::vector<double>& taus, const std::vector<double>& series, double beta,
                                   double constant) {
    if (taus.size() != series.size()) throw std::invalid_argument("pigeonhole: series length mismatch");
    PigeonholeReport rep;
    rep.beta = beta;
    rep.constant = constant;
    rep.taus = taus;
    for (std::size_t i = 0; i < taus.size(); ++i)
        rep.in_set.push_back(series[i] <= constant * std::pow(1.0 + taus[i], -1.0 - beta));
    if (taus.empty()) return rep;
    const double first = taus.front(), last = taus.back();
    for (double lo = 1.0; lo <= last; lo *= 2.0) {
        DyadicBlock b;
        b.lo = lo;
        b.hi = 2.0 * lo;
        b.complete = lo >= first && b.hi <= last;
        for (std::size_t i = 0; i < taus.size(); ++i)
            if (taus[i] >= b.lo && taus[i] < b.hi) {
                ++b.leaves;
                if (rep.in_set[i]) ++b.in_set;
            }
        rep.blocks.push_back(b);
    }
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (!rep.in_set[i] || !(taus[i] > 0.0) || 4.0 * taus[i] > last) continue;
        bool found = false;
        for (std::size_t j = 0; j < taus.size() && !found; ++j)
            found = rep.in_set[j] && taus[j] >= 2.0 * taus[i] && taus[j] <= 4.0 * taus[i];
        if (!found) {
            rep.companion_ok = false;
            rep.companion_failures.push_back(taus[i]);
        }
    }
    return rep;
}

std::string PigeonholeReport::to_json() const {
    nlohmann::json j;
    j["beta"] = beta;
    j["constant"] = constant;
    j["taus"] = taus;
    std::vector<int> flags(in_set.begin(), in_set.end());
    j["in_set"] = flags;
    nlohmann::json bl = nlohmann::json::array();
    for (const auto& b : blocks)
        bl.push_back({{"lo", b.lo}, {"hi", b.hi}, {"leaves", b.leaves}, {"in_set", b.in_set},
                      {"complete", b.complete}, {"density", b.density()}});
    j["blocks"] = bl;
    j["companion_ok"] = companion_ok;
    j["companion_failures"] = companion_failures;
    j["min_complete_density"] = min_complete_density();
    return j.dump(2);
}

// ---------------------------------------------------------------- weight identity

namespace {

double integrate(const std::function<double(double)>& f, double a, double b) {
    if (a == b) return 0.0;
    double err = 0.0, l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-14, &err, &l1);
    if (!std::isfinite(v) || err > 1e-10 * std::max(1.0, l1))
        throw QuadratureError("adaptive quadrature did not converge on [" + std::to_string(a) + ", " +
                              std::to_string(b) + "]");
    return v;
}

}  // namespace

LweightResult check_lweight_identity(const std::function<double(double)>& f, double beta, double tau1,
                                     double tau2) {
    if (!(tau2 >= tau1) || tau1 <= -1.0) throw std::invalid_argument("lweight identity needs -1 < tau1 <= tau2");
    LweightResult r;
    r.lhs = integrate([&](double s) { return std::pow(1.0 + s, beta) * f(s); }, tau1, tau2);
    const double tail1 = integrate(f, tau1, tau2);
    const double inner = integrate(
        [&](double t) { return std::pow(1.0 + t, beta - 1.0) * integrate(f, t, tau2); }, tau1, tau2);
    r.rhs = beta * inner + std::pow(1.0 + tau1, beta) * tail1;
    r.residual = std::abs(r.lhs - r.rhs) / (std::abs(r.lhs) + 1e-30);
    return r;
}

}  // namespace qw::decay
