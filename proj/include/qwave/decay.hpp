#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace qw::decay {

class InsufficientPointsError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class NonPositiveValuesError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitWindow {
    double tau_min = 0.0, tau_max = 0.0;
};

// Drops tau < 5 and the last 10% of the series' time range.
FitWindow default_window(const std::vector<double>& taus);

// Power-law fit y ~ C (1+tau)^exponent by least squares in log-log coordinates.
struct DecayFit {
    std::string name;
    FitWindow window;
    double exponent = 0.0;
    double intercept = 0.0;  // log C
    double std_error = 0.0;
    double ci_low = 0.0, ci_high = 0.0;  // 95% interval for the exponent
    double r2 = 0.0;
    int points = 0;
    std::vector<double> excluded_zero_taus;  // y == 0 inside the window, left out of the fit

    std::string to_json() const;
};

// Requires at least 5 positive points in the window; exact zeros are excluded and recorded,
// negative values throw NonPositiveValuesError.
DecayFit fit_exponent(const std::vector<double>& taus, const std::vector<double>& ys, const FitWindow& window,
                      const std::string& name = "");
// Consecutive windows for staged rates; no verdict attached.
std::vector<DecayFit> fit_windows(const std::vector<double>& taus, const std::vector<double>& ys,
                                  const std::vector<FitWindow>& windows, const std::string& name = "");

// Plot-ready rows: log(1+tau), log y (positive values only).
void write_loglog_csv(std::ostream& os, const std::vector<double>& taus, const std::vector<double>& ys);

struct DyadicBlock {
    double lo = 0.0, hi = 0.0;  // [lo, hi)
    int leaves = 0, in_set = 0;
    bool complete = false;      // the block lies inside the series' range
    double density() const { return leaves ? static_cast<double>(in_set) / leaves : 0.0; }
};

struct PigeonholeReport {
    double beta = 0.0;
    double constant = 0.0;           // threshold is constant * (1+tau)^{-1-beta}
    std::vector<double> taus;
    std::vector<bool> in_set;
    std::vector<DyadicBlock> blocks;
    bool companion_ok = true;        // every tau1 in T with 4 tau1 <= last tau has tau2 in T, 2 tau1 <= tau2 <= 4 tau1
    std::vector<double> companion_failures;
    double min_complete_density() const;

    std::string to_json() const;
};

PigeonholeReport pigeonhole_report(const std::vector<double>& taus, const std::vector<double>& series, double beta,
                                   double constant);
// Constant of the pigeonhole argument: 10 times the trapezoid value of the integral of (1+tau)^beta series.
double pigeonhole_constant(const std::vector<double>& taus, const std::vector<double>& series, double beta);

// Both sides of
//   int_{t1}^{t2} (1+s)^beta f(s) ds = beta int_{t1}^{t2} (1+t)^{beta-1} int_t^{t2} f ds dt + (1+t1)^beta int_{t1}^{t2} f ds
// by adaptive Gauss-Kronrod quadrature.
struct LweightResult {
    double lhs = 0.0, rhs = 0.0, residual = 0.0;
};
LweightResult check_lweight_identity(const std::function<double(double)>& f, double beta, double tau1, double tau2);

}  // namespace qw::decay
