#pragma once

#include "qwave/evolve.hpp"
#include "qwave/geometry.hpp"
#include "qwave/multipliers.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace qw::config {

// Raised for unreadable files, unknown keys, malformed values and failed validation.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& reason)
        : std::runtime_error(field + ": " + reason), field_(field), reason_(reason) {}
    const std::string& field() const { return field_; }
    const std::string& reason() const { return reason_; }

private:
    std::string field_, reason_;
};

enum class Mode { LinearFlat, LinearPerturbed, QuasilinearNull, QuasilinearInterior, Stability, Convergence, Audit };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& name);

struct DiagnosticsConfig {
    int k_max = 2;
    bool envelopes = true;
    bool probe = true;
    int sphere_degree = 11;
    int subcells = 8;
    int envelope_radial = 8;
    int ball_radial = 16;
};

struct FitConfig {
    std::vector<std::string> quantities{"E"};
    double tau_min = 8.0, tau_max = 32.0;  // tau_max <= tau_min: default window
};

// Pass thresholds for the run verdict.
struct VerdictConfig {
    double lemma_bound = 1.05;
    double envelope_bound = 1.0;
    double envelope_from = 5.0;
    double max_exponent = 0.0;   // fitted exponent of the first fit quantity must not exceed this; 0 disables
    double monotone_from = -1.0; // E nonincreasing from this tau on; negative disables
    double monotone_rtol = 0.0;  // allowed rise relative to E at monotone_from
    bool require_pigeonhole = false;
};

struct NonlinearConfig {
    std::string nullform = "zero";  // preset name for NullFormTensor::from_preset
    double scale = 1.0;             // multiplies the preset
    double margin_fraction = 0.0;   // > 0: rescale so the peak initial deviation |g d phi| equals this fraction of 1
    bool semilinear = false;
    double interior_coefficient = 0.0;
    double interior_radius = 0.0;
};

struct AuditConfig {
    std::vector<std::string> multipliers{"dt", "morawetz"};
    std::string region = "slab";
    double tau1 = 5.0, tau2 = 15.0;
    std::vector<int> levels{48, 96, 192};
};

struct ConvergenceConfig {
    std::vector<double> dx{0.5, 0.25, 0.125};
    double t_check = 10.0;
};

struct RunConfig {
    Mode mode = Mode::LinearFlat;
    geometry::DecayParams params;
    foliation::GridSpec grid{48.0, 192};
    evolve::InitialData data;
    geometry::MetricSpec metric = geometry::MetricSpec::flat();
    NonlinearConfig nonlinear;
    evolve::InitialData background;  // stability mode
    evolve::BoundaryMode boundary = evolve::BoundaryMode::CausalDomain;
    double tau_final = 36.0;
    double leaf_spacing = 0.5;
    double courant = 0.25;
    int fd_order = 4;
    int checkpoint_every = 0;        // leaves between checkpoints; 0: final only; < 0: none
    std::string output_dir = "qwave-out";
    unsigned long long seed = 0;
    int threads = 1;
    DiagnosticsConfig diagnostics;
    FitConfig fit;
    double pigeonhole_beta = 1.0;
    double pigeonhole_constant = 0.0;  // 0: derived from the series
    VerdictConfig verdict;
    AuditConfig audit;
    ConvergenceConfig convergence;

    std::vector<double> leaf_times() const;
};

// Parses the sectioned key = value format; unknown sections or keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
// Applies QWAVE_OUTPUT_DIR and QWAVE_THREADS when set.
void apply_environment(RunConfig& cfg);
// Throws ConfigError naming the first violated field.
void validate(const RunConfig& cfg);
// Complete config text; parse_config(echo(c)) reproduces c.
std::string echo(const RunConfig& cfg);

}  // namespace qw::config
