#pragma once

#include "qwave/config.hpp"
#include "qwave/decay.hpp"
#include "qwave/diagnostics.hpp"
#include "qwave/evolve.hpp"
#include "qwave/multipliers.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qw::experiment {

struct Check {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct Verdict {
    std::string mode;
    bool trivial = false;  // zero data: every series vanishes and all checks pass trivially
    std::vector<Check> checks;

    bool pass() const;
    // "pass", "fail" or "all-trivial-pass".
    std::string status() const;
    std::string to_json() const;
};

// Peak of the largest |eigenvalue| of g^{mu nu gamma} d_gamma phi for the given tensor, over the flat linear
// evolution of the data on t in [0, 2 width]; data starting at rest has d_t phi = 0 on the initial slice.
double peak_quasilinear_deviation(const geometry::NullFormTensor& nf, const evolve::InitialData& data,
                                  const foliation::GridSpec& grid, int fd_order);
// Equation for the configured mode; applies the margin-fraction rescaling of the null-form tensor.
evolve::EquationSpec equation_for(const config::RunConfig& cfg);

multipliers::MultiplierSpec multiplier_from_name(const std::string& name, const geometry::DecayParams& p,
                                                 const geometry::MetricSpec& metric);

struct ConvergenceRow {
    double dx = 0.0;
    double error = 0.0;  // relative L2 error against the exact spherical solution
    double order = 0.0;  // log ratio against the previous row; 0 on the first
    long steps = 0;
    bool boundary_reached = false;
};
std::vector<ConvergenceRow> convergence_study(const config::RunConfig& cfg);

// One report per configured multiplier; levels from cfg.audit.levels at cfg.grid.half_width.
std::vector<multipliers::AuditReport> audit_study(const config::RunConfig& cfg);

struct RunResult {
    evolve::Trajectory trajectory;
    diagnostics::EnergyLedger ledger;
    std::vector<decay::DecayFit> fits;
    std::vector<std::string> fit_errors;  // quantities whose fit could not be formed
    std::optional<decay::PigeonholeReport> pigeonhole;
    std::optional<geometry::EnvelopeReport> metric_envelope;
    double nullform_scale = 0.0;
};

// Evolution with the ledger attached; checkpoints go to checkpoint_dir when it is nonempty.
RunResult evolve_with_ledger(const config::RunConfig& cfg, const std::string& checkpoint_dir = "");
Verdict judge(const config::RunConfig& cfg, const RunResult& r);

// Per-inequality summaries of the run.
std::string lemma_report_json(const diagnostics::EnergyLedger& ledger);
std::string envelope_report_json(const diagnostics::EnergyLedger& ledger, double from_tau);

struct RunOutcome {
    RunResult result;
    Verdict verdict;
};
// Ledger modes: evolves, judges and writes the run artifacts into cfg.output_dir.
RunOutcome run_and_record(const config::RunConfig& cfg);

// Runs the configured mode and writes the artifact directory; returns the verdict.
Verdict run_experiment(const config::RunConfig& cfg);

}  // namespace qw::experiment
