#pragma once

#include "qwave/config.hpp"
#include "qwave/experiment.hpp"

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace qw::suites {

class UnknownSuiteError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SuiteResult {
    int criterion = 0;
    std::string suite;
    std::vector<experiment::Check> checks;
    double seconds = 0.0;

    bool pass() const;
    // One line: PASS/FAIL, criterion number, suite name and the checks with their values.
    std::string summary() const;
    std::string to_json() const;
};

// Shared state across suites of one process: artifact root and cached runs reused by several criteria.
class SuiteContext {
public:
    explicit SuiteContext(std::string work_dir, int threads = 1);
    const std::string& work_dir() const { return work_dir_; }
    int threads() const { return threads_; }

    // The three decay runs on the preset grid: "flat", "oscillator", "quasilinear".
    const experiment::RunOutcome& decay_run(const std::string& which);
    const std::vector<multipliers::AuditReport>& audit();

private:
    std::string work_dir_;
    int threads_ = 1;
    std::map<std::string, experiment::RunOutcome> decay_runs_;
    std::unique_ptr<std::vector<multipliers::AuditReport>> audit_;
};

// Registered suites in criterion order.
std::vector<std::string> suite_names();
// Throws UnknownSuiteError listing the registered suites.
SuiteResult run_suite(const std::string& name, SuiteContext& ctx);

// Preset configurations used by the suites; also written next to their artifacts.
config::RunConfig decay_preset(const std::string& which);
config::RunConfig audit_preset();
config::RunConfig convergence_preset(int fd_order);
config::RunConfig refinement_preset(int n);
config::RunConfig determinism_preset(int threads);

// Deterministic integrand for the weight identity battery.
double lweight_test_function(double s);
inline const std::vector<double> kLweightBetas{-2.0, -1.1, 0.0, 1.0, 2.5};

}  // namespace qw::suites
