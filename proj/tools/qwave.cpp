#include "qwave/config.hpp"
#include "qwave/decay.hpp"
#include "qwave/experiment.hpp"
#include "qwave/geometry.hpp"
#include "qwave/suites.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using namespace qw;

constexpr int kPass = 0, kFail = 1, kConfigError = 2;

config::RunConfig load(const std::string& path) {
    auto cfg = config::load_config(path);
    config::apply_environment(cfg);
    config::validate(cfg);
    return cfg;
}

int report(const experiment::Verdict& v, const std::string& out_dir) {
    std::cout << v.to_json() << "\n";
    std::cerr << "verdict: " << v.status() << " (artifacts in " << out_dir << ")\n";
    return v.pass() ? kPass : kFail;
}

int cmd_run(const std::string& path) {
    const auto cfg = load(path);
    return report(experiment::run_experiment(cfg), cfg.output_dir);
}

int cmd_audit(const std::string& path) {
    auto cfg = config::load_config(path);
    config::apply_environment(cfg);
    if (cfg.mode != config::Mode::Audit)
        throw config::ConfigError("run.mode", "audit verb needs mode = audit, got " + config::to_string(cfg.mode));
    config::validate(cfg);
    return report(experiment::run_experiment(cfg), cfg.output_dir);
}

int cmd_accept(const std::string& suite, const std::string& work_dir, int threads) {
    std::vector<std::string> names;
    if (suite == "all") {
        names = suites::suite_names();
    } else {
        names.push_back(suite);
    }
    suites::SuiteContext ctx(work_dir, threads);
    bool all_pass = true;
    for (const auto& n : names) {
        const auto r = suites::run_suite(n, ctx);
        std::ofstream(fs::path(work_dir) / (n + ".json")) << r.to_json() << "\n";
        std::cout << r.summary() << std::endl;
        all_pass = all_pass && r.pass();
    }
    return all_pass ? kPass : kFail;
}

int cmd_fit(const std::string& path, const std::string& quantity, double tau_min, double tau_max,
            double max_exponent) {
    std::ifstream in(path);
    if (!in) throw config::ConfigError("ledger", "cannot open '" + path + "'");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        std::istringstream ls(line);
        std::string tau, name, value;
        if (!std::getline(ls, tau, ',') || !std::getline(ls, name, ',') || !std::getline(ls, value))
            throw config::ConfigError("ledger line " + std::to_string(lineno), "expected tau,quantity,value");
        if (name.rfind("env_", 0) == 0) continue;
        try {
            series[name].first.push_back(std::stod(tau));
            series[name].second.push_back(std::stod(value));
        } catch (const std::exception&) {
            throw config::ConfigError("ledger line " + std::to_string(lineno), "non-numeric field");
        }
    }
    const auto it = series.find(quantity);
    if (it == series.end()) throw config::ConfigError("quantity", "'" + quantity + "' not present in the ledger");
    const auto& [taus, ys] = it->second;
    decay::FitWindow w = (tau_min < tau_max) ? decay::FitWindow{tau_min, tau_max} : decay::default_window(taus);
    const auto fit = decay::fit_exponent(taus, ys, w, quantity);
    std::cout << fit.to_json() << "\n";
    std::ostringstream csv;
    decay::write_loglog_csv(csv, taus, ys);
    const fs::path csv_path = fs::path(path).parent_path() / ("loglog_" + quantity + ".csv");
    std::ofstream(csv_path) << csv.str();
    if (std::isnan(max_exponent)) return kPass;
    return fit.exponent <= max_exponent ? kPass : kFail;
}

geometry::NullFormTensor tensor_from_json(const nlohmann::json& j) {
    geometry::NullFormTensor nf;
    if (j.contains("preset")) nf = geometry::NullFormTensor::from_preset(j.at("preset").get<std::string>());
    if (j.contains("g")) {
        const auto& g = j.at("g");
        std::vector<double> flat;
        if (g.size() == 64 && g.at(0).is_number()) {
            flat = g.get<std::vector<double>>();
        } else {
            for (const auto& a : g)
                for (const auto& b : a)
                    for (const auto& c : b) flat.push_back(c.get<double>());
        }
        if (flat.size() != 64) throw config::ConfigError("g", "expected 64 entries or a 4x4x4 array");
        for (int i = 0; i < 64; ++i) nf.g[i] = flat[i];
        for (int mu = 0; mu < 4; ++mu)
            for (int nu = 0; nu < 4; ++nu)
                for (int ga = 0; ga < 4; ++ga)
                    if (nf.at(mu, nu, ga) != nf.at(nu, mu, ga))
                        throw config::ConfigError("g", "must be symmetric in its first two indices");
    }
    if (j.contains("A")) {
        const auto a = j.at("A").get<std::vector<std::vector<double>>>();
        if (a.size() != 4) throw config::ConfigError("A", "expected a 4x4 array");
        for (int mu = 0; mu < 4; ++mu) {
            if (a[mu].size() != 4) throw config::ConfigError("A", "expected a 4x4 array");
            for (int nu = 0; nu < 4; ++nu) nf.A(mu, nu) = a[mu][nu];
        }
    }
    return nf;
}

int cmd_check_null(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config::ConfigError("tensor", "cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw config::ConfigError("tensor", e.what());
    }
    geometry::NullFormTensor nf;
    try {
        nf = tensor_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw config::ConfigError("tensor", e.what());
    } catch (const std::invalid_argument& e) {
        throw config::ConfigError("preset", e.what());
    }
    const double tol = j.value("tol", 1e-12);
    const int samples = j.value("samples", 1024);
    const auto seed = j.value("seed", 0ULL);
    const auto r = geometry::check_null_condition(nf, samples, tol, seed);
    nlohmann::json out{{"pass", r.pass},
                       {"worst_residual", r.worst_residual},
                       {"max_coefficient", r.max_coefficient},
                       {"tol", tol},
                       {"n_directions", r.n_directions},
                       {"worst_xi", {r.worst_xi[0], r.worst_xi[1], r.worst_xi[2], r.worst_xi[3]}}};
    std::cout << out.dump(2) << "\n";
    return r.pass ? kPass : kFail;
}

int cmd_validate_metric(const std::string& path) {
    const auto cfg = load(path);
    geometry::EnvelopePlan plan;
    plan.k_max = cfg.diagnostics.k_max;
    plan.sphere_degree = std::min(cfg.diagnostics.sphere_degree, 11);
    const auto r = geometry::validate_envelope(cfg.metric, cfg.params, plan);
    std::cout << r.to_json() << "\n";
    return r.pass() ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quasilinear wave evolution with energy, decay and identity diagnostics"};
    app.require_subcommand(1);

    std::string path, suite, quantity = "E", work_dir = "qwave-accept";
    int threads = 1;
    double tau_min = 0.0, tau_max = 0.0, max_exponent = std::numeric_limits<double>::quiet_NaN();

    auto* run = app.add_subcommand("run", "Run a configured experiment and write its artifact directory");
    run->add_option("config", path, "INI config file")->required();
    auto* accept = app.add_subcommand("accept", "Run an acceptance suite (or 'all')");
    accept->add_option("suite", suite, "Suite name or 'all'")->required();
    accept->add_option("--work-dir", work_dir, "Artifact root for the suite runs");
    accept->add_option("--threads", threads, "Thread count for the evolutions")->check(CLI::PositiveNumber);
    auto* audit = app.add_subcommand("audit", "Run a multiplier identity audit from a config with mode = audit");
    audit->add_option("config", path, "INI config file")->required();
    auto* fit = app.add_subcommand("fit", "Fit a power-law decay exponent to one ledger series");
    fit->add_option("ledger", path, "ledger.csv written by a run")->required();
    fit->add_option("--quantity", quantity, "Series name");
    fit->add_option("--tau-min", tau_min, "Window start (default: automatic)");
    fit->add_option("--tau-max", tau_max, "Window end (default: automatic)");
    fit->add_option("--max-exponent", max_exponent, "Fail when the fitted exponent exceeds this");
    auto* check_null = app.add_subcommand("check-null", "Test a quadratic coefficient tensor for the null condition");
    check_null->add_option("tensor", path, "JSON with 'preset' or explicit 'g' and 'A'")->required();
    auto* validate_metric = app.add_subcommand("validate-metric", "Check the configured metric against its envelopes");
    validate_metric->add_option("config", path, "INI config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kConfigError;
    }

    try {
        if (*run) return cmd_run(path);
        if (*accept) return cmd_accept(suite, work_dir, threads);
        if (*audit) return cmd_audit(path);
        if (*fit) return cmd_fit(path, quantity, tau_min, tau_max, max_exponent);
        if (*check_null) return cmd_check_null(path);
        if (*validate_metric) return cmd_validate_metric(path);
    } catch (const config::ConfigError& e) {
        std::cerr << "config error in " << e.field() << ": " << e.reason() << "\n";
        return kConfigError;
    } catch (const suites::UnknownSuiteError& e) {
        std::cerr << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFail;
    }
    return kConfigError;
}
