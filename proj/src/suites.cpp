#include "qwave/suites.hpp"

#include "qwave/decay.hpp"
#include "qwave/multipliers.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

namespace qw::suites {

namespace fs = std::filesystem;
using config::Mode;
using config::RunConfig;
using experiment::Check;

bool SuiteResult::pass() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string SuiteResult::summary() const {
    std::ostringstream os;
    os << (pass() ? "PASS" : "FAIL") << " criterion " << criterion << " " << suite << ":";
    char buf[64];
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const auto& c = checks[i];
        std::snprintf(buf, sizeof buf, "%.4g", c.value);
        os << (i ? "; " : " ") << c.name << "=" << buf;
        std::snprintf(buf, sizeof buf, "%.4g", c.threshold);
        os << " (limit " << buf << (c.pass ? "" : ", failed") << ")";
    }
    std::snprintf(buf, sizeof buf, "%.1f", seconds);
    os << " [" << buf << " s]";
    return os.str();
}

std::string SuiteResult::to_json() const {
    nlohmann::json j;
    j["criterion"] = criterion;
    j["suite"] = suite;
    j["pass"] = pass();
    j["seconds"] = seconds;
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json e{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}};
        e["value"] = std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json(nullptr);
        e["threshold"] = std::isfinite(c.threshold) ? nlohmann::json(c.threshold) : nlohmann::json(nullptr);
        cs.push_back(e);
    }
    j["checks"] = cs;
    return j.dump(2);
}

// ---------------------------------------------------------------- presets

namespace {

evolve::InitialData offcenter_bump(double amplitude, const Vec3& center, double width) {
    evolve::InitialData d;
    d.family = evolve::DataFamily::OffCenterBump;
    d.amplitude = amplitude;
    d.center = center;
    d.width = width;
    d.power = 8;
    return d;
}

}  // namespace

RunConfig decay_preset(const std::string& which) {
    RunConfig c;
    c.params.R = 10.0;
    c.params.delta0 = 0.01;
    c.params.alpha = 0.1;
    c.grid = {48.0, 192};
    c.tau_final = 36.0;
    c.leaf_spacing = 0.5;
    c.boundary = evolve::BoundaryMode::CausalDomain;
    c.fd_order = 4;
    c.data = offcenter_bump(1e-4, Vec3(2.0, 1.0, 0.0), 4.0);
    c.diagnostics.k_max = 2;
    c.diagnostics.envelopes = true;
    c.diagnostics.probe = true;
    c.fit.quantities = {"E", "ile_eps_density", "E_tilde"};
    c.fit.tau_min = 8.0;
    c.fit.tau_max = 32.0;
    c.pigeonhole_beta = 1.0;
    c.verdict.require_pigeonhole = true;
    if (which == "flat") {
        c.mode = Mode::LinearFlat;
        c.verdict.max_exponent = -1.0;
    } else if (which == "oscillator") {
        c.mode = Mode::LinearPerturbed;
        c.metric = geometry::MetricSpec::interior_oscillator(0.01, 0.1, c.params.R - 1.0);
        c.verdict.max_exponent = -0.8;
    } else if (which == "quasilinear") {
        c.mode = Mode::QuasilinearNull;
        c.nonlinear.nullform = "wave-dt";
        c.nonlinear.margin_fraction = 0.01;
        c.verdict.max_exponent = -0.8;
        c.verdict.monotone_from = 8.0;
        c.verdict.monotone_rtol = 0.0;
    } else {
        throw std::invalid_argument("unknown decay preset '" + which + "'");
    }
    return c;
}

RunConfig audit_preset() {
    RunConfig c;
    c.mode = Mode::Audit;
    c.params.R = 5.0;
    c.grid = {12.0, 192};
    c.boundary = evolve::BoundaryMode::Sommerfeld;
    c.data = offcenter_bump(1.0, Vec3(1.0, 0.5, 0.0), 3.0);
    c.audit.multipliers = {"dt", "morawetz"};
    c.audit.region = "slab";
    c.audit.tau1 = 5.0;
    c.audit.tau2 = 15.0;
    c.audit.levels = {48, 96, 192};
    return c;
}

RunConfig convergence_preset(int fd_order) {
    RunConfig c;
    c.mode = Mode::Convergence;
    c.grid = {18.0, 72};
    c.boundary = evolve::BoundaryMode::CausalDomain;
    c.fd_order = fd_order;
    c.data.family = evolve::DataFamily::Shell;
    c.data.amplitude = 1.0;
    c.data.width = 3.0;
    c.data.profile_center = 1.5;
    c.data.power = 8;
    c.convergence.dx = {0.5, 0.25, 0.125};
    c.convergence.t_check = 10.0;
    return c;
}

RunConfig refinement_preset(int n) {
    RunConfig c;
    c.mode = Mode::LinearFlat;
    c.params.R = 5.0;
    c.grid = {22.0, n};
    c.tau_final = 14.0;
    c.leaf_spacing = 1.0;
    c.boundary = evolve::BoundaryMode::CausalDomain;
    c.data = offcenter_bump(1.0, Vec3(1.0, 0.5, 0.0), 3.0);
    c.diagnostics.k_max = 0;
    c.diagnostics.envelopes = false;
    c.diagnostics.probe = false;
    c.fit.tau_min = c.fit.tau_max = 0.0;
    c.checkpoint_every = -1;
    return c;
}

RunConfig determinism_preset(int threads) {
    RunConfig c;
    c.mode = Mode::LinearPerturbed;
    c.params.R = 5.0;
    c.metric = geometry::MetricSpec::interior_oscillator(0.01, 0.1, c.params.R - 1.0);
    c.grid = {13.0, 52};
    c.tau_final = 6.0;
    c.leaf_spacing = 0.5;
    c.boundary = evolve::BoundaryMode::CausalDomain;
    c.data = offcenter_bump(1e-3, Vec3(1.0, 0.5, 0.0), 3.0);
    c.diagnostics.k_max = 2;
    c.diagnostics.envelopes = true;
    c.diagnostics.probe = true;
    c.fit.tau_min = c.fit.tau_max = 0.0;
    c.checkpoint_every = 4;
    c.threads = threads;
    return c;
}

double lweight_test_function(double s) { return (1.5 + std::sin(s)) / ((1.0 + s) * (1.0 + s)); }

// ---------------------------------------------------------------- context

SuiteContext::SuiteContext(std::string work_dir, int threads) : work_dir_(std::move(work_dir)), threads_(threads) {
    fs::create_directories(work_dir_);
}

const experiment::RunOutcome& SuiteContext::decay_run(const std::string& which) {
    auto it = decay_runs_.find(which);
    if (it != decay_runs_.end()) return it->second;
    RunConfig c = decay_preset(which);
    c.threads = threads_;
    c.output_dir = (fs::path(work_dir_) / ("decay-" + which)).string();
    return decay_runs_.emplace(which, experiment::run_and_record(c)).first->second;
}

const std::vector<multipliers::AuditReport>& SuiteContext::audit() {
    if (!audit_) {
        RunConfig c = audit_preset();
        c.threads = threads_;
        c.output_dir = (fs::path(work_dir_) / "identity-audit").string();
        config::validate(c);
        audit_ = std::make_unique<std::vector<multipliers::AuditReport>>(experiment::audit_study(c));
        fs::create_directories(c.output_dir);
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : *audit_) j.push_back(nlohmann::json::parse(r.to_json()));
        std::ofstream(fs::path(c.output_dir) / "audit_report.json") << j.dump(2);
        std::ofstream(fs::path(c.output_dir) / "config.ini") << config::echo(c);
    }
    return *audit_;
}

// ---------------------------------------------------------------- suites

namespace {

const experiment::Check* find_check(const experiment::Verdict& v, const std::string& name) {
    for (const auto& c : v.checks)
        if (c.name == name) return &c;
    return nullptr;
}

void take(std::vector<Check>& out, const experiment::Verdict& v, const std::string& prefix,
          const std::vector<std::string>& names) {
    for (const auto& n : names) {
        if (const Check* c = find_check(v, n)) {
            Check copy = *c;
            copy.name = prefix + "_" + n;
            out.push_back(copy);
        } else {
            out.push_back({prefix + "_" + n, false, std::numeric_limits<double>::quiet_NaN(), 0.0, "check missing"});
        }
    }
}

const multipliers::AuditReport& report_for(const std::vector<multipliers::AuditReport>& reps, const std::string& m) {
    for (const auto& r : reps)
        if (r.multiplier == m) return r;
    throw std::runtime_error("audit report for '" + m + "' missing");
}

std::vector<Check> oracle_convergence(SuiteContext& ctx) {
    std::vector<Check> out;
    for (int fd : {2, 4}) {
        RunConfig c = convergence_preset(fd);
        c.threads = ctx.threads();
        c.output_dir = (fs::path(ctx.work_dir()) / ("oracle-convergence-fd" + std::to_string(fd))).string();
        const auto v = experiment::run_experiment(c);
        for (const auto& ch : v.checks) {
            Check copy = ch;
            copy.name = "fd" + std::to_string(fd) + "_" + ch.name;
            out.push_back(copy);
        }
    }
    return out;
}

std::vector<Check> identity_audit(SuiteContext& ctx) {
    const auto& r = report_for(ctx.audit(), "dt");
    const double finest = r.terms.back().residual;
    return {{"dt_order", r.order >= 1.9, r.order, 1.9, "least-squares order of the relative residual"},
            {"dt_finest_residual", finest <= 1e-3, finest, 1e-3, "relative residual on the finest grid"}};
}

std::vector<Check> morawetz(SuiteContext& ctx) {
    std::vector<Check> out;
    const double alpha = 0.1;
    double worst_identity = 0.0, worst_half_fp = 0.0;
    std::vector<double> radii{0.0, 1e-12, 1e-6, 1e-3, 0.05, 0.0999999, 0.1, 0.1000001};
    for (int i = 0; i <= 2000; ++i) radii.push_back(0.1 * i);
    for (int i = 0; i <= 200; ++i) radii.push_back(std::pow(10.0, -3.0 + 0.03 * i));
    for (double r : radii) {
        const auto m = multipliers::morawetz_multiplier(alpha, r);
        const double w = std::pow(1.0 + r, -1.0 - alpha);
        worst_identity = std::max(worst_identity, std::abs(m.identity - w));
        worst_half_fp = std::max(worst_half_fp, std::abs(0.5 * m.fp - w));
    }
    out.push_back({"identity_error", worst_identity <= 1e-14, worst_identity, 1e-14,
                   "max |chi - f/r + f'/2 - (1+r)^{-1-alpha}| over sampled radii"});
    out.push_back({"half_fprime_error", worst_half_fp <= 1e-14, worst_half_fp, 1e-14,
                   "max |f'/2 - (1+r)^{-1-alpha}| over sampled radii"});
    const auto& r = report_for(ctx.audit(), "morawetz");
    const auto& t = r.terms.back();
    out.push_back({"ile_bulk_positive", t.ile_bulk > 0.0, t.ile_bulk, 0.0, "weighted local energy bulk, finest grid"});
    out.push_back({"identity_residual", t.residual <= 0.05, t.residual, 0.05, "relative residual, finest grid"});
    const double excess = (t.ile_bulk - t.boundary) / std::abs(t.boundary);
    out.push_back({"ile_bulk_over_boundary", excess <= 0.05, excess, 0.05,
                   "(ILE bulk - boundary terms) / |boundary terms|, finest grid"});
    return out;
}

double max_lemma(const diagnostics::EnergyLedger& led) {
    double m = 0.0;
    for (const auto& l : led.leaves) m = std::max({m, l.lem1, l.lem2, l.lem2_corollary, l.lempphi2});
    return m;
}

std::vector<Check> hardy(SuiteContext& ctx) {
    std::vector<Check> out;
    for (const char* which : {"flat", "oscillator", "quasilinear"}) {
        const double m = max_lemma(ctx.decay_run(which).result.ledger);
        out.push_back({std::string(which) + "_max_ratio", m <= 1.05, m, 1.05, "largest lemma ratio over all leaves"});
    }
    double ratios[2] = {0.0, 0.0};
    for (int i = 0; i < 2; ++i) {
        RunConfig c = refinement_preset(i == 0 ? 88 : 176);
        c.threads = ctx.threads();
        c.output_dir = (fs::path(ctx.work_dir()) / ("hardy-n" + std::to_string(c.grid.n))).string();
        ratios[i] = max_lemma(experiment::run_and_record(c).result.ledger);
    }
    out.push_back({"coarse_max_ratio", ratios[0] <= 1.05, ratios[0], 1.05, "largest lemma ratio, dx = 0.5"});
    out.push_back({"refined_max_ratio", ratios[1] <= 1.025, ratios[1], 1.025,
                   "largest lemma ratio, dx = 0.25: the allowance above 1 halves"});
    return out;
}

std::vector<Check> null_condition(SuiteContext&) {
    std::vector<Check> out;
    const auto wave = geometry::check_null_condition(geometry::NullFormTensor::wave_times_dt(), 1024, 1e-12);
    out.push_back({"wave_dt_residual", wave.pass, wave.worst_residual, 1e-12, "d_t phi times the wave operator"});
    geometry::NullFormTensor a = geometry::NullFormTensor::zero();
    a.A = geometry::minkowski();
    const auto am = geometry::check_null_condition(a, 1024, 1e-12);
    out.push_back({"A_minkowski_residual", am.pass, am.worst_residual, 1e-12, "semilinear term with A = m0"});
    const auto ttt = geometry::check_null_condition(geometry::NullFormTensor::ttt_only(), 1024, 1e-12);
    out.push_back({"ttt_only_residual", !ttt.pass && ttt.worst_residual >= 0.5, ttt.worst_residual, 0.5,
                   "g^{ttt} alone must fail with residual at least 0.5"});
    return out;
}

std::vector<Check> killing(SuiteContext&) {
    std::vector<Check> out;
    struct Family {
        const char* name;
        geometry::MetricSpec metric;
    };
    const Family fams[] = {{"flat", geometry::MetricSpec::flat()},
                           {"static", geometry::MetricSpec::static_bump(0.01, 0.1, 9.0)},
                           {"constant_htt", geometry::MetricSpec::constant_htt(0.01)}};
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> pos(-12.0, 12.0), time(0.0, 40.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto X = multipliers::MultiplierSpec::dt();
    for (const auto& f : fams) {
        double worst_k = 0.0, worst_pi = 0.0;
        for (int s = 0; s < 4000; ++s) {
            const Vec3 x(pos(rng), pos(rng), pos(rng));
            const double t = time(rng);
            const double scale = std::pow(10.0, 4.0 * gauss(rng) / 3.0);
            const Vec4 d(scale * gauss(rng), scale * gauss(rng), scale * gauss(rng), scale * gauss(rng));
            const auto cb = multipliers::currents(X, f.metric, t, x, gauss(rng), d, gauss(rng));
            worst_k = std::max(worst_k, std::abs(cb.K) / d.squaredNorm());
            worst_pi = std::max(worst_pi, multipliers::deformation(X, f.metric, t, x).cwiseAbs().maxCoeff());
        }
        out.push_back({std::string(f.name) + "_K_over_dphi2", worst_k <= 1e-10, worst_k, 1e-10,
                       "max |T^{mu nu} pi_{mu nu}| / |d phi|^2 for X = d_t"});
        out.push_back({std::string(f.name) + "_deformation", worst_pi == 0.0, worst_pi, 0.0,
                       "max |pi^{d_t}| with exact metric derivatives"});
    }
    return out;
}

std::vector<Check> decay_suite(SuiteContext& ctx) {
    std::vector<Check> out;
    take(out, ctx.decay_run("flat").verdict, "flat", {"completed", "causal_domain", "decay_exponent"});
    take(out, ctx.decay_run("oscillator").verdict, "oscillator",
         {"completed", "causal_domain", "decay_exponent", "lemma_ratios", "envelope_ratios", "metric_envelope"});
    take(out, ctx.decay_run("quasilinear").verdict, "quasilinear",
         {"completed", "causal_domain", "hyperbolicity_margin", "energy_nonincreasing", "decay_exponent"});
    return out;
}

std::vector<Check> bootstrap_envelope(SuiteContext& ctx) {
    std::vector<Check> out;
    for (const char* which : {"flat", "oscillator", "quasilinear"})
        take(out, ctx.decay_run(which).verdict, which, {"envelope_ratios"});
    return out;
}

std::vector<Check> lweight_identity(SuiteContext&) {
    std::vector<Check> out;
    for (double beta : kLweightBetas) {
        const auto r = decay::check_lweight_identity(lweight_test_function, beta, 1.0, 30.0);
        char name[48];
        std::snprintf(name, sizeof name, "beta_%g_residual", beta);
        out.push_back({name, r.residual <= 1e-8, r.residual, 1e-8, "relative difference of the two sides"});
    }
    return out;
}

std::vector<Check> pigeonhole(SuiteContext& ctx) {
    std::vector<Check> out;
    for (const char* which : {"flat", "oscillator", "quasilinear"})
        take(out, ctx.decay_run(which).verdict, which, {"pigeonhole_density", "pigeonhole_companion"});
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative paths of every artifact except the config echo, which records the thread count.
std::vector<fs::path> artifacts(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "config.ini") out.push_back(fs::relative(e.path(), dir));
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Check> determinism(SuiteContext& ctx) {
    std::vector<Check> out;
    std::vector<std::pair<std::string, int>> runs{{"t1a", 1}, {"t1b", 1}, {"t2", 2}, {"t4", 4}};
    std::vector<fs::path> dirs;
    for (const auto& [tag, threads] : runs) {
        RunConfig c = determinism_preset(threads);
        c.output_dir = (fs::path(ctx.work_dir()) / "determinism" / tag).string();
        fs::remove_all(c.output_dir);
        experiment::run_and_record(c);
        dirs.emplace_back(c.output_dir);
    }
    const auto reference = artifacts(dirs[0]);
    for (std::size_t i = 1; i < dirs.size(); ++i) {
        int differing = 0;
        std::string which;
        const auto files = artifacts(dirs[i]);
        if (files != reference) {
            ++differing;
            which = "artifact lists";
        }
        for (const auto& f : reference) {
            if (slurp(dirs[0] / f) != slurp(dirs[i] / f)) {
                ++differing;
                which += std::string(which.empty() ? "" : ", ") + f.string();
            }
        }
        out.push_back({runs[i].first + "_matches_t1a", differing == 0 && !reference.empty(),
                       static_cast<double>(differing), 0.0,
                       differing ? "differing: " + which
                                 : std::to_string(reference.size()) + " artifacts byte-identical"});
    }
    return out;
}

struct Entry {
    int criterion;
    const char* name;
    std::function<std::vector<Check>(SuiteContext&)> run;
};

const std::vector<Entry>& registry() {
    static const std::vector<Entry> r{
        {1, "oracle-convergence", oracle_convergence}, {2, "identity-audit", identity_audit},
        {3, "morawetz", morawetz},                     {4, "hardy", hardy},
        {5, "null-condition", null_condition},         {6, "killing", killing},
        {7, "decay", decay_suite},                     {8, "bootstrap-envelope", bootstrap_envelope},
        {9, "lweight-identity", lweight_identity},     {10, "pigeonhole", pigeonhole},
        {11, "determinism", determinism},
    };
    return r;
}

}  // namespace

std::vector<std::string> suite_names() {
    std::vector<std::string> n;
    for (const auto& e : registry()) n.emplace_back(e.name);
    return n;
}

SuiteResult run_suite(const std::string& name, SuiteContext& ctx) {
    for (const auto& e : registry()) {
        if (name != e.name) continue;
        SuiteResult r;
        r.criterion = e.criterion;
        r.suite = e.name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            r.checks = e.run(ctx);
        } catch (const std::exception& ex) {
            r.checks.push_back({"error", false, std::numeric_limits<double>::quiet_NaN(), 0.0, ex.what()});
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }
    std::string list;
    for (const auto& n : suite_names()) list += (list.empty() ? "" : ", ") + n;
    throw UnknownSuiteError("unknown suite '" + name + "'; available: " + list);
}

}  // namespace qw::suites
