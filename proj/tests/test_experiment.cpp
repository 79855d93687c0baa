#include "qwave/experiment.hpp"
#include "qwave/suites.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qw;
namespace fs = std::filesystem;

namespace {

config::RunConfig small_run(double amplitude) {
    config::RunConfig c;
    c.mode = config::Mode::LinearFlat;
    c.params.R = 5.0;
    c.grid = foliation::GridSpec{13.0, 52};
    c.tau_final = 6.0;
    c.leaf_spacing = 1.0;
    c.data.family = evolve::DataFamily::OffCenterBump;
    c.data.amplitude = amplitude;
    c.data.width = 3.0;
    c.data.center = Vec3(1.0, 0.5, 0.0);
    c.diagnostics.k_max = 1;
    c.fit.quantities = {"E"};
    c.fit.tau_min = 1.0;
    c.fit.tau_max = 6.0;
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qwave-test-" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("zero data gives an all-trivial pass with vanishing series") {
    auto cfg = small_run(0.0);
    cfg.output_dir = scratch("zero").string();
    const auto out = experiment::run_and_record(cfg);
    CHECK(out.verdict.status() == "all-trivial-pass");
    CHECK(out.verdict.pass());
    for (const char* q : {"E", "S_alpha", "g_1", "ile_eps_density", "E_tilde", "lem1", "lem2"})
        for (double v : out.result.ledger.series(q)) CHECK(v == 0.0);
    for (const char* f : {"config.ini", "ledger.csv", "ledger.json", "decay_fits.json", "lemma_report.json",
                          "envelope_report.json", "verdict.json", "checkpoints.json"})
        CHECK(fs::exists(fs::path(cfg.output_dir) / f));
    std::ifstream in(fs::path(cfg.output_dir) / "verdict.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["status"] == "all-trivial-pass");
}

TEST_CASE("nonzero data is judged and the config echo reproduces the run") {
    auto cfg = small_run(1e-3);
    cfg.output_dir = scratch("echo-a").string();
    const auto a = experiment::run_and_record(cfg);
    CHECK(a.verdict.status() != "all-trivial-pass");
    CHECK(a.result.ledger.series("E").front() > 0.0);

    std::ifstream in(fs::path(cfg.output_dir) / "config.ini");
    std::stringstream text;
    text << in.rdbuf();
    auto again = config::parse_config(text.str());
    again.output_dir = scratch("echo-b").string();
    const auto b = experiment::run_and_record(again);
    CHECK(a.result.ledger.series("E") == b.result.ledger.series("E"));
    CHECK(a.result.ledger.series("g_1") == b.result.ledger.series("g_1"));
}

TEST_CASE("margin-fraction scaling reaches the requested peak deviation") {
    auto cfg = small_run(1e-3);
    cfg.mode = config::Mode::QuasilinearNull;
    cfg.nonlinear.nullform = "wave-dt";
    cfg.nonlinear.margin_fraction = 0.01;
    const auto eq = experiment::equation_for(cfg);
    const double peak = experiment::peak_quasilinear_deviation(eq.nullform, cfg.data, cfg.grid, cfg.fd_order);
    CHECK(peak == doctest::Approx(0.01).epsilon(1e-9));
    // Without a margin fraction the configured scale is used as is.
    cfg.nonlinear.margin_fraction = 0.0;
    cfg.nonlinear.scale = 2.0;
    const auto raw = experiment::equation_for(cfg);
    const auto unit = geometry::NullFormTensor::wave_times_dt();
    for (std::size_t i = 0; i < unit.g.size(); ++i) CHECK(raw.nullform.g[i] == 2.0 * unit.g[i]);
}

TEST_CASE("multiplier names") {
    geometry::DecayParams p;
    const auto flat = geometry::MetricSpec::flat();
    for (const char* n : {"dt", "morawetz", "rot12", "rot13", "rot23", "pweight:1"})
        CHECK_NOTHROW(experiment::multiplier_from_name(n, p, flat));
    CHECK_THROWS_AS(experiment::multiplier_from_name("boost", p, flat), std::invalid_argument);
}

TEST_CASE("verdict status") {
    experiment::Verdict v;
    v.checks.push_back({"a", true, 1.0, 2.0, ""});
    CHECK(v.status() == "pass");
    v.trivial = true;
    CHECK(v.status() == "all-trivial-pass");
    v.checks.push_back({"b", false, 3.0, 2.0, ""});
    CHECK(v.status() == "fail");
    CHECK(nlohmann::json::parse(v.to_json())["pass"] == false);
}

TEST_CASE("suite registry") {
    const auto names = suites::suite_names();
    REQUIRE(names.size() == 11);
    CHECK(names.front() == "oracle-convergence");
    CHECK(names.back() == "determinism");
    suites::SuiteContext ctx(scratch("suites").string());
    try {
        suites::run_suite("bogus", ctx);
        FAIL("expected an unknown-suite error");
    } catch (const suites::UnknownSuiteError& e) {
        for (const auto& n : names) CHECK(std::string(e.what()).find(n) != std::string::npos);
    }
    const auto r = suites::run_suite("lweight-identity", ctx);
    CHECK(r.criterion == 9);
    CHECK(r.pass());
    CHECK(r.summary().rfind("PASS criterion 9 ", 0) == 0);
}

}  // TEST_SUITE
