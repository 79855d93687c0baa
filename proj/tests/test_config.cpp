#include "qwave/config.hpp"
#include "qwave/suites.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

using namespace qw;
using namespace qw::config;

namespace {

std::string field_of(const std::string& text) {
    try {
        validate(parse_config(text));
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
    const RunConfig c = parse_config("");
    CHECK(c.mode == Mode::LinearFlat);
    CHECK(c.grid.n == 192);
    CHECK(c.grid.half_width == 48.0);
    CHECK(c.params.R == 10.0);
    CHECK(c.tau_final == 36.0);
    CHECK(c.fd_order == 4);
    CHECK(c.boundary == evolve::BoundaryMode::CausalDomain);
    CHECK_NOTHROW(validate(c));
    const auto leaves = c.leaf_times();
    CHECK(leaves.front() == 0.0);
    CHECK(leaves.back() == doctest::Approx(36.0));
    CHECK(leaves.size() == 73);
}

TEST_CASE("echo round trip") {
    RunConfig c = parse_config(R"(
[run]
mode = linear-perturbed
tau_final = 12.5
leaf_spacing = 0.25
seed = 77
[grid]
half_width = 30
n = 96
[data]
family = offcenter-bump
amplitude = 0.001
center = 2, 1, -0.5
[metric]
family = interior-oscillator
delta0 = 0.02
support = 8
[fit]
quantities = E, ile_eps_density
[audit]
levels = 32, 64
)");
    const std::string once = echo(c);
    const RunConfig again = parse_config(once);
    CHECK(echo(again) == once);
    CHECK(again.mode == Mode::LinearPerturbed);
    CHECK(again.data.center[2] == -0.5);
    CHECK(again.metric.delta0 == 0.02);
    CHECK(again.fit.quantities == std::vector<std::string>{"E", "ile_eps_density"});
    CHECK(again.audit.levels == std::vector<int>{32, 64});
    CHECK(again.seed == 77);
    // Every preset survives the round trip too.
    for (const auto& p : {suites::decay_preset("quasilinear"), suites::audit_preset(), suites::convergence_preset(2)})
        CHECK(echo(parse_config(echo(p))) == echo(p));
}

TEST_CASE("unknown sections and keys are rejected by name") {
    try {
        parse_config("[grid]\nn = 64\nwidth = 3\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "grid.width");
    }
    CHECK_THROWS_AS(parse_config("[gird]\nn = 64\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[grid]\nn = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[grid\nn = 64\n"), ConfigError);
}

TEST_CASE("validation names the violated field") {
    CHECK(field_of("[run]\nmode = sideways\n") == "run.mode");
    CHECK(field_of("[run]\ntau_final = 40\n") == "grid.half_width");
    CHECK(field_of("[run]\nboundary = sommerfeld\ntau_final = 40\n") == "");
    CHECK(field_of("[run]\nfd_order = 3\n") == "run.fd_order");
    CHECK(field_of("[params]\nalpha = 0.2\n").rfind("params.", 0) == 0);
    CHECK(field_of("[run]\nmode = quasilinear-null\n") == "nonlinear.nullform");
    CHECK(field_of("[run]\nmode = quasilinear-null\n[nonlinear]\nnullform = ttt-only\n") == "nonlinear.nullform");
    CHECK(field_of("[run]\nmode = quasilinear-null\n[nonlinear]\nnullform = wave-dt\n") == "");
    CHECK(field_of("[run]\nmode = linear-flat\n[metric]\nfamily = static\n") == "metric.family");
    CHECK(field_of("[run]\nmode = audit\n[audit]\nmultipliers = dt, spin\n") == "audit.multipliers");
    CHECK(field_of("[run]\nmode = audit\n[audit]\nlevels = 32\n") == "audit.levels");
    CHECK(field_of("[diagnostics]\nk_max = 3\n") == "diagnostics.k_max");
    CHECK(field_of("[audit]\nlevels = 32.5, 64\n") == "audit.levels");
}

TEST_CASE("environment overrides") {
    RunConfig c;
    ::setenv("QWAVE_OUTPUT_DIR", "elsewhere", 1);
    ::setenv("QWAVE_THREADS", "3", 1);
    apply_environment(c);
    CHECK(c.output_dir == "elsewhere");
    CHECK(c.threads == 3);
    ::setenv("QWAVE_THREADS", "zero", 1);
    CHECK_THROWS_AS(apply_environment(c), ConfigError);
    ::unsetenv("QWAVE_OUTPUT_DIR");
    ::unsetenv("QWAVE_THREADS");
    RunConfig d;
    apply_environment(d);
    CHECK(d.output_dir == "qwave-out");
    CHECK(d.threads == 1);
}

TEST_CASE("acceptance presets validate") {
    for (const char* w : {"flat", "oscillator", "quasilinear"}) CHECK_NOTHROW(validate(suites::decay_preset(w)));
    CHECK_NOTHROW(validate(suites::audit_preset()));
    CHECK_NOTHROW(validate(suites::convergence_preset(2)));
    CHECK_NOTHROW(validate(suites::convergence_preset(4)));
    CHECK_NOTHROW(validate(suites::refinement_preset(88)));
    CHECK_NOTHROW(validate(suites::determinism_preset(2)));
    CHECK_THROWS(suites::decay_preset("spiral"));
}

TEST_CASE("shipped configs parse and validate") {
    const std::filesystem::path dir = std::filesystem::path(QWAVE_SOURCE_DIR) / "configs";
    int count = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() != ".ini") continue;
        ++count;
        CAPTURE(e.path().string());
        CHECK_NOTHROW(validate(load_config(e.path().string())));
    }
    CHECK(count >= 5);
    CHECK_THROWS_AS(load_config((dir / "missing.ini").string()), ConfigError);
}

}  // TEST_SUITE
