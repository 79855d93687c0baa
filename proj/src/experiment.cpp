#include "qwave/experiment.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace qw::experiment {

namespace fs = std::filesystem;
using config::Mode;
using config::RunConfig;

bool Verdict::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string Verdict::status() const {
    if (!pass()) return "fail";
    return trivial ? "all-trivial-pass" : "pass";
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

std::string Verdict::to_json() const {
    nlohmann::json j;
    j["mode"] = mode;
    j["status"] = status();
    j["pass"] = pass();
    j["trivial"] = trivial;
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : checks)
        cs.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"value", finite_or_null(c.value)},
                      {"threshold", finite_or_null(c.threshold)},
                      {"detail", c.detail}});
    j["checks"] = cs;
    return j.dump(2);
}

// ---------------------------------------------------------------- equation

double peak_quasilinear_deviation(const geometry::NullFormTensor& nf, const evolve::InitialData& data,
                                  const foliation::GridSpec& grid, int fd_order) {
    Mat4 unit[4];
    double unit_norm[4];
    for (int ga = 0; ga < 4; ++ga) {
        unit[ga] = Mat4::Zero();
        for (int mu = 0; mu < 4; ++mu)
            for (int nu = 0; nu < 4; ++nu) unit[ga](mu, nu) = nf.at(mu, nu, ga);
        unit_norm[ga] = Eigen::SelfAdjointEigenSolver<Mat4>(unit[ga], Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
    }
    double peak = 0.0;
    std::vector<double> gx, gy, gz;
    auto scan = [&](const evolve::FieldState& st) {
        diagnostics::grid_gradient(st.grid, st.phi, fd_order, gx, gy, gz);
        for (std::size_t c = 0; c < st.phi.size(); ++c) {
            const Vec4 d(st.pi[c], gx[c], gy[c], gz[c]);
            double bound = 0.0;
            for (int ga = 0; ga < 4; ++ga) bound += std::abs(d[ga]) * unit_norm[ga];
            if (bound <= peak) continue;
            Mat4 dev = Mat4::Zero();
            for (int ga = 0; ga < 4; ++ga) dev += d[ga] * unit[ga];
            const Eigen::SelfAdjointEigenSolver<Mat4> es(dev, Eigen::EigenvaluesOnly);
            peak = std::max(peak, es.eigenvalues().cwiseAbs().maxCoeff());
        }
    };
    // Same spacing on a cube just large enough for the causal future of the data up to t_end.
    const double t_end = 2.0 * data.width;
    foliation::GridSpec probe = grid;
    const int cells = static_cast<int>(std::ceil((data.support_radius() + t_end + 4.0 * grid.dx()) / grid.dx()));
    if (2 * cells < grid.n) probe = foliation::GridSpec{cells * grid.dx(), 2 * cells};
    evolve::EquationSpec flat;
    flat.fd_order = fd_order;
    evolve::FieldState st = data.sample(probe);
    scan(st);
    const double dt = evolve::cfl_dt(flat, st, 0.25);
    while (st.t < t_end - 1e-12) {
        st = evolve::step_rk4(flat, st, std::min(dt, t_end - st.t), evolve::BoundaryMode::CausalDomain);
        scan(st);
    }
    return peak;
}

namespace {

double nullform_scale(const RunConfig& cfg) {
    const auto unit = geometry::NullFormTensor::from_preset(cfg.nonlinear.nullform);
    if (unit.is_zero() || cfg.nonlinear.margin_fraction <= 0.0) return cfg.nonlinear.scale;
    const double peak = peak_quasilinear_deviation(unit, cfg.data, cfg.grid, cfg.fd_order);
    if (!(peak > 0.0)) return cfg.nonlinear.scale;
    return cfg.nonlinear.margin_fraction / peak;
}

evolve::EquationSpec equation_with_scale(const RunConfig& cfg, double scale) {
    evolve::EquationSpec eq;
    eq.fd_order = cfg.fd_order;
    if (cfg.mode != Mode::LinearFlat && cfg.mode != Mode::Convergence && cfg.mode != Mode::Audit)
        eq.metric = cfg.metric;
    eq.nullform = geometry::NullFormTensor::from_preset(cfg.nonlinear.nullform);
    for (double& c : eq.nullform.g) c *= scale;
    eq.nullform.A *= scale;
    eq.semilinear = cfg.nonlinear.semilinear;
    eq.interior_quadratic = cfg.nonlinear.interior_coefficient;
    eq.interior_radius = cfg.nonlinear.interior_radius;
    if (cfg.mode == Mode::Stability) {
        eq.stability = true;
        eq.background = cfg.background;
    }
    return eq;
}

}  // namespace

evolve::EquationSpec equation_for(const RunConfig& cfg) { return equation_with_scale(cfg, nullform_scale(cfg)); }

multipliers::MultiplierSpec multiplier_from_name(const std::string& name, const geometry::DecayParams& p,
                                                 const geometry::MetricSpec& metric) {
    if (name == "dt") return multipliers::MultiplierSpec::dt();
    if (name == "morawetz") return multipliers::MultiplierSpec::morawetz(p.alpha);
    if (name == "rot12") return multipliers::MultiplierSpec::rotation(1, 2);
    if (name == "rot13") return multipliers::MultiplierSpec::rotation(1, 3);
    if (name == "rot23") return multipliers::MultiplierSpec::rotation(2, 3);
    if (name.rfind("pweight:", 0) == 0) return multipliers::MultiplierSpec::pweight(std::stod(name.substr(8)), metric, p.R);
    throw std::invalid_argument("unknown multiplier '" + name + "'");
}

// ---------------------------------------------------------------- studies

std::vector<ConvergenceRow> convergence_study(const RunConfig& cfg) {
    std::vector<ConvergenceRow> rows;
    const evolve::Profile F = cfg.data.profile();
    for (double dx : cfg.convergence.dx) {
        evolve::RunSetup s;
        s.grid = {cfg.grid.half_width, static_cast<int>(std::lround(2.0 * cfg.grid.half_width / dx))};
        s.eq = equation_for(cfg);
        s.data = cfg.data;
        s.boundary = cfg.boundary;
        s.courant = cfg.courant;
        s.leaf_times = {cfg.convergence.t_check};
        s.threads = cfg.threads;
        const evolve::Trajectory tr = evolve::run(s);
        const auto& g = s.grid;
        double e2 = 0.0, n2 = 0.0;
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < g.n; ++j)
                for (int k = 0; k < g.n; ++k) {
                    const double ex = evolve::exact_spherical(F, cfg.convergence.t_check, g.position(i, j, k).norm());
                    const double d = tr.final_state.phi[g.index(i, j, k)] - ex;
                    e2 += d * d;
                    n2 += ex * ex;
                }
        ConvergenceRow row;
        row.dx = g.dx();
        row.error = n2 > 0.0 ? std::sqrt(e2 / n2) : std::sqrt(e2);
        row.steps = tr.steps;
        row.boundary_reached = tr.boundary_reached;
        if (!rows.empty() && row.error > 0.0 && rows.back().error > 0.0)
            row.order = std::log(rows.back().error / row.error) / std::log(rows.back().dx / row.dx);
        rows.push_back(row);
    }
    return rows;
}

std::vector<multipliers::AuditReport> audit_study(const RunConfig& cfg) {
    const evolve::EquationSpec eq = equation_for(cfg);
    multipliers::AuditOptions opt;
    opt.tau1 = cfg.audit.tau1;
    opt.tau2 = cfg.audit.tau2;
    opt.region = cfg.audit.region == "cone" ? multipliers::AuditRegion::ConeOnly : multipliers::AuditRegion::Slab;
    std::vector<multipliers::AuditReport> reports(cfg.audit.multipliers.size());
    for (std::size_t m = 0; m < reports.size(); ++m) {
        reports[m].multiplier = cfg.audit.multipliers[m];
        reports[m].region = cfg.audit.region;
    }
    for (int n : cfg.audit.levels) {
        evolve::RunSetup s;
        s.grid = {cfg.grid.half_width, n};
        s.eq = eq;
        s.data = cfg.data;
        s.boundary = cfg.boundary;
        s.courant = cfg.courant;
        s.leaf_times = {cfg.audit.tau2};
        s.threads = cfg.threads;
        const multipliers::AuditPlan plan = multipliers::make_audit_plan(cfg.params, s.grid, opt);
        diagnostics::JetRecorder rec(plan.points, 2);
        evolve::run(s, {&rec});
        for (std::size_t m = 0; m < reports.size(); ++m) {
            const auto X = multiplier_from_name(cfg.audit.multipliers[m], cfg.params, eq.metric);
            reports[m].add(s.grid.dx(), multipliers::evaluate_audit(plan, rec.jets(), X, eq));
        }
    }
    return reports;
}

// ---------------------------------------------------------------- ledger runs

RunResult evolve_with_ledger(const RunConfig& cfg, const std::string& checkpoint_dir) {
    RunResult res;
    res.nullform_scale = nullform_scale(cfg);
    const evolve::EquationSpec eq = equation_with_scale(cfg, res.nullform_scale);

    evolve::RunSetup s;
    s.grid = cfg.grid;
    s.eq = eq;
    s.data = cfg.data;
    s.boundary = cfg.boundary;
    s.courant = cfg.courant;
    s.leaf_times = cfg.leaf_times();
    s.threads = cfg.threads;
    if (!checkpoint_dir.empty() && cfg.checkpoint_every >= 0) {
        fs::create_directories(checkpoint_dir);
        s.checkpoint_dir = checkpoint_dir;
        s.checkpoint_every = cfg.checkpoint_every;
    }

    diagnostics::LedgerOptions lo;
    lo.params = cfg.params;
    lo.grid = cfg.grid;
    lo.leaf_times = s.leaf_times;
    lo.sphere_degree = cfg.diagnostics.sphere_degree;
    lo.subcells = cfg.diagnostics.subcells;
    lo.k_max = cfg.diagnostics.k_max;
    lo.ball_radial = cfg.diagnostics.ball_radial;
    lo.envelopes = cfg.diagnostics.envelopes;
    lo.envelope_delta0 = cfg.params.delta0;
    lo.envelope_radial = cfg.diagnostics.envelope_radial;
    lo.probe = cfg.diagnostics.probe;
    lo.fd_order = cfg.fd_order;
    lo.causal_domain = cfg.boundary == evolve::BoundaryMode::CausalDomain;
    diagnostics::LedgerObserver obs(lo, eq);
    res.trajectory = evolve::run(s, {&obs});
    res.ledger = obs.ledger();

    const std::vector<double> taus = res.ledger.taus();
    for (const auto& q : cfg.fit.quantities) {
        try {
            const std::vector<double> ys = res.ledger.series(q);
            const decay::FitWindow w = cfg.fit.tau_max > cfg.fit.tau_min ? decay::FitWindow{cfg.fit.tau_min, cfg.fit.tau_max}
                                                                         : decay::default_window(taus);
            res.fits.push_back(decay::fit_exponent(taus, ys, w, q));
        } catch (const std::exception& e) {
            res.fit_errors.push_back(q + ": " + e.what());
        }
    }
    const std::vector<double> s_eps = res.ledger.series("ile_eps_density");
    const double K = cfg.pigeonhole_constant > 0.0 ? cfg.pigeonhole_constant
                                                   : decay::pigeonhole_constant(taus, s_eps, cfg.pigeonhole_beta);
    res.pigeonhole = decay::pigeonhole_report(taus, s_eps, cfg.pigeonhole_beta, K);
    if (!eq.metric.is_flat()) res.metric_envelope = geometry::validate_envelope(eq.metric, cfg.params);
    return res;
}

namespace {

double max_lemma_ratio(const diagnostics::LeafRecord& l) {
    return std::max({l.lem1, l.lem2, l.lem2_corollary, l.lempphi2});
}

}  // namespace

Verdict judge(const RunConfig& cfg, const RunResult& r) {
    Verdict v;
    v.mode = config::to_string(cfg.mode);
    const auto& led = r.ledger;
    v.trivial = cfg.data.amplitude == 0.0 &&
                (cfg.mode != Mode::Stability || cfg.background.amplitude == 0.0);

    v.checks.push_back({"completed", true, led.taus().empty() ? 0.0 : led.taus().back(), cfg.tau_final,
                        "run reached the final leaf"});
    v.checks.push_back({"hyperbolicity_margin", r.trajectory.min_margin > 0.0, r.trajectory.min_margin, 0.0,
                        "smallest margin of the principal symbol over the run"});
    if (cfg.boundary == evolve::BoundaryMode::CausalDomain)
        v.checks.push_back({"causal_domain", !r.trajectory.boundary_reached,
                            r.trajectory.boundary_reached ? 1.0 : 0.0, 0.0, "support stayed inside the grid"});

    double lem = 0.0, lem_tau = 0.0;
    for (const auto& l : led.leaves)
        if (!(max_lemma_ratio(l) <= lem)) {
            lem = max_lemma_ratio(l);
            lem_tau = l.tau;
        }
    v.checks.push_back({"lemma_ratios", lem <= cfg.verdict.lemma_bound, lem, cfg.verdict.lemma_bound,
                        "largest lemma ratio, at tau = " + std::to_string(lem_tau)});

    if (cfg.diagnostics.envelopes) {
        double env = 0.0, env_tau = 0.0;
        for (const auto& e : led.envelopes)
            if (e.tau >= cfg.verdict.envelope_from - 1e-12 && !(e.max_ratio() <= env)) {
                env = e.max_ratio();
                env_tau = e.tau;
            }
        v.checks.push_back({"envelope_ratios", env <= cfg.verdict.envelope_bound, env, cfg.verdict.envelope_bound,
                            "largest bootstrap ratio for tau >= " + std::to_string(cfg.verdict.envelope_from) +
                                ", at tau = " + std::to_string(env_tau) + "; words of length <= " +
                                std::to_string(led.commuted_truncation)});
    }
    if (r.metric_envelope) {
        double worst = 0.0;
        for (const auto& e : r.metric_envelope->entries) worst = std::max(worst, e.max_ratio);
        v.checks.push_back({"metric_envelope", r.metric_envelope->pass(), worst, 1.0,
                            "background perturbation against its decay envelopes"});
    }
    if (cfg.verdict.max_exponent != 0.0 && !v.trivial) {
        if (!r.fits.empty() && r.fits.front().name == cfg.fit.quantities.front()) {
            const auto& f = r.fits.front();
            v.checks.push_back({"decay_exponent", f.exponent <= cfg.verdict.max_exponent, f.exponent,
                                cfg.verdict.max_exponent, "fitted exponent of " + f.name});
        } else {
            v.checks.push_back({"decay_exponent", false, std::numeric_limits<double>::quiet_NaN(),
                                cfg.verdict.max_exponent,
                                r.fit_errors.empty() ? "no fit" : r.fit_errors.front()});
        }
    }
    if (cfg.verdict.monotone_from >= 0.0) {
        const auto taus = led.taus();
        const auto E = led.series("E");
        double base = -1.0, worst = 0.0, worst_tau = 0.0;
        for (std::size_t i = 0; i < taus.size(); ++i) {
            if (taus[i] < cfg.verdict.monotone_from - 1e-12) continue;
            if (base < 0.0) base = E[i];
            if (i + 1 < taus.size() && E[i + 1] - E[i] > worst) {
                worst = E[i + 1] - E[i];
                worst_tau = taus[i + 1];
            }
        }
        const double allowed = cfg.verdict.monotone_rtol * std::max(base, 0.0);
        v.checks.push_back({"energy_nonincreasing", worst <= allowed, worst, allowed,
                            "largest rise of E between consecutive leaves from tau = " +
                                std::to_string(cfg.verdict.monotone_from) + ", at tau = " +
                                std::to_string(worst_tau)});
    }
    if (cfg.verdict.require_pigeonhole && r.pigeonhole && !v.trivial) {
        const double d = r.pigeonhole->min_complete_density();
        v.checks.push_back({"pigeonhole_density", d >= 0.5, d, 0.5, "smallest density over complete dyadic blocks"});
        v.checks.push_back({"pigeonhole_companion", r.pigeonhole->companion_ok,
                            static_cast<double>(r.pigeonhole->companion_failures.size()), 0.0,
                            "leaf times in T without a companion in [2 tau, 4 tau]"});
    }
    return v;
}

std::string lemma_report_json(const diagnostics::EnergyLedger& ledger) {
    struct Field {
        const char* name;
        double diagnostics::LeafRecord::*member;
    };
    const Field fields[] = {{"hardy_weighted", &diagnostics::LeafRecord::lem1},
                            {"hardy_cone", &diagnostics::LeafRecord::lem2},
                            {"hardy_cone_corollary", &diagnostics::LeafRecord::lem2_corollary},
                            {"pweighted_phi2", &diagnostics::LeafRecord::lempphi2}};
    nlohmann::json j = nlohmann::json::array();
    for (const auto& f : fields) {
        double worst = 0.0, at = 0.0;
        nlohmann::json per = nlohmann::json::array();
        for (const auto& l : ledger.leaves) {
            const double x = l.*(f.member);
            per.push_back({{"tau", l.tau}, {"ratio", finite_or_null(x)}});
            if (!(x <= worst)) {
                worst = x;
                at = l.tau;
            }
        }
        j.push_back({{"name", f.name}, {"max_ratio", finite_or_null(worst)}, {"argmax_tau", at}, {"leaves", per}});
    }
    return j.dump(2);
}

std::string envelope_report_json(const diagnostics::EnergyLedger& ledger, double from_tau) {
    struct Field {
        const char* name;
        double diagnostics::EnvelopeRecord::*member;
    };
    const Field fields[] = {{"cone_lbar", &diagnostics::EnvelopeRecord::out_lbar},
                            {"cone_good", &diagnostics::EnvelopeRecord::out_good},
                            {"interior_shells", &diagnostics::EnvelopeRecord::in_out},
                            {"unit_ball", &diagnostics::EnvelopeRecord::in_in}};
    nlohmann::json j;
    j["commuted_truncation"] = ledger.commuted_truncation;
    j["from_tau"] = from_tau;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& f : fields) {
        double worst = 0.0, at = 0.0;
        for (const auto& e : ledger.envelopes) {
            if (e.tau < from_tau - 1e-12) continue;
            const double x = e.*(f.member);
            if (!(x <= worst)) {
                worst = x;
                at = e.tau;
            }
        }
        entries.push_back({{"name", f.name}, {"max_ratio", finite_or_null(worst)}, {"argmax_point", {{"tau", at}}}});
    }
    j["entries"] = entries;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& e : ledger.envelopes)
        per.push_back({{"tau", e.tau},
                       {"cone_lbar", finite_or_null(e.out_lbar)},
                       {"cone_good", finite_or_null(e.out_good)},
                       {"interior_shells", finite_or_null(e.in_out)},
                       {"unit_ball", finite_or_null(e.in_in)}});
    j["leaves"] = per;
    return j.dump(2);
}

// ---------------------------------------------------------------- artifact directory

RunOutcome run_and_record(const RunConfig& cfg) {
    config::validate(cfg);
    if (cfg.mode == Mode::Convergence || cfg.mode == Mode::Audit)
        throw std::invalid_argument("run_and_record needs a ledger mode");
    const fs::path out(cfg.output_dir);
    fs::create_directories(out);
    write_text(out / "config.ini", config::echo(cfg));
    RunOutcome o;
    o.result = evolve_with_ledger(cfg, (out / "checkpoints").string());
    const RunResult& r = o.result;
    o.verdict = judge(cfg, r);
    write_text(out / "checkpoints.json", r.trajectory.index_json(cfg.grid, out.string()));
    {
        std::ostringstream csv;
        r.ledger.write_csv(csv);
        write_text(out / "ledger.csv", csv.str());
    }
    write_text(out / "ledger.json", r.ledger.to_json());
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : r.fits) fits.push_back(nlohmann::json::parse(f.to_json()));
    nlohmann::json fj{{"decay_fits", fits}, {"errors", r.fit_errors}, {"nullform_scale", r.nullform_scale}};
    write_text(out / "decay_fits.json", fj.dump(2));
    for (const auto& q : cfg.fit.quantities) {
        try {
            std::ostringstream csv;
            decay::write_loglog_csv(csv, r.ledger.taus(), r.ledger.series(q));
            write_text(out / ("loglog_" + q + ".csv"), csv.str());
        } catch (const std::invalid_argument&) {
        }
    }
    write_text(out / "lemma_report.json", lemma_report_json(r.ledger));
    write_text(out / "envelope_report.json", envelope_report_json(r.ledger, cfg.verdict.envelope_from));
    if (cfg.diagnostics.probe) {
        std::ostringstream csv;
        r.ledger.write_probe_csv(csv);
        write_text(out / "probe.csv", csv.str());
    }
    if (r.pigeonhole) write_text(out / "pigeonhole.json", r.pigeonhole->to_json());
    if (r.metric_envelope) write_text(out / "metric_envelope.json", r.metric_envelope->to_json());
    write_text(out / "verdict.json", o.verdict.to_json());
    return o;
}

Verdict run_experiment(const RunConfig& cfg) {
    config::validate(cfg);
    const fs::path out(cfg.output_dir);
    fs::create_directories(out);
    write_text(out / "config.ini", config::echo(cfg));

    Verdict v;
    v.mode = config::to_string(cfg.mode);
    v.trivial = cfg.data.amplitude == 0.0;

    if (cfg.mode == Mode::Convergence) {
        const auto rows = convergence_study(cfg);
        std::ostringstream csv;
        csv << "dx,relative_l2_error,observed_order,steps\n";
        nlohmann::json j = nlohmann::json::array();
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%ld\n", r.dx, r.error, r.order, r.steps);
            csv << buf;
            j.push_back({{"dx", r.dx}, {"error", r.error}, {"order", r.order}, {"steps", r.steps},
                         {"boundary_reached", r.boundary_reached}});
        }
        write_text(out / "convergence.csv", csv.str());
        write_text(out / "convergence.json", j.dump(2));
        if (!v.trivial) {
            const double need = cfg.fd_order == 4 ? 3.5 : 1.9;
            double worst = std::numeric_limits<double>::infinity();
            for (std::size_t i = 1; i < rows.size(); ++i) worst = std::min(worst, rows[i].order);
            v.checks.push_back({"observed_order", worst >= need, worst, need,
                                "smallest observed order across refinements"});
        }
        for (const auto& r : rows)
            if (r.boundary_reached && cfg.boundary == evolve::BoundaryMode::CausalDomain)
                v.checks.push_back({"causal_domain", false, r.dx, 0.0, "support reached the grid boundary"});
    } else if (cfg.mode == Mode::Audit) {
        const auto reports = audit_study(cfg);
        nlohmann::json j = nlohmann::json::array();
        std::ostringstream csv;
        csv << "multiplier,dx,bulk,flux1,flux2,incoming,cylinder,residual\n";
        char buf[320];
        for (const auto& rep : reports) {
            j.push_back(nlohmann::json::parse(rep.to_json()));
            for (std::size_t i = 0; i < rep.terms.size(); ++i) {
                const auto& t = rep.terms[i];
                std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                              rep.multiplier.c_str(), rep.resolutions[i], t.bulk, t.flux1, t.flux2, t.incoming,
                              t.cylinder, t.residual);
                csv << buf;
            }
            if (!v.trivial) {
                v.checks.push_back({rep.multiplier + "_order", rep.order >= 1.9, rep.order, 1.9,
                                    "least-squares order of the identity residual"});
                v.checks.push_back({rep.multiplier + "_finest_residual", rep.terms.back().residual <= 1e-3,
                                    rep.terms.back().residual, 1e-3, "relative residual on the finest grid"});
            }
        }
        write_text(out / "audit_report.json", j.dump(2));
        write_text(out / "audit.csv", csv.str());
    } else {
        return run_and_record(cfg).verdict;
    }
    write_text(out / "verdict.json", v.to_json());
    return v;
}

}  // namespace qw::experiment
