#include "qwave/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace qw::config {

namespace pt = boost::property_tree;

std::string to_string(Mode m) {
    switch (m) {
        case Mode::LinearFlat: return "linear-flat";
        case Mode::LinearPerturbed: return "linear-perturbed";
        case Mode::QuasilinearNull: return "quasilinear-null";
        case Mode::QuasilinearInterior: return "quasilinear-interior";
        case Mode::Stability: return "stability";
        case Mode::Convergence: return "convergence";
        case Mode::Audit: return "audit";
    }
    return "linear-flat";
}

Mode mode_from_string(const std::string& name) {
    for (Mode m : {Mode::LinearFlat, Mode::LinearPerturbed, Mode::QuasilinearNull, Mode::QuasilinearInterior,
                   Mode::Stability, Mode::Convergence, Mode::Audit})
        if (to_string(m) == name) return m;
    throw std::invalid_argument("unknown mode '" + name + "'");
}

std::vector<double> RunConfig::leaf_times() const {
    std::vector<double> t;
    const long n = std::lround(std::floor(tau_final / leaf_spacing + 1e-9));
    for (long i = 0; i <= n; ++i) t.push_back(i * leaf_spacing);
    if (tau_final - t.back() > 1e-9 * std::max(1.0, tau_final)) t.push_back(tau_final);
    return t;
}

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s{
        {"run", {"mode", "tau_final", "leaf_spacing", "boundary", "courant", "fd_order", "checkpoint_every",
                 "output_dir", "seed", "threads"}},
        {"params", {"delta0", "alpha", "epsilon", "alpha1", "alpha2", "R"}},
        {"grid", {"half_width", "n"}},
        {"data", {"family", "amplitude", "width", "center", "power", "velocity", "profile_center"}},
        {"background", {"family", "amplitude", "width", "center", "power", "velocity", "profile_center"}},
        {"metric", {"family", "delta0", "alpha", "support"}},
        {"nonlinear",
         {"nullform", "scale", "margin_fraction", "semilinear", "interior_coefficient", "interior_radius"}},
        {"diagnostics",
         {"k_max", "envelopes", "probe", "sphere_degree", "subcells", "envelope_radial", "ball_radial"}},
        {"fit", {"quantities", "tau_min", "tau_max"}},
        {"pigeonhole", {"beta", "constant"}},
        {"verdict", {"lemma_bound", "envelope_bound", "envelope_from", "max_exponent", "monotone_from",
                     "monotone_rtol", "require_pigeonhole"}},
        {"audit", {"multipliers", "region", "tau1", "tau2", "levels"}},
        {"convergence", {"dx", "t_check"}},
    };
    return s;
}

class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {
        for (const auto& [section, body] : tree) {
            const auto it = schema().find(section);
            if (it == schema().end()) {
                if (body.empty()) throw ConfigError(section, "keys must sit inside a [section]");
                throw ConfigError(section, "unknown section");
            }
            for (const auto& [key, value] : body)
                if (!it->second.count(key)) throw ConfigError(section + "." + key, "unknown key");
        }
    }

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return *v;
    }

    void get(const std::string& section, const std::string& key, double& out) const {
        if (auto v = raw(section, key)) out = to_double(section + "." + key, *v);
    }
    void get(const std::string& section, const std::string& key, int& out) const {
        if (auto v = raw(section, key)) {
            const double d = to_double(section + "." + key, *v);
            if (d != std::floor(d) || std::abs(d) > 1e9) throw ConfigError(section + "." + key, "expected an integer");
            out = static_cast<int>(d);
        }
    }
    void get(const std::string& section, const std::string& key, unsigned long long& out) const {
        if (auto v = raw(section, key)) {
            try {
                std::size_t pos = 0;
                out = std::stoull(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument("trailing text");
            } catch (const std::exception&) {
                throw ConfigError(section + "." + key, "expected a non-negative integer, got '" + *v + "'");
            }
        }
    }
    void get(const std::string& section, const std::string& key, bool& out) const {
        if (auto v = raw(section, key)) {
            if (*v == "true" || *v == "1" || *v == "yes") out = true;
            else if (*v == "false" || *v == "0" || *v == "no") out = false;
            else throw ConfigError(section + "." + key, "expected true or false, got '" + *v + "'");
        }
    }
    void get(const std::string& section, const std::string& key, std::string& out) const {
        if (auto v = raw(section, key)) out = *v;
    }
    void get_list(const std::string& section, const std::string& key, std::vector<std::string>& out) const {
        if (auto v = raw(section, key)) out = split(*v);
    }
    void get_list(const std::string& section, const std::string& key, std::vector<double>& out) const {
        if (auto v = raw(section, key)) {
            out.clear();
            for (const auto& s : split(*v)) out.push_back(to_double(section + "." + key, s));
        }
    }

    static std::vector<std::string> split(const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ',' || c == ' ' || c == '\t') {
                if (!cur.empty()) out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    }

    static double to_double(const std::string& field, const std::string& s) {
        try {
            std::size_t pos = 0;
            const double d = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing text");
            if (!std::isfinite(d)) throw std::invalid_argument("not finite");
            return d;
        } catch (const std::exception&) {
            throw ConfigError(field, "expected a number, got '" + s + "'");
        }
    }

private:
    const pt::ptree& tree_;
};

template <class F>
auto named(const std::string& field, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(field, e.what());
    }
}

void read_data(const Reader& rd, const std::string& sec, evolve::InitialData& d) {
    std::string family = evolve::to_string(d.family);
    rd.get(sec, "family", family);
    d.family = named(sec + ".family", [&] { return evolve::data_family_from_string(family); });
    rd.get(sec, "amplitude", d.amplitude);
    rd.get(sec, "width", d.width);
    rd.get(sec, "power", d.power);
    rd.get(sec, "velocity", d.velocity);
    rd.get(sec, "profile_center", d.profile_center);
    std::vector<double> c;
    rd.get_list(sec, "center", c);
    if (!c.empty()) {
        if (c.size() != 3) throw ConfigError(sec + ".center", "expected three numbers");
        d.center = Vec3(c[0], c[1], c[2]);
    }
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        if constexpr (std::is_same_v<T, std::string>) s += v[i];
        else s += num(static_cast<double>(v[i]));
    }
    return s;
}

void write_data(std::ostream& os, const std::string& sec, const evolve::InitialData& d) {
    os << "[" << sec << "]\n"
       << "family = " << evolve::to_string(d.family) << "\n"
       << "amplitude = " << num(d.amplitude) << "\n"
       << "width = " << num(d.width) << "\n"
       << "center = " << num(d.center[0]) << ", " << num(d.center[1]) << ", " << num(d.center[2]) << "\n"
       << "power = " << d.power << "\n"
       << "velocity = " << num(d.velocity) << "\n"
       << "profile_center = " << num(d.profile_center) << "\n\n";
}

const char* b(bool v) { return v ? "true" : "false"; }

geometry::MetricSpec make_metric(const std::string& family, double delta0, double alpha, double support) {
    switch (geometry::metric_family_from_string(family)) {
        case geometry::MetricFamily::Flat: return geometry::MetricSpec::flat();
        case geometry::MetricFamily::InteriorOscillator:
            return geometry::MetricSpec::interior_oscillator(delta0, alpha, support);
        case geometry::MetricFamily::Static: return geometry::MetricSpec::static_bump(delta0, alpha, support);
        case geometry::MetricFamily::ConstantHtt: return geometry::MetricSpec::constant_htt(delta0);
    }
    return geometry::MetricSpec::flat();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    pt::ptree tree;
    try {
        std::istringstream is(text);
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("line " + std::to_string(e.line()), e.message());
    }
    const Reader rd(tree);
    RunConfig c;

    std::string mode = to_string(c.mode);
    rd.get("run", "mode", mode);
    c.mode = named("run.mode", [&] { return mode_from_string(mode); });
    rd.get("run", "tau_final", c.tau_final);
    rd.get("run", "leaf_spacing", c.leaf_spacing);
    std::string boundary = evolve::to_string(c.boundary);
    rd.get("run", "boundary", boundary);
    c.boundary = named("run.boundary", [&] { return evolve::boundary_mode_from_string(boundary); });
    rd.get("run", "courant", c.courant);
    rd.get("run", "fd_order", c.fd_order);
    rd.get("run", "checkpoint_every", c.checkpoint_every);
    rd.get("run", "output_dir", c.output_dir);
    rd.get("run", "seed", c.seed);
    rd.get("run", "threads", c.threads);

    rd.get("params", "delta0", c.params.delta0);
    rd.get("params", "alpha", c.params.alpha);
    rd.get("params", "epsilon", c.params.epsilon);
    rd.get("params", "alpha1", c.params.alpha1);
    rd.get("params", "alpha2", c.params.alpha2);
    rd.get("params", "R", c.params.R);

    rd.get("grid", "half_width", c.grid.half_width);
    rd.get("grid", "n", c.grid.n);

    read_data(rd, "data", c.data);
    read_data(rd, "background", c.background);

    std::string family = "flat";
    double m_delta0 = c.params.delta0, m_alpha = c.params.alpha, m_support = c.params.R - 1.0;
    rd.get("metric", "family", family);
    rd.get("metric", "delta0", m_delta0);
    rd.get("metric", "alpha", m_alpha);
    rd.get("metric", "support", m_support);
    c.metric = named("metric.family", [&] { return make_metric(family, m_delta0, m_alpha, m_support); });

    rd.get("nonlinear", "nullform", c.nonlinear.nullform);
    named("nonlinear.nullform", [&] { return geometry::NullFormTensor::from_preset(c.nonlinear.nullform); });
    rd.get("nonlinear", "scale", c.nonlinear.scale);
    rd.get("nonlinear", "margin_fraction", c.nonlinear.margin_fraction);
    rd.get("nonlinear", "semilinear", c.nonlinear.semilinear);
    rd.get("nonlinear", "interior_coefficient", c.nonlinear.interior_coefficient);
    rd.get("nonlinear", "interior_radius", c.nonlinear.interior_radius);

    rd.get("diagnostics", "k_max", c.diagnostics.k_max);
    rd.get("diagnostics", "envelopes", c.diagnostics.envelopes);
    rd.get("diagnostics", "probe", c.diagnostics.probe);
    rd.get("diagnostics", "sphere_degree", c.diagnostics.sphere_degree);
    rd.get("diagnostics", "subcells", c.diagnostics.subcells);
    rd.get("diagnostics", "envelope_radial", c.diagnostics.envelope_radial);
    rd.get("diagnostics", "ball_radial", c.diagnostics.ball_radial);

    rd.get_list("fit", "quantities", c.fit.quantities);
    rd.get("fit", "tau_min", c.fit.tau_min);
    rd.get("fit", "tau_max", c.fit.tau_max);

    rd.get("pigeonhole", "beta", c.pigeonhole_beta);
    rd.get("pigeonhole", "constant", c.pigeonhole_constant);

    rd.get("verdict", "lemma_bound", c.verdict.lemma_bound);
    rd.get("verdict", "envelope_bound", c.verdict.envelope_bound);
    rd.get("verdict", "envelope_from", c.verdict.envelope_from);
    rd.get("verdict", "max_exponent", c.verdict.max_exponent);
    rd.get("verdict", "monotone_from", c.verdict.monotone_from);
    rd.get("verdict", "monotone_rtol", c.verdict.monotone_rtol);
    rd.get("verdict", "require_pigeonhole", c.verdict.require_pigeonhole);

    rd.get_list("audit", "multipliers", c.audit.multipliers);
    rd.get("audit", "region", c.audit.region);
    rd.get("audit", "tau1", c.audit.tau1);
    rd.get("audit", "tau2", c.audit.tau2);
    std::vector<double> levels;
    rd.get_list("audit", "levels", levels);
    if (!levels.empty()) {
        c.audit.levels.clear();
        for (double l : levels) {
            if (l != std::floor(l)) throw ConfigError("audit.levels", "expected integers");
            c.audit.levels.push_back(static_cast<int>(l));
        }
    }

    rd.get_list("convergence", "dx", c.convergence.dx);
    rd.get("convergence", "t_check", c.convergence.t_check);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_environment(RunConfig& cfg) {
    if (const char* dir = std::getenv("QWAVE_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
    if (const char* th = std::getenv("QWAVE_THREADS"); th && *th) {
        char* end = nullptr;
        const long n = std::strtol(th, &end, 10);
        if (*end != '\0' || n < 1) throw ConfigError("QWAVE_THREADS", "expected a positive integer");
        cfg.threads = static_cast<int>(n);
    }
}

void validate(const RunConfig& c) {
    for (const auto& v : geometry::validate_params(c.params))
        throw ConfigError("params." + v.name, "ordering violated (" + num(v.lhs) + " vs " + num(v.rhs) + ")");
    if (c.grid.n < 16) throw ConfigError("grid.n", "must be at least 16");
    if (!(c.grid.half_width > 0.0)) throw ConfigError("grid.half_width", "must be positive");
    if (!(c.tau_final > 0.0)) throw ConfigError("run.tau_final", "must be positive");
    if (!(c.leaf_spacing > 0.0)) throw ConfigError("run.leaf_spacing", "must be positive");
    if (!(c.courant > 0.0 && c.courant <= 1.0)) throw ConfigError("run.courant", "must lie in (0, 1]");
    if (c.fd_order != 2 && c.fd_order != 4) throw ConfigError("run.fd_order", "must be 2 or 4");
    if (c.threads < 1) throw ConfigError("run.threads", "must be at least 1");
    if (c.output_dir.empty()) throw ConfigError("run.output_dir", "must not be empty");
    if (c.diagnostics.k_max < 0 || c.diagnostics.k_max > 2) throw ConfigError("diagnostics.k_max", "must lie in 0..2");
    if (c.diagnostics.sphere_degree < 3) throw ConfigError("diagnostics.sphere_degree", "must be at least 3");
    if (c.diagnostics.subcells < 1) throw ConfigError("diagnostics.subcells", "must be at least 1");
    if (c.diagnostics.envelope_radial < 1) throw ConfigError("diagnostics.envelope_radial", "must be at least 1");
    if (c.diagnostics.ball_radial < 2) throw ConfigError("diagnostics.ball_radial", "must be at least 2");
    if (c.fit.quantities.empty()) throw ConfigError("fit.quantities", "must name at least one series");
    if (c.nonlinear.margin_fraction < 0.0 || c.nonlinear.margin_fraction >= 1.0)
        throw ConfigError("nonlinear.margin_fraction", "must lie in [0, 1)");
    if (c.verdict.monotone_rtol < 0.0) throw ConfigError("verdict.monotone_rtol", "must be non-negative");

    const bool flat_metric = c.metric.is_flat();
    const bool zero_nullform = geometry::NullFormTensor::from_preset(c.nonlinear.nullform).is_zero();
    switch (c.mode) {
        case Mode::LinearFlat:
        case Mode::Convergence:
        case Mode::Audit:
            if (!flat_metric) throw ConfigError("metric.family", to_string(c.mode) + " requires the flat metric");
            if (!zero_nullform) throw ConfigError("nonlinear.nullform", to_string(c.mode) + " is linear");
            if (c.nonlinear.interior_coefficient != 0.0 || c.nonlinear.semilinear)
                throw ConfigError("nonlinear", to_string(c.mode) + " is linear");
            break;
        case Mode::LinearPerturbed:
            if (!zero_nullform) throw ConfigError("nonlinear.nullform", "linear-perturbed is linear");
            break;
        case Mode::QuasilinearNull: {
            if (zero_nullform) throw ConfigError("nonlinear.nullform", "quasilinear-null needs a nonzero tensor");
            const auto rep =
                geometry::check_null_condition(geometry::NullFormTensor::from_preset(c.nonlinear.nullform));
            if (!rep.pass) throw ConfigError("nonlinear.nullform", "tensor violates the null condition");
            break;
        }
        case Mode::QuasilinearInterior:
            if (c.nonlinear.interior_coefficient == 0.0)
                throw ConfigError("nonlinear.interior_coefficient", "quasilinear-interior needs a nonzero coefficient");
            if (!(c.nonlinear.interior_radius > 0.0 && c.nonlinear.interior_radius <= c.params.R))
                throw ConfigError("nonlinear.interior_radius", "must lie in (0, R]");
            break;
        case Mode::Stability:
            if (c.background.family == evolve::DataFamily::Zero)
                throw ConfigError("background.family", "stability mode needs a background solution");
            break;
    }

    if (c.mode == Mode::Convergence) {
        if (c.data.family != evolve::DataFamily::Shell)
            throw ConfigError("data.family", "convergence mode needs the shell family (exact solution known)");
        if (c.convergence.dx.size() < 2) throw ConfigError("convergence.dx", "needs at least two spacings");
        for (double dx : c.convergence.dx)
            if (!(dx > 0.0)) throw ConfigError("convergence.dx", "spacings must be positive");
        if (!(c.convergence.t_check > 0.0)) throw ConfigError("convergence.t_check", "must be positive");
    } else if (c.mode == Mode::Audit) {
        if (c.audit.levels.size() < 2) throw ConfigError("audit.levels", "needs at least two resolutions");
        for (int n : c.audit.levels)
            if (n < 16) throw ConfigError("audit.levels", "each resolution must be at least 16");
        if (c.audit.region != "slab" && c.audit.region != "cone")
            throw ConfigError("audit.region", "must be slab or cone");
        if (!(c.audit.tau2 > c.audit.tau1 && c.audit.tau1 >= 0.0))
            throw ConfigError("audit.tau2", "needs 0 <= tau1 < tau2");
        if (c.audit.multipliers.empty()) throw ConfigError("audit.multipliers", "must name at least one multiplier");
        for (const auto& m : c.audit.multipliers) {
            if (m == "dt" || m == "morawetz" || m == "rot12" || m == "rot13" || m == "rot23") continue;
            if (m.rfind("pweight:", 0) == 0) {
                Reader::to_double("audit.multipliers", m.substr(8));
                continue;
            }
            throw ConfigError("audit.multipliers", "unknown multiplier '" + m + "'");
        }
    } else if (c.boundary == evolve::BoundaryMode::CausalDomain &&
               c.grid.half_width < c.tau_final + c.params.R + 2.0) {
        throw ConfigError("grid.half_width", "causal-domain mode needs half_width >= tau_final + R + 2");
    }
}

std::string echo(const RunConfig& c) {
    std::ostringstream os;
    os << "[run]\n"
       << "mode = " << to_string(c.mode) << "\n"
       << "tau_final = " << num(c.tau_final) << "\n"
       << "leaf_spacing = " << num(c.leaf_spacing) << "\n"
       << "boundary = " << evolve::to_string(c.boundary) << "\n"
       << "courant = " << num(c.courant) << "\n"
       << "fd_order = " << c.fd_order << "\n"
       << "checkpoint_every = " << c.checkpoint_every << "\n"
       << "output_dir = " << c.output_dir << "\n"
       << "seed = " << c.seed << "\n"
       << "threads = " << c.threads << "\n\n";
    os << "[params]\n"
       << "delta0 = " << num(c.params.delta0) << "\n"
       << "alpha = " << num(c.params.alpha) << "\n"
       << "epsilon = " << num(c.params.epsilon) << "\n"
       << "alpha1 = " << num(c.params.alpha1) << "\n"
       << "alpha2 = " << num(c.params.alpha2) << "\n"
       << "R = " << num(c.params.R) << "\n\n";
    os << "[grid]\n"
       << "half_width = " << num(c.grid.half_width) << "\n"
       << "n = " << c.grid.n << "\n\n";
    write_data(os, "data", c.data);
    write_data(os, "background", c.background);
    os << "[metric]\n"
       << "family = " << c.metric.name() << "\n"
       << "delta0 = " << num(c.metric.delta0) << "\n"
       << "alpha = " << num(c.metric.alpha) << "\n"
       << "support = " << num(c.metric.support) << "\n\n";
    os << "[nonlinear]\n"
       << "nullform = " << c.nonlinear.nullform << "\n"
       << "scale = " << num(c.nonlinear.scale) << "\n"
       << "margin_fraction = " << num(c.nonlinear.margin_fraction) << "\n"
       << "semilinear = " << b(c.nonlinear.semilinear) << "\n"
       << "interior_coefficient = " << num(c.nonlinear.interior_coefficient) << "\n"
       << "interior_radius = " << num(c.nonlinear.interior_radius) << "\n\n";
    os << "[diagnostics]\n"
       << "k_max = " << c.diagnostics.k_max << "\n"
       << "envelopes = " << b(c.diagnostics.envelopes) << "\n"
       << "probe = " << b(c.diagnostics.probe) << "\n"
       << "sphere_degree = " << c.diagnostics.sphere_degree << "\n"
       << "subcells = " << c.diagnostics.subcells << "\n"
       << "envelope_radial = " << c.diagnostics.envelope_radial << "\n"
       << "ball_radial = " << c.diagnostics.ball_radial << "\n\n";
    os << "[fit]\n"
       << "quantities = " << join(c.fit.quantities) << "\n"
       << "tau_min = " << num(c.fit.tau_min) << "\n"
       << "tau_max = " << num(c.fit.tau_max) << "\n\n";
    os << "[pigeonhole]\n"
       << "beta = " << num(c.pigeonhole_beta) << "\n"
       << "constant = " << num(c.pigeonhole_constant) << "\n\n";
    os << "[verdict]\n"
       << "lemma_bound = " << num(c.verdict.lemma_bound) << "\n"
       << "envelope_bound = " << num(c.verdict.envelope_bound) << "\n"
       << "envelope_from = " << num(c.verdict.envelope_from) << "\n"
       << "max_exponent = " << num(c.verdict.max_exponent) << "\n"
       << "monotone_from = " << num(c.verdict.monotone_from) << "\n"
       << "monotone_rtol = " << num(c.verdict.monotone_rtol) << "\n"
       << "require_pigeonhole = " << b(c.verdict.require_pigeonhole) << "\n\n";
    os << "[audit]\n"
       << "multipliers = " << join(c.audit.multipliers) << "\n"
       << "region = " << c.audit.region << "\n"
       << "tau1 = " << num(c.audit.tau1) << "\n"
       << "tau2 = " << num(c.audit.tau2) << "\n"
       << "levels = " << join(c.audit.levels) << "\n\n";
    os << "[convergence]\n"
       << "dx = " << join(c.convergence.dx) << "\n"
       << "t_check = " << num(c.convergence.t_check) << "\n";
    return os.str();
}

}  // namespace qw::config
