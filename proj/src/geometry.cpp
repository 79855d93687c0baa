#include "qwave/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

namespace qw::geometry {

namespace {

void check(std::vector<ParamViolation>& out, bool ok, const char* name, double lhs, double rhs) {
    if (!ok) out.push_back({name, lhs, rhs});
}

}  // namespace

std::vector<ParamViolation> validate_params(const DecayParams& p) {
    std::vector<ParamViolation> out;
    for (double v : {p.delta0, p.alpha, p.epsilon, p.alpha1, p.alpha2, p.R}) {
        if (!std::isfinite(v)) {
            out.push_back({"all fields finite", v, 0.0});
            return out;
        }
    }
    const double a = p.alpha, e = p.epsilon;
    const double quarter_sq = a * a / 4.0;
    const double lower1 = (2.0 * a + a * e) / (2.0 - a);
    const double upper2 = 7.0 / 3.0 * a - p.alpha1 - e;
    check(out, p.delta0 >= 0.0, "delta0 >= 0", p.delta0, 0.0);
    check(out, a > 0.0, "alpha > 0", a, 0.0);
    check(out, a <= 0.1, "alpha < 1/10", a, 0.1);
    check(out, e > 0.0, "epsilon > 0", e, 0.0);
    check(out, e < quarter_sq, "epsilon < alpha^2/4", e, quarter_sq);
    check(out, quarter_sq < a, "alpha^2/4 < alpha", quarter_sq, a);
    check(out, a < lower1, "alpha < (2 alpha + alpha epsilon)/(2 - alpha)", a, lower1);
    check(out, lower1 <= p.alpha1, "(2 alpha + alpha epsilon)/(2 - alpha) <= alpha1", lower1, p.alpha1);
    check(out, p.alpha1 < p.alpha2, "alpha1 < alpha2", p.alpha1, p.alpha2);
    check(out, p.alpha2 <= upper2, "alpha2 <= (7/3) alpha - alpha1 - epsilon", p.alpha2, upper2);
    check(out, p.R > 4.0, "R > 4", p.R, 4.0);
    return out;
}

Mat4 minkowski() {
    Mat4 m = Mat4::Identity();
    m(0, 0) = -1.0;
    return m;
}

std::string to_string(MetricFamily f) {
    switch (f) {
        case MetricFamily::Flat: return "flat";
        case MetricFamily::InteriorOscillator: return "interior-oscillator";
        case MetricFamily::Static: return "static";
        case MetricFamily::ConstantHtt: return "constant-htt";
    }
    return "flat";
}

MetricFamily metric_family_from_string(const std::string& name) {
    if (name == "flat") return MetricFamily::Flat;
    if (name == "interior-oscillator") return MetricFamily::InteriorOscillator;
    if (name == "static") return MetricFamily::Static;
    if (name == "constant-htt") return MetricFamily::ConstantHtt;
    throw std::invalid_argument("unknown metric family '" + name + "'");
}

RadialProfile compact_profile(double r, double alpha, double support, double amplitude) {
    RadialProfile out;
    const double s = r / support;
    if (s >= 1.0) return out;
    // Smooth even decay <r>^{-1-2 alpha} times the bump exp(1 - 1/(1 - s^2)).
    const double k = 1.0 + 2.0 * alpha;
    const double br = std::sqrt(1.0 + r * r);
    const double p = std::pow(br, -k);
    const double dp = -k * r * std::pow(br, -k - 2.0);
    const double d2p = -k * (std::pow(br, -k - 2.0) - (k + 2.0) * r * r * std::pow(br, -k - 4.0));
    const double q = 1.0 - s * s;
    const double b = std::exp(1.0 - 1.0 / q);
    const double db = b * (-2.0 * s / (q * q)) / support;
    const double d2b = b * (4.0 * s * s / (q * q * q * q) - 2.0 / (q * q) - 8.0 * s * s / (q * q * q)) /
                       (support * support);
    out.w = amplitude * p * b;
    out.dw = amplitude * (dp * b + p * db);
    out.d2w = amplitude * (d2p * b + 2.0 * dp * db + p * d2b);
    return out;
}

namespace {

// w'(r)/r, finite at the origin.
double profile_dw_over_r(double r, double alpha, double support, double amplitude) {
    const double s = r / support;
    if (s >= 1.0) return 0.0;
    const double k = 1.0 + 2.0 * alpha;
    const double br = std::sqrt(1.0 + r * r);
    const double p = std::pow(br, -k);
    const double q = 1.0 - s * s;
    const double b = std::exp(1.0 - 1.0 / q);
    const double dp_r = -k * std::pow(br, -k - 2.0);
    const double db_r = b * (-2.0 / (q * q)) / (support * support);
    return amplitude * (dp_r * b + p * db_r);
}

}  // namespace

MetricSpec MetricSpec::flat() { return MetricSpec{}; }

MetricSpec MetricSpec::interior_oscillator(double delta0, double alpha, double support) {
    MetricSpec m;
    m.family = MetricFamily::InteriorOscillator;
    m.delta0 = delta0;
    m.alpha = alpha;
    m.support = support;
    m.shape.setZero();
    m.shape(0, 0) = 1.0;
    m.shape(1, 1) = m.shape(2, 2) = m.shape(3, 3) = 1.0;
    m.shape(0, 1) = m.shape(1, 0) = 0.5;
    m.shape(2, 3) = m.shape(3, 2) = 0.5;
    return m;
}

MetricSpec MetricSpec::static_bump(double delta0, double alpha, double support) {
    MetricSpec m;
    m.family = MetricFamily::Static;
    m.delta0 = delta0;
    m.alpha = alpha;
    m.support = support;
    m.shape = minkowski();
    return m;
}

MetricSpec MetricSpec::constant_htt(double delta0) {
    MetricSpec m;
    m.family = MetricFamily::ConstantHtt;
    m.delta0 = delta0;
    m.shape.setZero();
    m.shape(0, 0) = 1.0;
    return m;
}

double MetricSpec::support_radius() const {
    switch (family) {
        case MetricFamily::Flat: return -1.0;
        case MetricFamily::InteriorOscillator:
        case MetricFamily::Static: return support;
        case MetricFamily::ConstantHtt: return std::numeric_limits<double>::infinity();
    }
    return -1.0;
}

bool MetricSpec::has_spatial_offdiagonal() const {
    if (is_flat()) return false;
    return shape(1, 2) != 0.0 || shape(1, 3) != 0.0 || shape(2, 3) != 0.0;
}

bool MetricSpec::radial_factors(double r, double& w, double& dw_over_r) const {
    w = dw_over_r = 0.0;
    if (family != MetricFamily::InteriorOscillator && family != MetricFamily::Static) return false;
    if (r >= support) return false;
    w = compact_profile(r, alpha, support, amplitude).w;
    dw_over_r = profile_dw_over_r(r, alpha, support, amplitude);
    return true;
}

MetricSample MetricSpec::eval_cached(double t, const Vec3& x, double w, double dw_over_r) const {
    MetricSample s;
    const bool osc = family == MetricFamily::InteriorOscillator;
    const double time = osc ? std::sin(t) : 1.0;
    const double dtime = osc ? std::cos(t) : 0.0;
    s.h = delta0 * time * w * shape;
    s.dh[0] = delta0 * dtime * w * shape;
    for (int i = 0; i < 3; ++i) s.dh[i + 1] = delta0 * time * dw_over_r * x[i] * shape;
    return s;
}

MetricSample MetricSpec::eval(double t, const Vec3& x) const {
    if (is_flat()) return {};
    if (family == MetricFamily::ConstantHtt) {
        MetricSample s;
        s.h = delta0 * shape;
        return s;
    }
    double w, dw_r;
    if (!radial_factors(x.norm(), w, dw_r)) return {};
    return eval_cached(t, x, w, dw_r);
}

Mat4 lower(const Mat4& ginv) {
    Mat4 g;
    bool ok = false;
    double det = 0.0;
    ginv.computeInverseAndDetWithCheck(g, det, ok, 1e-300);
    if (!ok || !std::isfinite(det)) throw std::runtime_error("metric inversion failed: singular inverse metric");
    return g;
}

Vec4 box_first_order(const Mat4& ginv, const MetricSample& s) {
    const Mat4 g = lower(ginv);
    Vec4 N = Vec4::Zero();
    for (int mu = 0; mu < 4; ++mu) {
        const double trace = (g.cwiseProduct(s.dh[mu])).sum();
        for (int nu = 0; nu < 4; ++nu) N[nu] += s.dh[mu](mu, nu) - 0.5 * ginv(mu, nu) * trace;
    }
    return N;
}

NullFrame null_frame_at(const SpacetimePoint& pt, double r_floor) {
    const double r = pt.r();
    if (!(r >= r_floor)) throw DegeneratePointError("null frame undefined: r below floor");
    NullFrame fr;
    fr.r = r;
    fr.omega = pt.x / r;
    const Vec3& w = fr.omega;
    fr.L << 1.0, w[0], w[1], w[2];
    fr.Lbar << 1.0, -w[0], -w[1], -w[2];
    fr.L_cov = fr.L;
    fr.Lbar_cov = fr.Lbar;
    // Project the coordinate axis least aligned with omega, then complete by Gram-Schmidt.
    int order[3] = {0, 1, 2};
    std::stable_sort(order, order + 3, [&](int a, int b) { return std::abs(w[a]) < std::abs(w[b]); });
    Vec3 e1 = Vec3::Unit(order[0]);
    Vec3 e2 = Vec3::Unit(order[1]);
    Vec3 s1 = e1 - e1.dot(w) * w;
    s1.normalize();
    Vec3 s2 = e2 - e2.dot(w) * w - e2.dot(s1) * s1;
    s2.normalize();
    fr.S1 << 0.0, s1[0], s1[1], s1[2];
    fr.S2 << 0.0, s2[0], s2[1], s2[2];
    return fr;
}

NullFrame rotate_tangent(const NullFrame& fr, double theta) {
    NullFrame out = fr;
    const double c = std::cos(theta), s = std::sin(theta);
    out.S1 = c * fr.S1 + s * fr.S2;
    out.S2 = -s * fr.S1 + c * fr.S2;
    return out;
}

Vec4 frame_covector(const NullFrame& fr, FrameSlot a) {
    switch (a) {
        case FrameSlot::Lbar: return 0.5 * fr.Lbar_cov;
        case FrameSlot::L: return 0.5 * fr.L_cov;
        case FrameSlot::S1: return fr.S1;
        case FrameSlot::S2: return fr.S2;
    }
    return Vec4::Zero();
}

double frame_component(const Mat4& k, const NullFrame& fr, FrameSlot a, FrameSlot b) {
    return frame_covector(fr, a).dot(k * frame_covector(fr, b));
}

void NullFormTensor::set_sym(int mu, int nu, int gamma, double value) {
    at(mu, nu, gamma) = value;
    at(nu, mu, gamma) = value;
}

double NullFormTensor::max_coefficient() const {
    double m = A.cwiseAbs().maxCoeff();
    for (double v : g) m = std::max(m, std::abs(v));
    return m;
}

bool NullFormTensor::is_zero() const { return max_coefficient() == 0.0; }

NullFormTensor NullFormTensor::zero() { return NullFormTensor{}; }

NullFormTensor NullFormTensor::wave_times_dt() {
    NullFormTensor nf;
    nf.at(0, 0, 0) = 1.0;
    for (int i = 1; i < 4; ++i) nf.at(i, i, 0) = -1.0;
    return nf;
}

NullFormTensor NullFormTensor::ttt_only() {
    NullFormTensor nf;
    nf.at(0, 0, 0) = 1.0;
    return nf;
}

NullFormTensor NullFormTensor::from_preset(const std::string& name) {
    if (name == "zero" || name == "none") return zero();
    if (name == "wave-dt") return wave_times_dt();
    if (name == "ttt-only") return ttt_only();
    if (name == "q0i") {
        // Sum over i of the null form d_t phi d_i(d_i phi) - d_i phi d_t(d_i phi).
        NullFormTensor nf;
        for (int i = 1; i < 4; ++i) {
            nf.at(i, i, 0) += 1.0;
            nf.set_sym(0, i, i, -0.5);
        }
        return nf;
    }
    throw std::invalid_argument("unknown null-form preset '" + name + "'");
}

std::vector<Vec3> fibonacci_directions(int n, unsigned long long seed) {
    std::vector<Vec3> dirs;
    dirs.reserve(static_cast<std::size_t>(std::max(n, 0)));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    Mat3 rot = Mat3::Identity();
    if (seed != 0) {
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::Quaterniond q(normal(gen), normal(gen), normal(gen), normal(gen));
        q.normalize();
        rot = q.toRotationMatrix();
    }
    for (int k = 0; k < n; ++k) {
        const double z = 1.0 - (2.0 * k + 1.0) / n;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double ph = golden * k;
        dirs.push_back(rot * Vec3(rho * std::cos(ph), rho * std::sin(ph), z));
    }
    return dirs;
}

NullCheckReport check_null_condition(const NullFormTensor& nf, int n_samples, double tol, unsigned long long seed) {
    if (n_samples < 1) throw std::invalid_argument("check_null_condition needs n_samples >= 1");
    std::vector<Vec3> dirs = fibonacci_directions(n_samples, seed);
    for (int i = 0; i < 3; ++i) {
        dirs.push_back(Vec3::Unit(i));
        dirs.push_back(-Vec3::Unit(i));
    }
    NullCheckReport rep;
    rep.max_coefficient = nf.max_coefficient();
    rep.n_directions = static_cast<int>(dirs.size());
    for (const Vec3& w : dirs) {
        const Vec4 xi(1.0, w[0], w[1], w[2]);
        double cubic = 0.0;
        for (int mu = 0; mu < 4; ++mu)
            for (int nu = 0; nu < 4; ++nu)
                for (int ga = 0; ga < 4; ++ga) cubic += nf.at(mu, nu, ga) * xi[mu] * xi[nu] * xi[ga];
        const double quad = xi.dot(nf.A * xi);
        const double res = std::max(std::abs(cubic), std::abs(quad));
        if (res > rep.worst_residual || rep.worst_xi.isZero()) {
            rep.worst_residual = std::max(res, rep.worst_residual);
            rep.worst_xi = xi;
        }
    }
    rep.pass = rep.worst_residual <= tol * (1.0 + rep.max_coefficient);
    return rep;
}

double EnvelopeH::Hbar(double r) const { return delta0 * std::pow(1.0 + r, -1.0 - 2.0 * alpha); }

double EnvelopeH::H_tau_part(double tau, double r) const {
    return delta0 * std::pow(1.0 + r, -0.5 - 2.0 * alpha) * std::pow(1.0 + tau, -0.5 - 0.5 * alpha);
}

double EnvelopeH::H(double tau, double r) const { return Hbar(r) + H_tau_part(tau, r); }

double EnvelopeH::angular_improved(double tau, double r) const {
    return delta0 * (std::pow(1.0 + r, -1.5 - 2.0 * alpha) +
                     std::pow(1.0 + r, -1.0 - alpha) * std::pow(1.0 + tau, -0.5 - 0.5 * alpha));
}

bool EnvelopeReport::pass() const {
    for (const auto& e : entries)
        if (!(e.max_ratio <= 1.0)) return false;
    return true;
}

std::string EnvelopeReport::to_json() const {
    nlohmann::json j;
    j["k_max"] = k_max;
    j["pass"] = pass();
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries) {
        j["entries"].push_back({{"name", e.name},
                                {"max_ratio", e.max_ratio},
                                {"argmax_point",
                                 {{"t", e.argmax.t}, {"x", {e.argmax.x[0], e.argmax.x[1], e.argmax.x[2]}}}}});
    }
    return j.dump(2);
}

namespace {

// Scalar function of spacetime with an exact gradient (d_t, d_x, d_y, d_z).
using GradFn = std::function<Vec4(double, const Vec3&)>;
using ScalarFn = std::function<double(double, const Vec3&)>;

// Generators of Z: 0 = d_t, 1 = Omega_12, 2 = Omega_13, 3 = Omega_23.
double apply_generator(int gen, const Vec4& grad, const Vec3& x) {
    switch (gen) {
        case 0: return grad[0];
        case 1: return x[0] * grad[2] - x[1] * grad[1];
        case 2: return x[0] * grad[3] - x[2] * grad[1];
        case 3: return x[1] * grad[3] - x[2] * grad[2];
    }
    return 0.0;
}

Vec4 fd_gradient(const ScalarFn& f, double t, const Vec3& x) {
    const double step = 1e-5 * (1.0 + x.norm());
    Vec4 g;
    g[0] = (f(t + step, x) - f(t - step, x)) / (2.0 * step);
    for (int i = 0; i < 3; ++i) {
        Vec3 xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        g[i + 1] = (f(t, xp) - f(t, xm)) / (2.0 * step);
    }
    return g;
}

// Largest |Z^w f| over words of length 1..k_max (k_max <= 2).
double max_z_word(const GradFn& grad, double t, const Vec3& x, int k_max) {
    double m = 0.0;
    if (k_max < 1) return m;
    const Vec4 g = grad(t, x);
    for (int a = 0; a < 4; ++a) m = std::max(m, std::abs(apply_generator(a, g, x)));
    if (k_max < 2) return m;
    for (int b = 0; b < 4; ++b) {
        ScalarFn inner = [&grad, b](double tt, const Vec3& xx) { return apply_generator(b, grad(tt, xx), xx); };
        const Vec4 gi = fd_gradient(inner, t, x);
        for (int a = 0; a < 4; ++a) m = std::max(m, std::abs(apply_generator(a, gi, x)));
    }
    return m;
}

struct Tracker {
    EnvelopeEntry entry;
    void offer(double ratio, double t, const Vec3& x) {
        if (ratio > entry.max_ratio) {
            entry.max_ratio = ratio;
            entry.argmax.t = t;
            entry.argmax.x = x;
        }
    }
};

}  // namespace

EnvelopeReport validate_envelope(const MetricSpec& spec, const DecayParams& p, const EnvelopePlan& plan) {
    EnvelopeReport rep;
    rep.k_max = plan.k_max;
    const EnvelopeH env{p.delta0, p.alpha};
    const int n_dir = std::max(6, (plan.sphere_degree + 1) * (plan.sphere_degree + 1));
    const std::vector<Vec3> dirs = fibonacci_directions(n_dir);

    Tracker interior{{"interior |h| + |dh| <= delta0 r+^{-1-2alpha}", 0.0, {}}};
    Tracker cone_h{{"cone |dh| + |h| + |Z^k h| <= delta0 H", 0.0, {}}};
    Tracker cone_good{{"cone |good_v h| + |d h^LbLb| + |Z^k h^LbLb| <= delta0 r+^{-1-2alpha}", 0.0, {}}};
    Tracker angular{{"cone |angular h^LbLb| <= improved envelope", 0.0, {}}};

    // Interior samples.
    for (double t : plan.times) {
        for (int ir = 0; ir < plan.n_radial; ++ir) {
            const double r = p.R * (ir + 0.5) / plan.n_radial;
            for (const Vec3& w : dirs) {
                const Vec3 x = r * w;
                const MetricSample s = spec.eval(t, x);
                const double bound = p.delta0 * std::pow(1.0 + r, -1.0 - 2.0 * p.alpha);
                for (int mu = 0; mu < 4; ++mu)
                    for (int nu = mu; nu < 4; ++nu) {
                        double d2 = 0.0;
                        for (int ga = 0; ga < 4; ++ga) d2 += s.dh[ga](mu, nu) * s.dh[ga](mu, nu);
                        const double lhs = std::abs(s.h(mu, nu)) + std::sqrt(d2);
                        interior.offer(bound > 0.0 ? lhs / bound : (lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0), t, x);
                    }
            }
        }
    }

    // Cone samples: S_tau with t - r = tau - R.
    for (double tau : plan.times) {
        for (int ir = 0; ir < plan.n_radial; ++ir) {
            const double r = p.R + plan.cone_extent * ir / std::max(1, plan.n_radial - 1);
            const double t = tau + (r - p.R);
            for (const Vec3& w : dirs) {
                const Vec3 x = r * w;
                const MetricSample s = spec.eval(t, x);
                const NullFrame fr = null_frame_at({t, x});
                const double hbar_env = env.Hbar(r);
                const double h_env = env.H(tau, r);
                double good_max = 0.0;

                for (int mu = 0; mu < 4; ++mu)
                    for (int nu = mu; nu < 4; ++nu) {
                        GradFn grad = [&spec, mu, nu](double tt, const Vec3& xx) {
                            const MetricSample q = spec.eval(tt, xx);
                            return Vec4(q.dh[0](mu, nu), q.dh[1](mu, nu), q.dh[2](mu, nu), q.dh[3](mu, nu));
                        };
                        const Vec4 g = grad(t, x);
                        const double dnorm = g.norm();
                        const double hval = std::abs(s.h(mu, nu));
                        const double zmax = max_z_word(grad, t, x, plan.k_max);
                        const double lhs = dnorm + hval + std::max(hval, zmax);
                        cone_h.offer(h_env > 0.0 ? lhs / h_env : 0.0, t, x);

                        // Good derivatives (L, angular) of the component.
                        const Vec3 grad_x(g[1], g[2], g[3]);
                        const double Lh = g[0] + fr.omega.dot(grad_x);
                        const Vec3 ang = grad_x - fr.omega.dot(grad_x) * fr.omega;
                        good_max = std::max(good_max, std::sqrt(Lh * Lh + ang.squaredNorm()));
                    }

                // h^{Lbar Lbar} as a scalar function.
                ScalarFn hll = [&spec](double tt, const Vec3& xx) {
                    const NullFrame f = null_frame_at({tt, xx});
                    return frame_component(spec.eval(tt, xx).h, f, FrameSlot::Lbar, FrameSlot::Lbar);
                };
                GradFn hll_grad = [&spec](double tt, const Vec3& xx) {
                    const MetricSample q = spec.eval(tt, xx);
                    const double rr = xx.norm();
                    const Vec3 om = xx / rr;
                    const Vec4 lb(1.0, -om[0], -om[1], -om[2]);
                    Vec4 out;
                    out[0] = 0.25 * lb.dot(q.dh[0] * lb);
                    for (int j = 0; j < 3; ++j) {
                        Vec4 dlb = Vec4::Zero();
                        for (int k = 0; k < 3; ++k) dlb[k + 1] = -((j == k ? 1.0 : 0.0) - om[j] * om[k]) / rr;
                        out[j + 1] = 0.25 * lb.dot(q.dh[j + 1] * lb) + 0.5 * dlb.dot(q.h * lb);
                    }
                    return out;
                };
                const Vec4 gl = hll_grad(t, x);
                const double zl = max_z_word(hll_grad, t, x, plan.k_max);
                const double hll_val = std::abs(hll(t, x));
                const double lbl = gl.norm() + std::max(hll_val, zl);
                cone_good.offer(hbar_env > 0.0 ? (good_max + lbl) / hbar_env : 0.0, t, x);

                const Vec3 gx(gl[1], gl[2], gl[3]);
                const Vec3 ang = gx - fr.omega.dot(gx) * fr.omega;
                const double ang_env = env.angular_improved(tau, r);
                angular.offer(ang_env > 0.0 ? ang.norm() / ang_env : 0.0, t, x);
            }
        }
    }
    rep.entries = {interior.entry, cone_h.entry, cone_good.entry, angular.entry};
    return rep;
}

}  // namespace qw::geometry
