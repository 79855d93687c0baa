#include "qwave/multipliers.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qw::multipliers {

using foliation::Jet;
using geometry::MetricSample;

Mat4 stress_energy(const Vec4& dphi, const Mat4& ginv, const Mat4& g_lower) {
    const double q = dphi.dot(ginv * dphi);
    return dphi * dphi.transpose() - 0.5 * q * g_lower;
}

Mat4 stress_energy(const Vec4& dphi, const Mat4& ginv) { return stress_energy(dphi, ginv, geometry::lower(ginv)); }

MorawetzValues morawetz_multiplier(double alpha, double r) {
    if (r < 0.0) throw std::invalid_argument("morawetz multiplier needs r >= 0");
    MorawetzValues m;
    const double a = 1.0 + r;
    m.f = -2.0 / alpha * std::expm1(-alpha * std::log1p(r));
    m.fp = 2.0 * std::pow(a, -1.0 - alpha);
    m.fpp = -2.0 * (1.0 + alpha) * std::pow(a, -2.0 - alpha);
    if (r < 0.1) {
        // chi = -(2/alpha) sum_{k>=1} c_k r^{k-1}, (1+r)^{-alpha} = sum c_k r^k.
        double c = 1.0;
        double chi = 0.0, chip = 0.0, chipp = 0.0;
        for (int k = 1; k <= 24; ++k) {
            c *= (-alpha - k + 1.0) / k;
            const double s = -2.0 / alpha * c;
            const int e = k - 1;
            chi += s * std::pow(r, e);
            if (e >= 1) chip += s * e * std::pow(r, e - 1);
            if (e >= 2) chipp += s * e * (e - 1) * std::pow(r, e - 2);
        }
        m.chi = r > 0.0 ? m.f / r : chi;
        m.chip = chip;
        m.chipp = chipp;
    } else {
        m.chi = m.f / r;
        m.chip = (m.fp * r - m.f) / (r * r);
        m.chipp = (m.fpp * r * r - 2.0 * m.fp * r + 2.0 * m.f) / (r * r * r);
    }
    m.identity = (r > 0.0 ? m.chi - m.f / r : 0.0) + 0.5 * m.fp;
    return m;
}

Vec4 pweight_vector(double p, const Vec3& x, const Mat4& ginv) {
    const double r = x.norm();
    if (!(r > 0.0)) throw RadiusError("p-weighted multiplier undefined at r = 0");
    const Vec3 w = x / r;
    const Vec4 lbar(1.0, -w[0], -w[1], -w[2]);  // same components as covector and vector
    const double gll = 0.25 * lbar.dot(ginv * lbar);
    return std::pow(r, p) * (-(ginv * lbar) + gll * lbar);
}

Vec4 pweight_vector(double p, const geometry::SpacetimePoint& pt, const geometry::MetricSpec& metric, double R) {
    if (pt.r() < R) throw RadiusError("p-weighted multiplier requires r >= R");
    return pweight_vector(p, pt.x, geometry::minkowski() + metric.h(pt.t, pt.x));
}

MultiplierSpec MultiplierSpec::dt() { return MultiplierSpec{}; }

MultiplierSpec MultiplierSpec::rotation(int a, int b) {
    if (a < 1 || a > 3 || b < 1 || b > 3 || a == b) throw std::invalid_argument("rotation indices must be distinct in 1..3");
    MultiplierSpec m;
    m.kind = MultiplierKind::Rotation;
    m.rot_a = a;
    m.rot_b = b;
    return m;
}

MultiplierSpec MultiplierSpec::morawetz(double alpha) {
    MultiplierSpec m;
    m.kind = MultiplierKind::Morawetz;
    m.alpha = alpha;
    return m;
}

MultiplierSpec MultiplierSpec::pweight(double p, const geometry::MetricSpec& metric, double R) {
    MultiplierSpec m;
    m.kind = MultiplierKind::PWeight;
    m.p = p;
    m.metric = metric;
    m.R = R;
    return m;
}

MultiplierSpec MultiplierSpec::custom(std::function<Vec4(double, const Vec3&)> X,
                                      std::function<double(double, const Vec3&)> chi) {
    MultiplierSpec m;
    m.kind = MultiplierKind::Custom;
    m.custom_X = std::move(X);
    m.custom_chi = std::move(chi);
    return m;
}

std::string MultiplierSpec::name() const {
    std::ostringstream os;
    switch (kind) {
        case MultiplierKind::Dt: return "dt";
        case MultiplierKind::Rotation: os << "rotation(" << rot_a << rot_b << ")"; return os.str();
        case MultiplierKind::Morawetz: os << "morawetz(" << alpha << ")"; return os.str();
        case MultiplierKind::PWeight: os << "pweight(" << p << ")"; return os.str();
        case MultiplierKind::Custom: return "custom";
    }
    return "custom";
}

bool MultiplierSpec::exact_derivatives() const {
    if (kind == MultiplierKind::Custom) return false;
    if (kind == MultiplierKind::PWeight) return metric.is_flat();
    return true;
}

Vec4 MultiplierSpec::vector(double t, const Vec3& x) const {
    switch (kind) {
        case MultiplierKind::Dt: return Vec4(1.0, 0.0, 0.0, 0.0);
        case MultiplierKind::Rotation: {
            Vec4 X = Vec4::Zero();
            X[rot_b] = x[rot_a - 1];
            X[rot_a] = -x[rot_b - 1];
            return X;
        }
        case MultiplierKind::Morawetz: {
            const double r = x.norm();
            if (r == 0.0) return Vec4::Zero();
            const double f = morawetz_multiplier(alpha, r).f;
            return Vec4(0.0, f * x[0] / r, f * x[1] / r, f * x[2] / r);
        }
        case MultiplierKind::PWeight: return pweight_vector(p, geometry::SpacetimePoint{t, x}, metric, R);
        case MultiplierKind::Custom: return custom_X ? custom_X(t, x) : Vec4::Zero();
    }
    return Vec4::Zero();
}

namespace {

Vec4 shifted(double t, const Vec3& x, int mu, double h, Vec3& xs) {
    xs = x;
    Vec4 ts(t, 0.0, 0.0, 0.0);
    if (mu == 0)
        ts[0] = t + h;
    else
        xs[mu - 1] += h;
    return ts;
}

// Central differences of a vector field: dX(mu, gamma).
Mat4 fd_jacobian(const std::function<Vec4(double, const Vec3&)>& F, double t, const Vec3& x, double h) {
    Mat4 dX;
    for (int mu = 0; mu < 4; ++mu) {
        Vec3 xp, xm;
        const double tp = shifted(t, x, mu, h, xp)[0];
        const double tm = shifted(t, x, mu, -h, xm)[0];
        dX.row(mu) = ((F(tp, xp) - F(tm, xm)) / (2.0 * h)).transpose();
    }
    return dX;
}

Mat3 radial_hessian(const Vec3& w, double d1_over_r, double d2) {
    return (d2 - d1_over_r) * w * w.transpose() + d1_over_r * Mat3::Identity();
}

}  // namespace

VectorJet MultiplierSpec::vector_jet(double t, const Vec3& x) const {
    VectorJet j;
    j.X = vector(t, x);
    const double r = x.norm();
    switch (kind) {
        case MultiplierKind::Dt: return j;
        case MultiplierKind::Rotation:
            j.dX(rot_a, rot_b) = 1.0;
            j.dX(rot_b, rot_a) = -1.0;
            return j;
        case MultiplierKind::Morawetz: {
            const MorawetzValues m = morawetz_multiplier(alpha, std::max(r, 1e-12));
            const Vec3 w = r > 0.0 ? Vec3(x / r) : Vec3::Zero();
            j.dX.block<3, 3>(1, 1) = radial_hessian(w, m.chi, m.fp);
            return j;
        }
        case MultiplierKind::PWeight:
            if (metric.is_flat()) {
                const Vec3 w = x / r;
                const double rp1 = std::pow(r, p - 1.0);
                for (int a = 0; a < 3; ++a) j.dX(a + 1, 0) = p * rp1 * w[a];
                j.dX.block<3, 3>(1, 1) = radial_hessian(w, rp1, p * rp1);
                return j;
            }
            break;
        case MultiplierKind::Custom: break;
    }
    const double h = fd_step * (1.0 + r);
    j.dX = fd_jacobian([this](double tt, const Vec3& xx) { return vector(tt, xx); }, t, x, h);
    return j;
}

ScalarJet MultiplierSpec::chi(double t, const Vec3& x) const {
    ScalarJet c;
    if (kind == MultiplierKind::Morawetz) {
        const double r = std::max(x.norm(), 1e-8);
        const MorawetzValues m = morawetz_multiplier(alpha, r);
        const Vec3 w = x.norm() > 0.0 ? Vec3(x / r) : Vec3::Zero();
        c.value = m.chi;
        c.d.tail<3>() = m.chip * w;
        c.dd.block<3, 3>(1, 1) = radial_hessian(w, m.chip / r, m.chipp);
        return c;
    }
    if (kind != MultiplierKind::Custom || !custom_chi) return c;
    const double h = fd_step * (1.0 + x.norm()) * 10.0;
    auto F = [&](const Vec4& e) { return custom_chi(t + e[0], x + e.tail<3>()); };
    c.value = custom_chi(t, x);
    for (int mu = 0; mu < 4; ++mu) {
        const Vec4 e = h * Vec4::Unit(mu);
        c.d[mu] = (F(e) - F(-e)) / (2.0 * h);
        c.dd(mu, mu) = (F(e) - 2.0 * c.value + F(-e)) / (h * h);
        for (int nu = 0; nu < mu; ++nu) {
            const Vec4 f = h * Vec4::Unit(nu);
            c.dd(mu, nu) = c.dd(nu, mu) = (F(e + f) - F(e - f) - F(f - e) + F(-e - f)) / (4.0 * h * h);
        }
    }
    return c;
}

namespace {

Mat4 deformation_from(const VectorJet& vj, const MetricSample& ms, const Mat4& glow) {
    Mat4 pi = Mat4::Zero();
    for (int g = 0; g < 4; ++g)
        if (vj.X[g] != 0.0) pi -= vj.X[g] * (glow * ms.dh[g] * glow);
    const Mat4 dXg = vj.dX * glow;
    pi += dXg + dXg.transpose();
    return 0.5 * pi;
}

CurrentBundle current_core(const MultiplierSpec& X, const geometry::MetricSpec& metric, double t, const Vec3& x,
                           double phi, const Vec4& dphi, double box_phi, bool density) {
    CurrentBundle b;
    const MetricSample ms = metric.eval(t, x);
    const Mat4 ginv = geometry::minkowski() + ms.h;
    const Mat4 glow = geometry::lower(ginv);
    b.T = stress_energy(dphi, ginv, glow);
    const VectorJet vj = X.vector_jet(t, x);
    const ScalarJet cj = X.chi(t, x);
    b.J_lower = b.T * vj.X - 0.5 * phi * phi * cj.d + cj.value * phi * dphi;
    b.J = ginv * b.J_lower;
    b.sqrt_minus_G = std::sqrt(-glow.determinant());
    if (!density) return b;
    const Mat4 pi = deformation_from(vj, ms, glow);
    b.K = ((ginv * b.T * ginv).cwiseProduct(pi)).sum();
    const Vec4 N = geometry::box_first_order(ginv, ms);
    const double box_chi = ginv.cwiseProduct(cj.dd).sum() + N.dot(cj.d);
    b.density = box_phi * (vj.X.dot(dphi) + cj.value * phi) + b.K + cj.value * dphi.dot(ginv * dphi) -
                0.5 * box_chi * phi * phi;
    return b;
}

}  // namespace

Mat4 deformation(const MultiplierSpec& X, const geometry::MetricSpec& metric, double t, const Vec3& x) {
    const MetricSample ms = metric.eval(t, x);
    const Mat4 glow = geometry::lower(geometry::minkowski() + ms.h);
    return deformation_from(X.vector_jet(t, x), ms, glow);
}

CurrentBundle currents(const MultiplierSpec& X, const geometry::MetricSpec& metric, double t, const Vec3& x,
                       double phi, const Vec4& dphi, double box_phi) {
    return current_core(X, metric, t, x, phi, dphi, box_phi, true);
}

double box_from_jet(const geometry::MetricSpec& metric, const Jet& jet) {
    if (jet.order < 2) throw std::invalid_argument("box_from_jet needs a jet of order >= 2");
    const MetricSample ms = metric.eval(jet.t, jet.x);
    const Mat4 ginv = geometry::minkowski() + ms.h;
    return ginv.cwiseProduct(jet.hessian()).sum() + geometry::box_first_order(ginv, ms).dot(jet.gradient());
}

CurrentBundle currents(const MultiplierSpec& X, const geometry::MetricSpec& metric, const Jet& jet) {
    const Vec4 d = jet.gradient();
    if (jet.order < 2) return current_core(X, metric, jet.t, jet.x, jet.value(), d, 0.0, false);
    const Mat4 H = jet.hessian();
    CurrentBundle b = current_core(X, metric, jet.t, jet.x, jet.value(), d, box_from_jet(metric, jet), true);
    // Divergence of sqrt(-G) J by central differences on the local quadratic model of phi.
    const double h = 1e-4 * (1.0 + jet.x.norm());
    double div = 0.0;
    for (int mu = 0; mu < 4; ++mu) {
        double flux[2];
        for (int s = 0; s < 2; ++s) {
            const Vec4 e = (s == 0 ? h : -h) * Vec4::Unit(mu);
            const double ph = jet.value() + d.dot(e) + 0.5 * e.dot(H * e);
            const Vec4 dph = d + H * e;
            const CurrentBundle c =
                current_core(X, metric, jet.t + e[0], jet.x + e.tail<3>(), ph, dph, 0.0, false);
            flux[s] = c.sqrt_minus_G * c.J[mu];
        }
        div += (flux[0] - flux[1]) / (2.0 * h);
    }
    b.divergence_residual = div / b.sqrt_minus_G - b.density;
    return b;
}

// ------------------------------------------------------------------ audit

AuditPlan make_audit_plan(const geometry::DecayParams& params, const GridSpec& grid, const AuditOptions& opt_in) {
    AuditPlan plan;
    plan.opt = opt_in;
    AuditOptions& opt = plan.opt;
    plan.params = params;
    plan.grid = grid;
    const double R = params.R;
    if (!(opt.tau2 > opt.tau1) || opt.tau1 < 0.0) throw std::invalid_argument("audit slab needs 0 <= tau1 < tau2");
    const double v2 = 0.5 * (opt.tau2 + R);
    if (opt.v_c <= 0.0) opt.v_c = v2;
    if (opt.v_c < v2 - 1e-12) throw std::invalid_argument("audit incoming cone must satisfy v_c >= (tau2 + R) / 2");
    if (opt.dtau <= 0.0) opt.dtau = 0.5 * grid.dx();
    if (opt.dv <= 0.0) opt.dv = grid.dx();
    const double r_far = opt.v_c - 0.5 * (opt.tau1 - R);
    if (r_far > grid.interp_radius()) throw foliation::GridTooSmallError("audit region leaves the interpolation domain");

    const int nt = std::max(1, static_cast<int>(std::ceil((opt.tau2 - opt.tau1) / opt.dtau - 1e-9)));
    const double h = (opt.tau2 - opt.tau1) / nt;
    for (int k = 0; k <= nt; ++k) {
        plan.tau_nodes.push_back(k == nt ? opt.tau2 : opt.tau1 + k * h);
        plan.tau_weights.push_back((k == 0 || k == nt) ? 0.5 * h : h);
    }
    plan.quad = foliation::SphereQuadrature::make(opt.sphere_degree);
    const bool slab = opt.region == AuditRegion::Slab;
    for (double tau : plan.tau_nodes) {
        foliation::LeafOptions lo;
        lo.dv = opt.dv;
        lo.subcells = 1;
        lo.ball_radial = slab ? opt.ball_radial : 0;
        const double u = 0.5 * (tau - R);
        lo.t_available = opt.v_c + u;
        foliation::FoliationLeaf leaf = foliation::make_leaf(tau, params, grid, plan.quad, lo);
        leaf.disc.clear();
        plan.leaf_offset.push_back(plan.points.size());
        for (const auto& b : leaf.ball) plan.points.push_back({tau, b.x});
        for (const auto& c : leaf.cone) plan.points.push_back({c.t, c.x});
        for (const Vec3& w : plan.quad.nodes) plan.points.push_back({u + opt.v_c, (opt.v_c - u) * w});
        if (!slab)
            for (const Vec3& w : plan.quad.nodes) plan.points.push_back({tau, R * w});
        plan.leaves.push_back(std::move(leaf));
    }
    plan.leaf_offset.push_back(plan.points.size());
    return plan;
}

AuditTerms evaluate_audit(const AuditPlan& plan, const std::vector<Jet>& jets, const MultiplierSpec& X,
                          const evolve::EquationSpec& eq) {
    if (jets.size() != plan.points.size()) throw std::invalid_argument("audit: jet count does not match the plan");
    const auto& metric = eq.metric;
    const double alpha = X.kind == MultiplierKind::Morawetz ? X.alpha : 0.1;
    const bool slab = plan.opt.region == AuditRegion::Slab;
    const std::size_t nq = plan.quad.size();
    const double R = plan.params.R;

    struct Local {
        CurrentBundle b;
        double ile = 0.0;
    };
    auto at = [&](std::size_t i) {
        const Jet& j = jets[i];
        const Vec4 d = j.gradient();
        const Mat4 H = j.order >= 2 ? j.hessian() : Mat4::Zero();
        const double box = evolve::box_from_equation(eq, j.t, j.x, d, H);
        Local l;
        l.b = currents(X, metric, j.t, j.x, j.value(), d, box);
        const double rp = 1.0 + j.x.norm();
        l.ile = std::pow(rp, -1.0 - alpha) * (d.squaredNorm() + j.value() * j.value() / (rp * rp));
        return l;
    };

    AuditTerms out;
    std::vector<double> flux(plan.leaves.size(), 0.0);
    for (std::size_t k = 0; k < plan.leaves.size(); ++k) {
        const auto& leaf = plan.leaves[k];
        std::size_t i = plan.leaf_offset[k];
        double bulk = 0.0, ile = 0.0, f = 0.0;
        for (const auto& bn : leaf.ball) {
            const Local l = at(i++);
            bulk += bn.weight * l.b.density * l.b.sqrt_minus_G;
            ile += bn.weight * l.ile;
            f -= bn.weight * l.b.sqrt_minus_G * l.b.J[0];
        }
        for (const auto& c : leaf.cone) {
            const Local l = at(i++);
            const double w = c.weight * c.r * c.r;
            const Vec4 lbar(1.0, -c.omega[0], -c.omega[1], -c.omega[2]);
            bulk += w * l.b.density * l.b.sqrt_minus_G;
            ile += w * l.ile;
            f -= w * l.b.sqrt_minus_G * l.b.J.dot(lbar);
        }
        const double u = 0.5 * (leaf.tau - R);
        const double r_in = plan.opt.v_c - u;
        double inc = 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
            const Local l = at(i++);
            const Vec3& w = plan.quad.nodes[q];
            const Vec4 L(1.0, w[0], w[1], w[2]);
            inc += plan.quad.weights[q] * r_in * r_in * l.b.sqrt_minus_G * l.b.J.dot(L);
        }
        double cyl = 0.0;
        if (!slab)
            for (std::size_t q = 0; q < nq; ++q) {
                const Local l = at(i++);
                const Vec3& w = plan.quad.nodes[q];
                cyl += plan.quad.weights[q] * R * R * l.b.sqrt_minus_G * l.b.J.tail<3>().dot(w);
            }
        const double tw = plan.tau_weights[k];
        out.bulk += tw * bulk;
        out.ile_bulk += tw * ile;
        out.incoming += tw * 0.5 * inc;
        out.cylinder += tw * cyl;
        flux[k] = f;
    }
    out.flux1 = flux.front();
    out.flux2 = flux.back();
    out.boundary = out.flux1 - out.flux2 + out.incoming - out.cylinder;
    out.scale = std::abs(out.bulk) + std::abs(out.flux1) + std::abs(out.flux2) + std::abs(out.incoming) +
                std::abs(out.cylinder);
    out.residual = std::abs(out.bulk - out.boundary) / std::max(out.scale, kAuditFloor);
    return out;
}

void AuditReport::add(double dx, const AuditTerms& t) {
    resolutions.push_back(dx);
    terms.push_back(t);
    const std::size_t n = resolutions.size();
    if (n < 2) {
        order = 0.0;
        return;
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(resolutions[i]);
        const double ly = std::log(std::max(terms[i].residual, 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string AuditReport::to_json() const {
    nlohmann::json j;
    j["multiplier"] = multiplier;
    j["region"] = region;
    j["resolutions"] = resolutions;
    nlohmann::json res = nlohmann::json::array(), det = nlohmann::json::array();
    for (const auto& t : terms) {
        res.push_back(t.residual);
        det.push_back({{"bulk", t.bulk},
                       {"flux_tau1", t.flux1},
                       {"flux_tau2", t.flux2},
                       {"incoming", t.incoming},
                       {"cylinder", t.cylinder},
                       {"boundary", t.boundary},
                       {"ile_bulk", t.ile_bulk},
                       {"residual", t.residual}});
    }
    j["residuals"] = res;
    j["terms"] = det;
    j["order"] = order;
    return j.dump(2);
}

}  // namespace qw::multipliers
