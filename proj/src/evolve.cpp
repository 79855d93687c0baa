#include "qwave/evolve.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qw::evolve {

namespace {

using geometry::MetricSample;
using std::ptrdiff_t;

constexpr double kInf = std::numeric_limits<double>::infinity();

template <int O>
struct Fd;

template <>
struct Fd<2> {
    static constexpr int ghost = 1;
    static double d1(const double* f, ptrdiff_t s, double inv) { return 0.5 * (f[s] - f[-s]) * inv; }
    static double d2(const double* f, ptrdiff_t s, double inv2) { return (f[s] - 2.0 * f[0] + f[-s]) * inv2; }
};

template <>
struct Fd<4> {
    static constexpr int ghost = 2;
    static double d1(const double* f, ptrdiff_t s, double inv) {
        return (8.0 * (f[s] - f[-s]) - (f[2 * s] - f[-2 * s])) * inv * (1.0 / 12.0);
    }
    static double d2(const double* f, ptrdiff_t s, double inv2) {
        return (-f[2 * s] + 16.0 * f[s] - 30.0 * f[0] + 16.0 * f[-s] - f[-2 * s]) * inv2 * (1.0 / 12.0);
    }
};

template <int O>
double mixed(const double* f, ptrdiff_t a, ptrdiff_t b, double inv) {
    if constexpr (O == 2) {
        return 0.25 * inv * inv * (f[a + b] - f[a - b] - f[-a + b] + f[-a - b]);
    } else {
        const double g1 = Fd<4>::d1(f + a, b, inv) - Fd<4>::d1(f - a, b, inv);
        const double g2 = Fd<4>::d1(f + 2 * a, b, inv) - Fd<4>::d1(f - 2 * a, b, inv);
        return (8.0 * g1 - g2) * inv * (1.0 / 12.0);
    }
}

// Radial derivatives of the spherical background and the induced Cartesian jet.
struct BackgroundJet {
    Vec4 d = Vec4::Zero();
    Mat4 hess = Mat4::Zero();
};

BackgroundJet background_jet(const Profile& F, double t, const Vec3& x) {
    const double r = x.norm();
    auto pt = [&](double tt, double rr) { return exact_spherical_dt(F, tt, std::abs(rr)); };
    auto pr = [&](double tt, double rr) {
        const double v = exact_spherical_dr(F, tt, std::abs(rr));
        return rr < 0.0 ? -v : v;
    };
    const double h = 1e-3;
    auto d4 = [&](auto&& f) { return (8.0 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12.0 * h); };
    const double phi_t = pt(t, r), phi_r = pr(t, r);
    const double phi_tt = d4([&](double e) { return pt(t + e, r); });
    const double phi_tr = d4([&](double e) { return pt(t, r + e); });
    const double phi_rr = d4([&](double e) { return pr(t, r + e); });
    BackgroundJet j;
    j.d[0] = phi_t;
    j.hess(0, 0) = phi_tt;
    const Vec3 w = r > 1e-8 ? Vec3(x / r) : Vec3::Zero();
    const double pr_over_r = r > 1e-3 ? phi_r / r : phi_rr;
    for (int i = 0; i < 3; ++i) {
        j.d[i + 1] = phi_r * w[i];
        j.hess(0, i + 1) = j.hess(i + 1, 0) = phi_tr * w[i];
        for (int k = 0; k < 3; ++k)
            j.hess(i + 1, k + 1) = (phi_rr - pr_over_r) * w[i] * w[k] + (i == k ? pr_over_r : 0.0);
    }
    return j;
}

// Dense cache of the compact metric profile over the index box that covers its support.
struct MetricCache {
    int lo = 0, hi = 0;  // index range per axis
    std::vector<double> w, dwr;
    std::vector<char> inside;

    std::size_t at(int i, int j, int k) const {
        const std::size_t m = static_cast<std::size_t>(hi - lo);
        return (static_cast<std::size_t>(i - lo) * m + (j - lo)) * m + (k - lo);
    }
    bool covers(int i, int j, int k) const {
        return i >= lo && i < hi && j >= lo && j < hi && k >= lo && k < hi;
    }
};

struct Region {
    int lo = 0, hi = 0;  // cube of cells evaluated (per axis)
    double rho = kInf;   // causal ball radius; cells with r > rho get zero rhs
};

struct KernelStats {
    double min_margin = kInf;
};

class Kernel {
public:
    Kernel(const EquationSpec& spec, const GridSpec& grid) : spec_(spec), grid_(grid) {
        if (spec.fd_order != 2 && spec.fd_order != 4) throw std::invalid_argument("fd_order must be 2 or 4");
        ghost_ = spec.fd_order / 2;
        const auto& nf = spec.nullform;
        flat_linear_ = spec.is_flat_linear();
        metric_ = !spec.metric.is_flat();
        quasi_ = false;
        for (double c : nf.g) quasi_ = quasi_ || c != 0.0;
        stability_ = spec.stability && quasi_;
        semilinear_ = spec.semilinear && !nf.A.isZero(0.0);
        interior_q_ = spec.interior_quadratic != 0.0 && spec.interior_radius > 0.0;
        need_grad_ = metric_ || quasi_ || semilinear_ || stability_;
        need_mixed_ = spec.metric.has_spatial_offdiagonal();
        need_dpi_ = metric_ && (spec.metric.shape(0, 1) != 0.0 || spec.metric.shape(0, 2) != 0.0 ||
                                spec.metric.shape(0, 3) != 0.0);
        for (int a = 1; a < 4; ++a)
            for (int g = 0; g < 4; ++g) {
                for (int b = 1; b < 4; ++b)
                    if (a != b && nf.at(a, b, g) != 0.0) need_mixed_ = true;
                if (nf.at(0, a, g) != 0.0) need_dpi_ = true;
            }
        if (stability_) background_ = spec.background.profile();
        build_cache();
    }

    int ghost() const { return ghost_; }

    void eval(double t, const double* phi, const double* pi, double* dphi, double* dpi, const Region& reg,
              BoundaryMode mode, KernelStats& stats) const {
        if (spec_.fd_order == 2)
            eval_impl<2>(t, phi, pi, dphi, dpi, reg, mode, stats);
        else
            eval_impl<4>(t, phi, pi, dphi, dpi, reg, mode, stats);
    }

    // G at a cell given the first derivatives of phi there.
    Mat4 principal(double t, int i, int j, int k, const Vec4& d, Vec4* N, double* stab, const Vec4* dphi_for_stab,
                   bool* nonflat) const {
        Mat4 G = geometry::minkowski();
        bool touched = false;
        if (metric_) {
            const Vec3 x = grid_.position(i, j, k);
            MetricSample ms;
            bool have = false;
            if (spec_.metric.family == geometry::MetricFamily::ConstantHtt) {
                ms = spec_.metric.eval(t, x);
                have = true;
            } else if (cache_.covers(i, j, k)) {
                const std::size_t c = cache_.at(i, j, k);
                if (cache_.inside[c]) {
                    ms = spec_.metric.eval_cached(t, x, cache_.w[c], cache_.dwr[c]);
                    have = true;
                }
            }
            if (have) {
                G += ms.h;
                touched = true;
                if (N) *N = geometry::box_first_order(G, ms);
            }
        }
        if (quasi_) {
            add_nullform(G, d);
            touched = touched || d.squaredNorm() > 0.0;
            if (stability_) {
                const BackgroundJet bj = background_jet(background_, t, grid_.position(i, j, k));
                add_nullform(G, bj.d);
                if (stab && dphi_for_stab) {
                    double s = 0.0;
                    for (int mu = 0; mu < 4; ++mu)
                        for (int nu = 0; nu < 4; ++nu)
                            for (int g = 0; g < 4; ++g)
                                s += spec_.nullform.at(mu, nu, g) * bj.hess(mu, nu) * (*dphi_for_stab)[g];
                    *stab = s;
                }
                touched = true;
            }
        }
        if (nonflat) *nonflat = touched;
        return G;
    }

    double speed_bound(double t, const double* phi, const double* pi, const Region& reg) const {
        if (flat_linear_ || (!metric_ && !quasi_)) return 1.0;
        if (spec_.fd_order == 2) return speed_impl<2>(t, phi, pi, reg);
        return speed_impl<4>(t, phi, pi, reg);
    }

private:
    void add_nullform(Mat4& G, const Vec4& d) const {
        for (int mu = 0; mu < 4; ++mu)
            for (int nu = 0; nu < 4; ++nu) {
                const double* g = &spec_.nullform.g[(mu * 4 + nu) * 4];
                G(mu, nu) += g[0] * d[0] + g[1] * d[1] + g[2] * d[2] + g[3] * d[3];
            }
    }

    void build_cache() {
        if (!metric_ || spec_.metric.family == geometry::MetricFamily::ConstantHtt) return;
        const double sup = spec_.metric.support_radius();
        const double dx = grid_.dx();
        int lo = static_cast<int>(std::floor((grid_.half_width - sup) / dx)) - 1;
        lo = std::clamp(lo, 0, grid_.n);
        const int hi = grid_.n - lo;
        cache_.lo = lo;
        cache_.hi = std::max(hi, lo);
        const std::size_t m = static_cast<std::size_t>(cache_.hi - cache_.lo);
        cache_.w.assign(m * m * m, 0.0);
        cache_.dwr.assign(m * m * m, 0.0);
        cache_.inside.assign(m * m * m, 0);
        for (int i = cache_.lo; i < cache_.hi; ++i)
            for (int j = cache_.lo; j < cache_.hi; ++j)
                for (int k = cache_.lo; k < cache_.hi; ++k) {
                    const std::size_t c = cache_.at(i, j, k);
                    double w = 0.0, dwr = 0.0;
                    if (spec_.metric.radial_factors(grid_.position(i, j, k).norm(), w, dwr)) {
                        cache_.w[c] = w;
                        cache_.dwr[c] = dwr;
                        cache_.inside[c] = 1;
                    }
                }
    }

    template <int O>
    Vec4 gradient(const double* phi, const double* pi, std::size_t c, ptrdiff_t sx, ptrdiff_t sy,
                  double inv) const {
        const double* f = phi + c;
        return Vec4(pi[c], Fd<O>::d1(f, sx, inv), Fd<O>::d1(f, sy, inv), Fd<O>::d1(f, 1, inv));
    }

    template <int O>
    double speed_impl(double t, const double* phi, const double* pi, const Region& reg) const {
        const int n = grid_.n;
        const ptrdiff_t sx = static_cast<ptrdiff_t>(n) * n, sy = n;
        const double inv = 1.0 / grid_.dx();
        const int lo = std::max(reg.lo, ghost_), hi = std::min(reg.hi, n - ghost_);
        double cmax = 1.0;
#pragma omp parallel for schedule(static) reduction(max : cmax)
        for (int i = lo; i < hi; ++i)
            for (int j = lo; j < hi; ++j)
                for (int k = lo; k < hi; ++k) {
                    const std::size_t c = grid_.index(i, j, k);
                    const Vec4 d = quasi_ ? gradient<O>(phi, pi, c, sx, sy, inv) : Vec4::Zero();
                    bool nonflat = false;
                    const Mat4 G = principal(t, i, j, k, d, nullptr, nullptr, nullptr, &nonflat);
                    if (!nonflat) continue;
                    const double s = characteristic_speed(G);
                    if (std::isfinite(s)) cmax = std::max(cmax, s);
                }
        return cmax;
    }

    template <int O>
    void eval_impl(double t, const double* phi, const double* pi, double* dphi, double* dpi, const Region& reg,
                   BoundaryMode mode, KernelStats& stats) const {
        const int n = grid_.n;
        const ptrdiff_t sx = static_cast<ptrdiff_t>(n) * n, sy = n;
        const double dx = grid_.dx();
        const double inv = 1.0 / dx, inv2 = inv * inv;
        const int g = Fd<O>::ghost;
        const int lo = std::max(reg.lo, g), hi = std::min(reg.hi, n - g);
        const double rho2 = reg.rho * reg.rho;
        const bool causal = mode == BoundaryMode::CausalDomain;
        const bool has_source = static_cast<bool>(spec_.source);
        double min_margin = kInf;

#pragma omp parallel for schedule(static) reduction(min : min_margin)
        for (int i = lo; i < hi; ++i) {
            const double xi = grid_.coord(i);
            for (int j = lo; j < hi; ++j) {
                const double yj = grid_.coord(j);
                for (int k = lo; k < hi; ++k) {
                    const std::size_t c = grid_.index(i, j, k);
                    const double zk = grid_.coord(k);
                    const double r2 = xi * xi + yj * yj + zk * zk;
                    if (causal && r2 > rho2) {
                        dphi[c] = 0.0;
                        dpi[c] = 0.0;
                        continue;
                    }
                    const double* f = phi + c;
                    dphi[c] = pi[c];
                    if (flat_linear_) {
                        double acc = Fd<O>::d2(f, sx, inv2) + Fd<O>::d2(f, sy, inv2) + Fd<O>::d2(f, 1, inv2);
                        if (has_source) acc -= spec_.source(t, Vec3(xi, yj, zk));
                        dpi[c] = acc;
                        continue;
                    }
                    const Vec4 d = need_grad_ ? gradient<O>(phi, pi, c, sx, sy, inv) : Vec4::Zero();
                    Vec4 N = Vec4::Zero();
                    double stab = 0.0;
                    bool nonflat = false;
                    const Mat4 G = principal(t, i, j, k, d, &N, &stab, &d, &nonflat);
                    if (nonflat) {
                        const double a = -G(0, 0);
                        double m = a;
                        for (int p = 1; p < 4; ++p) {
                            double off = 0.0;
                            for (int q = 1; q < 4; ++q)
                                if (q != p) off += std::abs(G(p, q));
                            m = std::min(m, G(p, p) - off);
                        }
                        if (m <= 0.0) m = hyperbolicity_check(G).margin;
                        min_margin = std::min(min_margin, m);
                        if (!(m > 0.0)) {
                            dpi[c] = std::numeric_limits<double>::quiet_NaN();
                            continue;
                        }
                    }
                    double num = G(1, 1) * Fd<O>::d2(f, sx, inv2) + G(2, 2) * Fd<O>::d2(f, sy, inv2) +
                                 G(3, 3) * Fd<O>::d2(f, 1, inv2);
                    if (need_mixed_)
                        num += 2.0 * (G(1, 2) * mixed<O>(f, sx, sy, inv) + G(1, 3) * mixed<O>(f, sx, 1, inv) +
                                      G(2, 3) * mixed<O>(f, sy, 1, inv));
                    if (need_dpi_) {
                        const double* q = pi + c;
                        num += 2.0 * (G(0, 1) * Fd<O>::d1(q, sx, inv) + G(0, 2) * Fd<O>::d1(q, sy, inv) +
                                      G(0, 3) * Fd<O>::d1(q, 1, inv));
                    }
                    num += N.dot(d) + stab;
                    if (semilinear_) num -= d.dot(spec_.nullform.A * d);
                    if (interior_q_) {
                        const Bump b{0};
                        num -= spec_.interior_quadratic * b(std::sqrt(r2) / spec_.interior_radius) * pi[c] * pi[c];
                    }
                    if (has_source) num -= spec_.source(t, Vec3(xi, yj, zk));
                    dpi[c] = num / (-G(0, 0));
                }
            }
        }
        stats.min_margin = std::min(stats.min_margin, min_margin);
        boundary_layer(phi, pi, dphi, dpi, reg, mode);
    }

    // Boundary cells: zero in causal mode, outgoing radiation condition in Sommerfeld mode.
    void boundary_layer(const double* phi, const double* pi, double* dphi, double* dpi, const Region& reg,
                        BoundaryMode mode) const {
        const int n = grid_.n;
        const int g = ghost_;
        if (reg.lo >= g && reg.hi <= n - g) return;
        const double inv = 1.0 / grid_.dx();
        const ptrdiff_t stride[3] = {static_cast<ptrdiff_t>(n) * n, n, 1};
        auto one_sided = [&](const double* f, int idx, ptrdiff_t s) {
            if (idx == 0 || (idx < g && idx + 2 < n)) return 0.5 * (-3.0 * f[0] + 4.0 * f[s] - f[2 * s]) * inv;
            if (idx == n - 1 || idx >= n - g) return 0.5 * (3.0 * f[0] - 4.0 * f[-s] + f[-2 * s]) * inv;
            return 0.5 * (f[s] - f[-s]) * inv;
        };
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    const bool edge = i < g || j < g || k < g || i >= n - g || j >= n - g || k >= n - g;
                    if (!edge) continue;
                    const std::size_t c = grid_.index(i, j, k);
                    if (mode == BoundaryMode::CausalDomain) {
                        dphi[c] = 0.0;
                        dpi[c] = 0.0;
                        continue;
                    }
                    const Vec3 x = grid_.position(i, j, k);
                    const double r = x.norm();
                    const int id[3] = {i, j, k};
                    double xg_phi = 0.0, xg_pi = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        xg_phi += x[a] * one_sided(phi + c, id[a], stride[a]);
                        xg_pi += x[a] * one_sided(pi + c, id[a], stride[a]);
                    }
                    dphi[c] = -(xg_phi + phi[c]) / r;
                    dpi[c] = -(xg_pi + pi[c]) / r;
                }
    }

    const EquationSpec& spec_;
    GridSpec grid_;
    int ghost_ = 2;
    bool flat_linear_ = true, metric_ = false, quasi_ = false, stability_ = false, semilinear_ = false,
         interior_q_ = false, need_grad_ = false, need_mixed_ = false, need_dpi_ = false;
    Profile background_;
    MetricCache cache_;
};

Region full_region(const GridSpec& g) { return Region{0, g.n, kInf}; }

// Cube of cells with |x_a| <= rho, widened by one cell.
Region causal_region(const GridSpec& g, double rho) {
    Region reg;
    reg.rho = rho;
    const double dx = g.dx();
    const int m = static_cast<int>(std::ceil((g.half_width - rho) / dx)) - 1;
    reg.lo = std::clamp(m, 0, g.n / 2);
    reg.hi = g.n - reg.lo;
    return reg;
}

void check_finite(const std::vector<double>& a, const std::vector<double>& b, const Region& reg, const GridSpec& g,
                  double t) {
    bool bad = false;
#pragma omp parallel for schedule(static) reduction(|| : bad)
    for (int i = reg.lo; i < reg.hi; ++i)
        for (int j = reg.lo; j < reg.hi; ++j)
            for (int k = reg.lo; k < reg.hi; ++k) {
                const std::size_t c = g.index(i, j, k);
                if (!std::isfinite(a[c]) || !std::isfinite(b[c])) bad = true;
            }
    if (bad) {
        std::ostringstream os;
        os << "non-finite field value at t = " << t;
        throw NonFiniteError(os.str());
    }
}

void throw_if_lost(const KernelStats& st, double t) {
    if (st.min_margin <= 0.0 || std::isnan(st.min_margin)) {
        std::ostringstream os;
        os << "hyperbolicity lost at t = " << t << " (margin " << st.min_margin << ")";
        throw HyperbolicityLossError(os.str());
    }
}

Vec4 grid_gradient(const EquationSpec& spec, const FieldState& s, int i, int j, int k) {
    const GridSpec& g = s.grid;
    const int n = g.n;
    const double inv = 1.0 / g.dx();
    const std::size_t c = g.index(i, j, k);
    const int idx[3] = {i, j, k};
    const ptrdiff_t stride[3] = {static_cast<ptrdiff_t>(n) * n, n, 1};
    const int gh = spec.fd_order / 2;
    Vec4 d(s.pi[c], 0.0, 0.0, 0.0);
    for (int a = 0; a < 3; ++a) {
        const double* f = s.phi.data() + c;
        if (idx[a] >= gh && idx[a] < n - gh)
            d[a + 1] = spec.fd_order == 2 ? Fd<2>::d1(f, stride[a], inv) : Fd<4>::d1(f, stride[a], inv);
        else if (idx[a] + 1 < n)
            d[a + 1] = (f[stride[a]] - f[0]) * inv;
        else
            d[a + 1] = (f[0] - f[-stride[a]]) * inv;
    }
    return d;
}

}  // namespace

std::string to_string(BoundaryMode m) {
    return m == BoundaryMode::CausalDomain ? "causal-domain" : "sommerfeld";
}

BoundaryMode boundary_mode_from_string(const std::string& name) {
    if (name == "causal-domain" || name == "causal") return BoundaryMode::CausalDomain;
    if (name == "sommerfeld") return BoundaryMode::Sommerfeld;
    throw std::invalid_argument("unknown boundary mode '" + name + "'");
}

bool EquationSpec::is_flat_linear() const {
    return metric.is_flat() && nullform.is_zero() && interior_quadratic == 0.0 && !stability;
}

Mat4 effective_principal(const EquationSpec& spec, double t, const Vec3& x, const Vec4& dphi, const Vec4* dPhi) {
    Mat4 G = geometry::minkowski() + spec.metric.h(t, x);
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu)
            for (int g = 0; g < 4; ++g) {
                G(mu, nu) += spec.nullform.at(mu, nu, g) * dphi[g];
                if (dPhi) G(mu, nu) += spec.nullform.at(mu, nu, g) * (*dPhi)[g];
            }
    return G;
}

Mat4 effective_principal(const EquationSpec& spec, const FieldState& state, int i, int j, int k) {
    const Vec4 d = grid_gradient(spec, state, i, j, k);
    if (spec.stability) {
        const Vec3 x = state.grid.position(i, j, k);
        const Vec4 dPhi = background_jet(spec.background.profile(), state.t, x).d;
        return effective_principal(spec, state.t, x, d, &dPhi);
    }
    return effective_principal(spec, state.t, state.grid.position(i, j, k), d);
}

double box_from_equation(const EquationSpec& spec, double t, const Vec3& x, const Vec4& dphi, const Mat4& hess) {
    double box = spec.source ? spec.source(t, x) : 0.0;
    if (spec.semilinear) box += dphi.dot(spec.nullform.A * dphi);
    if (spec.interior_quadratic != 0.0 && spec.interior_radius > 0.0)
        box += spec.interior_quadratic * Bump{0}(x.norm() / spec.interior_radius) * dphi[0] * dphi[0];
    if (spec.nullform.is_zero()) return box;
    Vec4 dPhi = Vec4::Zero();
    Mat4 hPhi = Mat4::Zero();
    if (spec.stability) {
        const BackgroundJet bj = background_jet(spec.background.profile(), t, x);
        dPhi = bj.d;
        hPhi = bj.hess;
    }
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu)
            for (int g = 0; g < 4; ++g) {
                const double c = spec.nullform.at(mu, nu, g);
                box -= c * (dphi[g] + dPhi[g]) * hess(mu, nu) + c * hPhi(mu, nu) * dphi[g];
            }
    return box;
}

HyperbolicityVerdict hyperbolicity_check(const Mat4& G) {
    HyperbolicityVerdict v;
    const Mat3 C = G.block<3, 3>(1, 1);
    const Eigen::SelfAdjointEigenSolver<Mat3> es(C, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    v.margin = std::min(-G(0, 0), lmin);
    v.pass = G(0, 0) < 0.0 && lmin > 0.0;
    return v;
}

double characteristic_speed(const Mat4& G) {
    const double a = -G(0, 0);
    if (!(a > 0.0)) return kInf;
    const Vec3 b = G.block<1, 3>(0, 1).transpose();
    const Mat3 C = G.block<3, 3>(1, 1);
    const Eigen::SelfAdjointEigenSolver<Mat3> es(C, Eigen::EigenvaluesOnly);
    const double lmax = std::max(0.0, es.eigenvalues().maxCoeff());
    const double bn = b.norm();
    return (bn + std::sqrt(bn * bn + a * lmax)) / a;
}

void rhs(const EquationSpec& spec, const FieldState& state, BoundaryMode mode, std::vector<double>& dphi,
         std::vector<double>& dpi) {
    const Kernel kern(spec, state.grid);
    dphi.assign(state.grid.size(), 0.0);
    dpi.assign(state.grid.size(), 0.0);
    KernelStats st;
    kern.eval(state.t, state.phi.data(), state.pi.data(), dphi.data(), dpi.data(), full_region(state.grid), mode, st);
    throw_if_lost(st, state.t);
}

double cfl_dt(const EquationSpec& spec, const FieldState& state, double courant) {
    const Kernel kern(spec, state.grid);
    const double c = kern.speed_bound(state.t, state.phi.data(), state.pi.data(), full_region(state.grid));
    return courant * state.grid.dx() / c;
}

FieldState step_rk4(const EquationSpec& spec, const FieldState& state, double dt, BoundaryMode mode) {
    const Kernel kern(spec, state.grid);
    const Region reg = full_region(state.grid);
    const std::size_t N = state.grid.size();
    std::vector<double> k1p(N), k1q(N), k2p(N), k2q(N), sp(N), sq(N);
    std::vector<double> accp(N, 0.0), accq(N, 0.0);
    KernelStats st;
    FieldState out = state;
    const double c[3] = {0.5, 0.5, 1.0};
    const double w[4] = {1.0, 2.0, 2.0, 1.0};
    kern.eval(state.t, state.phi.data(), state.pi.data(), k1p.data(), k1q.data(), reg, mode, st);
    for (int s = 0; s < 4; ++s) {
        const std::vector<double>& kp = s == 0 ? k1p : k2p;
        const std::vector<double>& kq = s == 0 ? k1q : k2q;
        for (std::size_t i = 0; i < N; ++i) {
            accp[i] += w[s] * kp[i];
            accq[i] += w[s] * kq[i];
        }
        if (s == 3) break;
        for (std::size_t i = 0; i < N; ++i) {
            sp[i] = state.phi[i] + c[s] * dt * kp[i];
            sq[i] = state.pi[i] + c[s] * dt * kq[i];
        }
        kern.eval(state.t + c[s] * dt, sp.data(), sq.data(), k2p.data(), k2q.data(), reg, mode, st);
    }
    throw_if_lost(st, state.t);
    for (std::size_t i = 0; i < N; ++i) {
        out.phi[i] += dt / 6.0 * accp[i];
        out.pi[i] += dt / 6.0 * accq[i];
    }
    out.t = state.t + dt;
    check_finite(out.phi, out.pi, reg, out.grid, out.t);
    return out;
}

namespace {

// Streaming RK4 driver holding all level buffers.
class Stepper {
public:
    Stepper(const RunSetup& setup) : setup_(setup), grid_(setup.grid), kern_(setup.eq, setup.grid) {
        const std::size_t N = grid_.size();
        for (auto* v : {&yp_, &yq_, &sp_, &sq_, &kp_, &kq_, &mp_, &mq_, &aold_}) v->assign(N, 0.0);
        causal_ = setup.boundary == BoundaryMode::CausalDomain;
        support_ = setup.data.support_radius();
        margin_ = setup.clamp_margin > 0.0 ? setup.clamp_margin : 3.0 * grid_.dx();
    }

    void load(const FieldState& s) {
        t_ = s.t;
        yp_ = s.phi;
        yq_ = s.pi;
    }

    Region region_at(double t) const {
        if (!causal_) return full_region(grid_);
        return causal_region(grid_, support_ + speed_ * t + margin_);
    }

    bool touches_boundary(const Region& reg) const { return reg.lo < kern_.ghost(); }

    void prime() {
        reg_ = region_at(t_);
        eval(t_, yp_, yq_, mp_, mq_);
    }

    double estimate_speed() {
        const Region reg = region_at(t_);
        speed_ = std::max(speed_, kern_.speed_bound(t_, yp_.data(), yq_.data(), reg));
        return speed_;
    }

    void step(double dt) {
        const double t0 = t_;
        reg_ = region_at(t0 + dt);
        std::swap(aold_, mq_);
        const int lo = reg_.lo, hi = reg_.hi;
        const GridSpec& g = grid_;
        auto loop = [&](auto&& body) {
#pragma omp parallel for schedule(static)
            for (int i = lo; i < hi; ++i)
                for (int j = lo; j < hi; ++j) {
                    const std::size_t base = g.index(i, j, lo);
                    for (int k = 0; k < hi - lo; ++k) body(base + k);
                }
        };
        const double h2 = 0.5 * dt;
        // stage 1 -> state for stage 2
        loop([&](std::size_t c) {
            sp_[c] = yp_[c] + h2 * mp_[c];
            sq_[c] = yq_[c] + h2 * aold_[c];
        });
        eval(t0 + h2, sp_, sq_, kp_, kq_);
        loop([&](std::size_t c) {
            mp_[c] += 2.0 * kp_[c];
            mq_[c] = aold_[c] + 2.0 * kq_[c];
            sp_[c] = yp_[c] + h2 * kp_[c];
            sq_[c] = yq_[c] + h2 * kq_[c];
        });
        eval(t0 + h2, sp_, sq_, kp_, kq_);
        loop([&](std::size_t c) {
            mp_[c] += 2.0 * kp_[c];
            mq_[c] += 2.0 * kq_[c];
            sp_[c] = yp_[c] + dt * kp_[c];
            sq_[c] = yq_[c] + dt * kq_[c];
        });
        eval(t0 + dt, sp_, sq_, kp_, kq_);
        const double w = dt / 6.0;
        loop([&](std::size_t c) {
            sp_[c] = yp_[c] + w * (mp_[c] + kp_[c]);
            sq_[c] = yq_[c] + w * (mq_[c] + kq_[c]);
        });
        std::swap(yp_, sp_);
        std::swap(yq_, sq_);
        t_ = t0 + dt;
        check_finite(yp_, yq_, reg_, grid_, t_);
        eval(t_, yp_, yq_, mp_, mq_);
        t_prev_ = t0;
    }

    foliation::LevelView current() const { return {t_, yp_.data(), yq_.data(), mq_.data()}; }
    foliation::LevelView previous() const { return {t_prev_, sp_.data(), sq_.data(), aold_.data()}; }

    FieldState state() const {
        FieldState s;
        s.t = t_;
        s.grid = grid_;
        s.phi = yp_;
        s.pi = yq_;
        return s;
    }

    double t() const { return t_; }
    double min_margin() const { return stats_.min_margin; }
    double speed() const { return speed_; }
    const Region& region() const { return reg_; }

private:
    void eval(double t, const std::vector<double>& p, const std::vector<double>& q, std::vector<double>& dp,
              std::vector<double>& dq) {
        kern_.eval(t, p.data(), q.data(), dp.data(), dq.data(), reg_, setup_.boundary, stats_);
        throw_if_lost(stats_, t);
    }

    const RunSetup& setup_;
    GridSpec grid_;
    Kernel kern_;
    std::vector<double> yp_, yq_, sp_, sq_, kp_, kq_, mp_, mq_, aold_;
    bool causal_ = true;
    double support_ = 0.0, margin_ = 0.0, speed_ = 1.0;
    double t_ = 0.0, t_prev_ = 0.0;
    Region reg_;
    KernelStats stats_;
};

}  // namespace

Trajectory run(const RunSetup& setup, const std::vector<Observer*>& observers) {
    setup.grid.validate();
    if (setup.leaf_times.empty()) throw std::invalid_argument("run needs at least one leaf time");
    for (std::size_t i = 0; i < setup.leaf_times.size(); ++i) {
        if (setup.leaf_times[i] < 0.0) throw std::invalid_argument("leaf times must be >= 0");
        if (i > 0 && !(setup.leaf_times[i] > setup.leaf_times[i - 1]))
            throw std::invalid_argument("leaf times must be strictly increasing");
    }
    if (!(setup.courant > 0.0)) throw std::invalid_argument("courant factor must be positive");
#ifdef _OPENMP
    if (setup.threads > 0) omp_set_num_threads(setup.threads);
#endif

    Trajectory traj;
    traj.leaf_times = setup.leaf_times;
    Stepper st(setup);
    st.load(setup.data.sample(setup.grid));
    st.prime();

    const GridSpec& g = setup.grid;
    int leaf_count = 0;
    auto checkpoint = [&](bool final) {
        if (setup.checkpoint_dir.empty()) return;
        const bool due = final || (setup.checkpoint_every > 0 && leaf_count % setup.checkpoint_every == 0);
        if (!due) return;
        std::ostringstream name;
        name << setup.checkpoint_dir << "/state_" << leaf_count << ".qwck";
        write_checkpoint(name.str(), st.state());
        traj.checkpoints.push_back({st.t(), name.str()});
    };
    auto emit_leaf = [&](double tau) {
        for (Observer* o : observers) o->on_leaf(tau, st.current(), g);
        ++leaf_count;
    };

    try {
        std::size_t next = 0;
        if (setup.leaf_times[0] == 0.0) {
            emit_leaf(0.0);
            next = 1;
        }
        for (; next < setup.leaf_times.size(); ++next) {
            const double target = setup.leaf_times[next];
            const double span = target - st.t();
            const double dt_cfl = setup.courant * g.dx() / st.estimate_speed();
            const long nsteps = std::max(1L, static_cast<long>(std::ceil(span / dt_cfl - 1e-12)));
            const double dt = span / static_cast<double>(nsteps);
            traj.dts.push_back(dt);
            for (long s = 0; s < nsteps; ++s) {
                st.step(dt);
                ++traj.steps;
                if (st.touches_boundary(st.region()) && setup.boundary == BoundaryMode::CausalDomain)
                    traj.boundary_reached = true;
                const foliation::LevelPair pair{&g, st.previous(), st.current()};
                for (Observer* o : observers) o->on_pair(pair);
            }
            emit_leaf(target);
            const bool last = next + 1 == setup.leaf_times.size();
            checkpoint(last);
        }
    } catch (const std::exception&) {
        if (!setup.checkpoint_dir.empty()) {
            try {
                write_checkpoint(setup.checkpoint_dir + "/abort_snapshot.qwck", st.state());
            } catch (const std::exception&) {
            }
        }
        throw;
    }
    traj.min_margin = std::min(1.0, st.min_margin());
    traj.max_speed = st.speed();
    traj.final_state = st.state();
    return traj;
}

}  // namespace qw::evolve
