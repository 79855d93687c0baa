#include "qwave/foliation.hpp"

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace qw::foliation {

void GridSpec::validate() const {
    if (n < 16) throw std::invalid_argument("grid needs at least 16 cells per axis");
    if (!(half_width > 0.0)) throw std::invalid_argument("grid half_width must be positive");
}

void gauss_legendre(int n, double a, double b, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.clear();
    weights.clear();
    if (n < 1) return;
    const std::vector<double> pos = boost::math::legendre_p_zeros<double>(n);
    std::vector<double> xs;
    for (auto it = pos.rbegin(); it != pos.rend(); ++it)
        if (*it > 0.0) xs.push_back(-*it);
    for (double z : pos) xs.push_back(z);
    const double half = 0.5 * (b - a), mid = 0.5 * (b + a);
    for (double z : xs) {
        const double dp = boost::math::legendre_p_prime(n, z);
        nodes.push_back(mid + half * z);
        weights.push_back(half * 2.0 / ((1.0 - z * z) * dp * dp));
    }
}

SphereQuadrature SphereQuadrature::make(int degree) {
    if (degree < 1) throw std::invalid_argument("sphere quadrature degree must be >= 1");
    SphereQuadrature q;
    q.degree = degree;
    const int n_theta = (degree + 2) / 2;
    const int n_phi = degree + 1;
    std::vector<double> mu, wmu;
    gauss_legendre(n_theta, -1.0, 1.0, mu, wmu);
    const double dphi = 2.0 * std::numbers::pi / n_phi;
    for (int i = 0; i < n_theta; ++i) {
        const double st = std::sqrt(std::max(0.0, 1.0 - mu[i] * mu[i]));
        for (int j = 0; j < n_phi; ++j) {
            const double ph = (j + 0.5) * dphi;
            q.nodes.emplace_back(st * std::cos(ph), st * std::sin(ph), mu[i]);
            q.weights.push_back(wmu[i] * dphi);
        }
    }
    return q;
}

FoliationLeaf make_leaf(double tau, const geometry::DecayParams& params, const GridSpec& grid,
                        const SphereQuadrature& quad, const LeafOptions& opt) {
    grid.validate();
    if (tau < 0.0) throw std::invalid_argument("leaf parameter tau must be >= 0");
    const double R = params.R;
    if (!(R < grid.half_width)) throw GridTooSmallError("grid too small: disc radius R exceeds half_width");

    FoliationLeaf leaf;
    leaf.tau = tau;
    leaf.R = R;
    leaf.u_tau = 0.5 * (tau - R);
    leaf.v_tau = 0.5 * (tau + R);
    leaf.dv = opt.dv > 0.0 ? opt.dv : grid.dx();
    leaf.quad = quad;

    const double v_time = opt.t_available - leaf.u_tau;
    const double v_grid = grid.interp_radius() + leaf.u_tau;
    leaf.time_limited = v_time <= v_grid;
    leaf.v_max = std::min(v_time, v_grid);

    if (leaf.v_max - leaf.v_tau > 1e-12) {
        const double span = leaf.v_max - leaf.v_tau;
        const int nint = std::max(1, static_cast<int>(std::ceil(span / leaf.dv - 1e-9)));
        const double h = span / nint;
        for (int j = 0; j <= nint; ++j) {
            leaf.v_nodes.push_back(j == nint ? leaf.v_max : leaf.v_tau + j * h);
            leaf.v_weights.push_back((j == 0 || j == nint) ? 0.5 * h : h);
        }
    } else {
        leaf.v_max = leaf.v_tau;
    }

    leaf.cone.reserve(leaf.v_nodes.size() * quad.size());
    for (std::size_t j = 0; j < leaf.v_nodes.size(); ++j) {
        const double v = leaf.v_nodes[j];
        const double r = v - leaf.u_tau;
        const double t = v + leaf.u_tau;
        for (std::size_t k = 0; k < quad.size(); ++k) {
            ConeSample c;
            c.v = v;
            c.r = r;
            c.t = t;
            c.omega = quad.nodes[k];
            c.x = r * c.omega;
            c.weight = leaf.v_weights[j] * quad.weights[k];
            c.iv = static_cast<int>(j);
            c.iw = static_cast<int>(k);
            leaf.cone.push_back(c);
        }
    }

    // Disc: cells meeting r <= R, fractional weights from subcell sampling.
    const double dx = grid.dx();
    const double cell_vol = dx * dx * dx;
    const double reach = R + std::sqrt(3.0) * 0.5 * dx;
    const double inner = R - std::sqrt(3.0) * 0.5 * dx;
    const int ns = std::max(1, opt.subcells);
    const int lo = std::max(0, static_cast<int>(std::floor((grid.half_width - reach) / dx)) - 1);
    const int hi = std::min(grid.n - 1, grid.n - lo);
    for (int i = lo; i <= hi; ++i) {
        for (int j = lo; j <= hi; ++j) {
            for (int k = lo; k <= hi; ++k) {
                const Vec3 x = grid.position(i, j, k);
                const double rc = x.norm();
                if (rc > reach) continue;
                double frac = 1.0;
                if (rc > inner) {
                    int inside = 0;
                    for (int a = 0; a < ns; ++a)
                        for (int b = 0; b < ns; ++b)
                            for (int c = 0; c < ns; ++c) {
                                const Vec3 y = x + dx * Vec3((a + 0.5) / ns - 0.5, (b + 0.5) / ns - 0.5,
                                                             (c + 0.5) / ns - 0.5);
                                if (y.norm() <= R) ++inside;
                            }
                    frac = static_cast<double>(inside) / (ns * ns * ns);
                }
                if (frac > 0.0) leaf.disc.push_back({grid.index(i, j, k), x, frac * cell_vol});
            }
        }
    }

    if (opt.ball_radial > 0) {
        std::vector<double> rn, rw;
        gauss_legendre(opt.ball_radial, 0.0, R, rn, rw);
        for (std::size_t a = 0; a < rn.size(); ++a)
            for (std::size_t k = 0; k < quad.size(); ++k)
                leaf.ball.push_back({rn[a] * quad.nodes[k], rw[a] * rn[a] * rn[a] * quad.weights[k]});
    }
    return leaf;
}

double cone_integral(const FoliationLeaf& leaf, const std::function<double(const ConeSample&)>& f) {
    double sum = 0.0;
    for (const ConeSample& c : leaf.cone) sum += f(c) * c.r * c.r * c.weight;
    return sum;
}

double cone_integral(const FoliationLeaf& leaf, const std::vector<double>& values) {
    if (values.size() != leaf.cone.size()) throw std::invalid_argument("cone_integral: value count mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const ConeSample& c = leaf.cone[i];
        sum += values[i] * c.r * c.r * c.weight;
    }
    return sum;
}

double disc_integral(const FoliationLeaf& leaf, const std::function<double(const DiscNode&)>& f) {
    double sum = 0.0;
    for (const DiscNode& d : leaf.disc) sum += f(d) * d.weight;
    return sum;
}

double ball_integral(const FoliationLeaf& leaf, const std::vector<double>& values) {
    if (values.size() != leaf.ball.size()) throw std::invalid_argument("ball_integral: value count mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[i] * leaf.ball[i].weight;
    return sum;
}

void dump_leaf_csv(const FoliationLeaf& leaf, std::ostream& os) {
    os << "kind,v,omega_x,omega_y,omega_z,r,t,weight\n";
    os.precision(17);
    for (const ConeSample& c : leaf.cone)
        os << "cone," << c.v << ',' << c.omega[0] << ',' << c.omega[1] << ',' << c.omega[2] << ',' << c.r << ','
           << c.t << ',' << c.weight * c.r * c.r << '\n';
    for (const DiscNode& d : leaf.disc) {
        const double r = d.x.norm();
        const Vec3 w = r > 0.0 ? Vec3(d.x / r) : Vec3::Zero();
        os << "disc,," << w[0] << ',' << w[1] << ',' << w[2] << ',' << r << ',' << leaf.tau << ',' << d.weight
           << '\n';
    }
}

// ---------------------------------------------------------------- jets

namespace {

struct SlotTable {
    int idx[4][4][4][4];
    int alpha[Jet::kSize][4];
    SlotTable() {
        for (auto& a : idx)
            for (auto& b : a)
                for (auto& c : b)
                    for (int& d : c) d = -1;
        int s = 0;
        for (int tot = 0; tot <= Jet::kMaxOrder; ++tot)
            for (int a0 = tot; a0 >= 0; --a0)
                for (int a1 = tot - a0; a1 >= 0; --a1)
                    for (int a2 = tot - a0 - a1; a2 >= 0; --a2) {
                        const int a3 = tot - a0 - a1 - a2;
                        idx[a0][a1][a2][a3] = s;
                        alpha[s][0] = a0;
                        alpha[s][1] = a1;
                        alpha[s][2] = a2;
                        alpha[s][3] = a3;
                        ++s;
                    }
    }
};

const SlotTable& slots() {
    static const SlotTable table;
    return table;
}

int total(const int* a) { return a[0] + a[1] + a[2] + a[3]; }

}  // namespace

int Jet::slot(int a0, int a1, int a2, int a3) {
    if (a0 < 0 || a1 < 0 || a2 < 0 || a3 < 0 || a0 + a1 + a2 + a3 > kMaxOrder) return -1;
    return slots().idx[a0][a1][a2][a3];
}

Vec4 Jet::gradient() const {
    if (order < 1) throw std::logic_error("jet gradient needs order >= 1");
    return Vec4(at(1, 0, 0, 0), at(0, 1, 0, 0), at(0, 0, 1, 0), at(0, 0, 0, 1));
}

Mat4 Jet::hessian() const {
    if (order < 2) throw std::logic_error("jet hessian needs order >= 2");
    Mat4 h;
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) {
            int a[4] = {0, 0, 0, 0};
            a[mu]++;
            a[nu]++;
            h(mu, nu) = at(a[0], a[1], a[2], a[3]);
        }
    return h;
}

Jet Jet::derivative(int mu) const {
    if (order < 1) throw std::logic_error("jet derivative needs order >= 1");
    Jet out;
    out.order = order - 1;
    out.t = t;
    out.x = x;
    const SlotTable& tab = slots();
    for (int s = 0; s < kSize; ++s) {
        const int* a = tab.alpha[s];
        if (total(a) > out.order) continue;
        int b[4] = {a[0], a[1], a[2], a[3]};
        b[mu]++;
        out.d[s] = d[tab.idx[b[0]][b[1]][b[2]][b[3]]];
    }
    return out;
}

Jet Jet::times_coordinate(int mu) const {
    Jet out;
    out.order = order;
    out.t = t;
    out.x = x;
    const double p = mu == 0 ? t : x[mu - 1];
    const SlotTable& tab = slots();
    for (int s = 0; s < kSize; ++s) {
        const int* a = tab.alpha[s];
        if (total(a) > order) continue;
        double v = p * d[s];
        if (a[mu] > 0) {
            int b[4] = {a[0], a[1], a[2], a[3]};
            b[mu]--;
            v += a[mu] * d[tab.idx[b[0]][b[1]][b[2]][b[3]]];
        }
        out.d[s] = v;
    }
    return out;
}

Jet Jet::apply_generator(int gen) const {
    switch (gen) {
        case 0: return derivative(0);
        case 1: return derivative(2).times_coordinate(1) - derivative(1).times_coordinate(2);
        case 2: return derivative(3).times_coordinate(1) - derivative(1).times_coordinate(3);
        case 3: return derivative(3).times_coordinate(2) - derivative(2).times_coordinate(3);
    }
    throw std::invalid_argument("unknown Z generator");
}

Jet Jet::operator+(const Jet& o) const {
    Jet out = *this;
    out.order = std::min(order, o.order);
    for (int s = 0; s < kSize; ++s) out.d[s] = d[s] + o.d[s];
    return out;
}

Jet Jet::operator-(const Jet& o) const {
    Jet out = *this;
    out.order = std::min(order, o.order);
    for (int s = 0; s < kSize; ++s) out.d[s] = d[s] - o.d[s];
    return out;
}

Jet Jet::operator*(double sc) const {
    Jet out = *this;
    for (double& v : out.d) v *= sc;
    return out;
}

namespace {

// Lagrange basis on npts nodes at offsets 1 - npts/2, ..., npts/2 (in cells) and its first three
// derivatives at s, in physical units: w[d][m].
void lagrange_weights(int npts, double s, double dx, double w[4][6]) {
    const int first = 1 - npts / 2;
    for (int m = 0; m < npts; ++m) {
        // Coefficients of prod_{k != m} (s - x_k) / (x_m - x_k), lowest degree first.
        double c[6] = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
        double denom = 1.0;
        int deg = 0;
        const double xm = first + m;
        for (int k = 0; k < npts; ++k) {
            if (k == m) continue;
            const double xk = first + k;
            for (int d = deg + 1; d > 0; --d) c[d] = c[d - 1] - xk * c[d];
            c[0] *= -xk;
            ++deg;
            denom *= xm - xk;
        }
        double scale = 1.0;
        for (int d = 0; d < 4; ++d) {
            // d-th derivative of the polynomial at s.
            double v = 0.0;
            for (int e = deg; e >= d; --e) {
                double f = 1.0;
                for (int q = 0; q < d; ++q) f *= e - q;
                v = v * s + f * c[e];
            }
            w[d][m] = v / denom / scale;
            scale *= dx;
        }
    }
}

struct Stencil {
    int npts = 4;
    int i0[3];
    double w[3][4][6];
};

// 6-point (quintic) stencil per axis; the 4-point (cubic) one where the wide stencil leaves the grid.
Stencil make_stencil(const GridSpec& g, const Vec3& x) {
    bool wide = true;
    const double dx = g.dx();
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double q = (x[a] + g.half_width) / dx - 0.5;
        base[a] = static_cast<int>(std::floor(q));
        frac[a] = q - base[a];
        if (base[a] - 1 < 0 || base[a] + 2 > g.n - 1) throw OutOfDomainError("interpolation point outside grid");
        if (base[a] - 2 < 0 || base[a] + 3 > g.n - 1) wide = false;
    }
    Stencil st;
    st.npts = wide ? 6 : 4;
    for (int a = 0; a < 3; ++a) {
        st.i0[a] = base[a] + 1 - st.npts / 2;
        lagrange_weights(st.npts, frac[a], dx, st.w[a]);
    }
    return st;
}

// out[spatial slot] for |beta| <= maxo, indexed through Jet::slot(0, b1, b2, b3).
void spatial_derivs(const GridSpec& g, const Stencil& st, const double* f, int maxo, double* out) {
    if (maxo < 0) return;
    const int np = st.npts;
    double fz[6][6][4];  // [i][j][c]
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < np; ++j) {
            const double* row = f + g.index(st.i0[0] + i, st.i0[1] + j, st.i0[2]);
            for (int c = 0; c <= maxo; ++c) {
                const double* wz = st.w[2][c];
                double v = 0.0;
                for (int k = 0; k < np; ++k) v += wz[k] * row[k];
                fz[i][j][c] = v;
            }
        }
    double fyz[6][4][4];  // [i][b][c]
    for (int i = 0; i < np; ++i)
        for (int b = 0; b <= maxo; ++b)
            for (int c = 0; b + c <= maxo; ++c) {
                const double* wy = st.w[1][b];
                double v = 0.0;
                for (int j = 0; j < np; ++j) v += wy[j] * fz[i][j][c];
                fyz[i][b][c] = v;
            }
    for (int a = 0; a <= maxo; ++a)
        for (int b = 0; a + b <= maxo; ++b)
            for (int c = 0; a + b + c <= maxo; ++c) {
                const double* wx = st.w[0][a];
                double v = 0.0;
                for (int i = 0; i < np; ++i) v += wx[i] * fyz[i][b][c];
                out[Jet::slot(0, a, b, c)] = v;
            }
}

// Cubic Hermite basis and its s-derivatives up to order 3.
void hermite(double s, double h[4][4]) {
    // rows: derivative order; cols: h00, h10, h01, h11
    h[0][0] = 2 * s * s * s - 3 * s * s + 1;
    h[0][1] = s * s * s - 2 * s * s + s;
    h[0][2] = -2 * s * s * s + 3 * s * s;
    h[0][3] = s * s * s - s * s;
    h[1][0] = 6 * s * s - 6 * s;
    h[1][1] = 3 * s * s - 4 * s + 1;
    h[1][2] = -6 * s * s + 6 * s;
    h[1][3] = 3 * s * s - 2 * s;
    h[2][0] = 12 * s - 6;
    h[2][1] = 6 * s - 4;
    h[2][2] = -12 * s + 6;
    h[2][3] = 6 * s - 2;
    h[3][0] = 12;
    h[3][1] = 6;
    h[3][2] = -12;
    h[3][3] = 6;
}

}  // namespace

Jet interp_jet(const LevelPair& pair, double t, const Vec3& x, int order) {
    if (order < 0 || order > Jet::kMaxOrder) throw std::invalid_argument("jet order must be in [0, 3]");
    if (!pair.grid) throw std::invalid_argument("level pair without grid");
    const GridSpec& g = *pair.grid;
    const double dt = pair.b.t - pair.a.t;
    const double tol = 1e-9 * (1.0 + std::abs(t));
    if (t < pair.a.t - tol || t > pair.b.t + tol) throw OutOfDomainError("interpolation time outside stored window");
    const Stencil st = make_stencil(g, x);

    Jet jet;
    jet.order = order;
    jet.t = t;
    jet.x = x;

    double pa[Jet::kSize] = {}, pb[Jet::kSize] = {};
    double qa[Jet::kSize] = {}, qb[Jet::kSize] = {};
    double aa[Jet::kSize] = {}, ab[Jet::kSize] = {};
    spatial_derivs(g, st, pair.a.phi, order, pa);
    spatial_derivs(g, st, pair.a.pi, order, qa);
    if (order >= 2 && pair.a.acc) spatial_derivs(g, st, pair.a.acc, order - 2, aa);
    const bool single = dt <= 0.0;
    if (!single) {
        spatial_derivs(g, st, pair.b.phi, order, pb);
        spatial_derivs(g, st, pair.b.pi, order, qb);
        if (order >= 1 && pair.a.acc && pair.b.acc) {
            spatial_derivs(g, st, pair.a.acc, order - 1, aa);
            spatial_derivs(g, st, pair.b.acc, order - 1, ab);
        }
    }

    double H[4][4];
    const double s = single ? 0.0 : std::clamp((t - pair.a.t) / dt, 0.0, 1.0);
    hermite(s, H);

    for (int a1 = 0; a1 <= order; ++a1)
        for (int a2 = 0; a1 + a2 <= order; ++a2)
            for (int a3 = 0; a1 + a2 + a3 <= order; ++a3) {
                const int sp = Jet::slot(0, a1, a2, a3);
                const int rem = order - (a1 + a2 + a3);
                for (int m = 0; m <= rem; ++m) {
                    double val;
                    if (single) {
                        val = m == 0 ? pa[sp] : m == 1 ? qa[sp] : m == 2 ? aa[sp] : 0.0;
                    } else if (m == 0) {
                        val = H[0][0] * pa[sp] + H[0][1] * dt * qa[sp] + H[0][2] * pb[sp] + H[0][3] * dt * qb[sp];
                    } else {
                        const int k = m - 1;
                        const double scale = std::pow(dt, -k);
                        val = scale * (H[k][0] * qa[sp] + H[k][1] * dt * aa[sp] + H[k][2] * qb[sp] +
                                       H[k][3] * dt * ab[sp]);
                    }
                    jet.at(m, a1, a2, a3) = val;
                }
            }
    return jet;
}

InterpValue interp(const LevelPair& pair, const geometry::SpacetimePoint& pt) {
    const Jet j = interp_jet(pair, pt.t, pt.x, 1);
    return {j.value(), j.gradient()};
}

}  // namespace qw::foliation
