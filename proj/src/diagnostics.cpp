#include "qwave/diagnostics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <ostream>
#include <cmath>
#include <numeric>

namespace qw::diagnostics {

JetRecorder::JetRecorder(std::vector<geometry::SpacetimePoint> points, int order)
    : points_(std::move(points)), jet_order_(order) {
    if (order < 0 || order > Jet::kMaxOrder) throw std::invalid_argument("jet order must be in [0, 3]");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return points_[a].t < points_[b].t; });
    jets_.resize(points_.size());
}

void JetRecorder::on_pair(const foliation::LevelPair& pair) {
    constexpr double eps = 1e-12;
    std::size_t end = next_;
    while (end < order_.size() && points_[order_[end]].t <= pair.b.t + eps) ++end;
    if (end == next_) return;
    if (points_[order_[next_]].t < pair.a.t - eps)
        throw OutOfWindowError("jet requested before the first stored level");
    const long count = static_cast<long>(end - next_);
    const std::size_t first = next_;
#pragma omp parallel for schedule(static)
    for (long q = 0; q < count; ++q) {
        const std::size_t i = order_[first + q];
        const double t = std::clamp(points_[i].t, pair.a.t, pair.b.t);
        jets_[i] = foliation::interp_jet(pair, t, points_[i].x, jet_order_);
        jets_[i].t = points_[i].t;
    }
    next_ = end;
}

const std::vector<Jet>& JetRecorder::jets() const {
    if (!complete()) throw OutOfWindowError("some requested points lie beyond the stored history");
    return jets_;
}

}  // namespace qw::diagnostics

namespace qw::diagnostics {

namespace {

constexpr double kRFloor = 1e-8;

}  // namespace

std::vector<ZWord> z_words(int k) {
    if (k < 0) throw std::invalid_argument("word length must be >= 0");
    std::vector<ZWord> out{ZWord{}};
    std::vector<ZWord> layer{ZWord{}};
    for (int len = 1; len <= k; ++len) {
        std::vector<ZWord> next;
        for (const ZWord& w : layer)
            for (int g = 0; g < 4; ++g) {
                ZWord v = w;
                v.push_back(g);
                next.push_back(v);
            }
        out.insert(out.end(), next.begin(), next.end());
        layer = std::move(next);
    }
    return out;
}

std::string word_name(const ZWord& w) {
    static const char* names[4] = {"t", "O12", "O13", "O23"};
    if (w.empty()) return "phi";
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) s += ".";
        s += names[w[i]];
    }
    return s;
}

Jet apply_word(const Jet& jet, const ZWord& w) {
    Jet j = jet;
    for (int g : w) {
        if (j.order < 1) throw std::invalid_argument("jet order too low for the word " + word_name(w));
        j = j.apply_generator(g);
    }
    return j;
}

FrameDerivs frame_derivs(const Jet& jet) {
    const Vec4 d = jet.gradient();
    const double r = std::max(jet.x.norm(), kRFloor);
    const Vec3 w = jet.x / r;
    const Vec3 g = d.tail<3>();
    const double dr = w.dot(g);
    FrameDerivs f;
    f.L = d[0] + dr;
    f.Lbar = d[0] - dr;
    f.angular2 = std::max(0.0, g.squaredNorm() - dr * dr);
    f.grad2 = d.squaredNorm();
    return f;
}

namespace {

// d_mu (d_t f + s omega . grad f) for s = +1 (L) or -1 (Lbar).
Vec4 d_null(const Jet& jet, double s) {
    const Mat4 H = jet.hessian();
    const Vec4 d = jet.gradient();
    const double r = std::max(jet.x.norm(), kRFloor);
    const Vec3 w = jet.x / r;
    const Vec3 g = d.tail<3>();
    const Vec3 proj = (g - w * w.dot(g)) / r;  // d_j omega_i f_i
    Vec4 out;
    for (int mu = 0; mu < 4; ++mu) out[mu] = H(0, mu) + s * w.dot(H.block<3, 1>(1, mu));
    out.tail<3>() += s * proj;
    return out;
}

}  // namespace

double d_lbar2(const Jet& jet) { return d_null(jet, -1.0).squaredNorm(); }

double d_good2(const Jet& jet) {
    double sum = d_null(jet, 1.0).squaredNorm();
    const Mat4 H = jet.hessian();
    const Vec4 d = jet.gradient();
    const double r = std::max(jet.x.norm(), kRFloor);
    const Vec3& x = jet.x;
    static const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& p : pairs) {
        const int a = p[0], b = p[1];
        const double om = x[a] * d[b + 1] - x[b] * d[a + 1];
        Vec4 dom;
        for (int mu = 0; mu < 4; ++mu) dom[mu] = x[a] * H(b + 1, mu) - x[b] * H(a + 1, mu);
        dom[a + 1] += d[b + 1];
        dom[b + 1] -= d[a + 1];
        Vec4 dr = Vec4::Zero();
        dr.tail<3>() = x / r;
        sum += (dom / r - om * dr / (r * r)).squaredNorm();
    }
    return sum;
}

// ---------------------------------------------------------------- grid operators

namespace {

struct Stencil {
    const GridSpec& g;
    int order;
    double dx;

    // d/dx_axis of f at cell (i, j, k).
    double d1(const double* f, int i, int j, int k, int axis) const {
        int c[3] = {i, j, k};
        const int n = g.n;
        const std::size_t stride = axis == 0 ? std::size_t(n) * n : (axis == 1 ? std::size_t(n) : 1);
        const std::size_t idx = g.index(i, j, k);
        const int p = c[axis];
        if (order >= 4 && p >= 2 && p <= n - 3)
            return (f[idx - 2 * stride] - 8.0 * f[idx - stride] + 8.0 * f[idx + stride] - f[idx + 2 * stride]) /
                   (12.0 * dx);
        if (p >= 1 && p <= n - 2) return (f[idx + stride] - f[idx - stride]) / (2.0 * dx);
        if (p == 0) return (-3.0 * f[idx] + 4.0 * f[idx + stride] - f[idx + 2 * stride]) / (2.0 * dx);
        return (3.0 * f[idx] - 4.0 * f[idx - stride] + f[idx - 2 * stride]) / (2.0 * dx);
    }

    // Interior second derivatives (cell at least two cells from the edge).
    double d2(const double* f, std::size_t idx, std::size_t stride) const {
        if (order >= 4)
            return (-f[idx - 2 * stride] + 16.0 * f[idx - stride] - 30.0 * f[idx] + 16.0 * f[idx + stride] -
                    f[idx + 2 * stride]) /
                   (12.0 * dx * dx);
        return (f[idx - stride] - 2.0 * f[idx] + f[idx + stride]) / (dx * dx);
    }

    double d1s(const double* f, std::size_t idx, std::size_t stride) const {
        if (order >= 4)
            return (f[idx - 2 * stride] - 8.0 * f[idx - stride] + 8.0 * f[idx + stride] - f[idx + 2 * stride]) /
                   (12.0 * dx);
        return (f[idx + stride] - f[idx - stride]) / (2.0 * dx);
    }

    double mixed(const double* f, std::size_t idx, std::size_t s1, std::size_t s2) const {
        if (order >= 4) {
            static const double w[5] = {1.0, -8.0, 0.0, 8.0, -1.0};
            double acc = 0.0;
            for (int a = 0; a < 5; ++a)
                for (int b = 0; b < 5; ++b) {
                    if (w[a] == 0.0 || w[b] == 0.0) continue;
                    const std::ptrdiff_t off = (a - 2) * std::ptrdiff_t(s1) + (b - 2) * std::ptrdiff_t(s2);
                    acc += w[a] * w[b] * f[static_cast<std::ptrdiff_t>(idx) + off];
                }
            return acc / (144.0 * dx * dx);
        }
        return (f[idx + s1 + s2] - f[idx + s1 - s2] - f[idx - s1 + s2] + f[idx - s1 - s2]) / (4.0 * dx * dx);
    }
};

void decode(const GridSpec& g, std::size_t idx, int& i, int& j, int& k) {
    const std::size_t n = g.n;
    i = static_cast<int>(idx / (n * n));
    j = static_cast<int>((idx / n) % n);
    k = static_cast<int>(idx % n);
}

}  // namespace

void grid_gradient(const GridSpec& grid, const std::vector<double>& f, int fd_order, std::vector<double>& gx,
                   std::vector<double>& gy, std::vector<double>& gz) {
    const Stencil st{grid, fd_order, grid.dx()};
    gx.assign(grid.size(), 0.0);
    gy.assign(grid.size(), 0.0);
    gz.assign(grid.size(), 0.0);
    const int n = grid.n;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const std::size_t c = grid.index(i, j, k);
                gx[c] = st.d1(f.data(), i, j, k, 0);
                gy[c] = st.d1(f.data(), i, j, k, 1);
                gz[c] = st.d1(f.data(), i, j, k, 2);
            }
}

namespace {

std::vector<double> rotate_field(const GridSpec& grid, const std::vector<double>& f, int gen, int fd_order) {
    static const int axes[4][2] = {{-1, -1}, {0, 1}, {0, 2}, {1, 2}};
    const int a = axes[gen][0], b = axes[gen][1];
    const Stencil st{grid, fd_order, grid.dx()};
    std::vector<double> out(grid.size());
    const int n = grid.n;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const Vec3 x = grid.position(i, j, k);
                out[grid.index(i, j, k)] =
                    x[a] * st.d1(f.data(), i, j, k, b) - x[b] * st.d1(f.data(), i, j, k, a);
            }
    return out;
}

}  // namespace

GridField commuted(const GridSpec& grid, const foliation::LevelView& now, const foliation::LevelView* previous,
                   const ZWord& w, int fd_order) {
    const std::size_t size = grid.size();
    int n_t = 0;
    for (int g : w) {
        if (g < 0 || g > 3) throw std::invalid_argument("Z generator code must be in 0..3");
        if (g == 0) ++n_t;
    }
    if (n_t > 2) throw InsufficientLevelsError("at most two d_t letters are supported");
    GridField out;
    auto copy = [&](const double* p) { return std::vector<double>(p, p + size); };
    if (n_t == 0) {
        out.phi = copy(now.phi);
        out.pi = copy(now.pi);
    } else if (n_t == 1) {
        if (!now.acc) throw InsufficientLevelsError("d_t needs the stored acceleration");
        out.phi = copy(now.pi);
        out.pi = copy(now.acc);
    } else {
        if (!now.acc || !previous || !previous->acc || !(now.t > previous->t))
            throw InsufficientLevelsError("a second d_t needs a previous time level");
        out.phi = copy(now.acc);
        out.pi.resize(size);
        const double inv = 1.0 / (now.t - previous->t);
        for (std::size_t c = 0; c < size; ++c) out.pi[c] = (now.acc[c] - previous->acc[c]) * inv;
    }
    // d_t commutes with every rotation, so only the rotation letters remain to be applied in order.
    for (int g : w) {
        if (g == 0) continue;
        out.phi = rotate_field(grid, out.phi, g, fd_order);
        out.pi = rotate_field(grid, out.pi, g, fd_order);
    }
    return out;
}

// ---------------------------------------------------------------- cone functionals

namespace {

std::vector<double> cone_values(const ConeData& c, const std::function<double(const foliation::ConeSample&, const Jet&)>& f) {
    if (!c.leaf || !c.jets || c.jets->size() != c.leaf->cone.size())
        throw std::invalid_argument("cone data: one jet per cone sample required");
    std::vector<double> v(c.leaf->cone.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(c.leaf->cone[i], (*c.jets)[i]);
    return v;
}

double cone_sum(const ConeData& c, const std::function<double(const foliation::ConeSample&, const Jet&)>& f) {
    return foliation::cone_integral(*c.leaf, cone_values(c, f));
}

}  // namespace

double cone_energy(const ConeData& c) {
    return cone_sum(c, [](const foliation::ConeSample&, const Jet& j) {
        const FrameDerivs f = frame_derivs(j);
        return f.L * f.L + f.angular2;
    });
}

double weighted_cone_s(const ConeData& c, double a) {
    return cone_sum(c, [a](const foliation::ConeSample& s, const Jet& j) {
        return std::pow(1.0 + s.r, -1.0 - a) * frame_derivs(j).grad2;
    });
}

double weighted_cone_g(const ConeData& c, double p, bool bar) {
    return cone_sum(c, [p, bar](const foliation::ConeSample& s, const Jet& j) {
        const FrameDerivs f = frame_derivs(j);
        const double dvpsi = j.value() + s.r * f.L;
        double v = dvpsi * dvpsi;
        if (bar) v += s.r * s.r * f.angular2;
        return std::pow(s.r, p) * v / (s.r * s.r);  // cone_integral supplies r^2
    });
}

LemmaReport lemma_checks(const ConeData& c, double disc_phi_weighted, double disc_phi2, double e_tilde,
                         const geometry::DecayParams& p) {
    LemmaReport rep;
    const FoliationLeaf& leaf = *c.leaf;
    const auto& jets = *c.jets;
    auto ratio = [](double num, double den) {
        if (num == 0.0) return 0.0;
        return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
    };
    // Sphere averages per v-node.
    std::vector<double> sphere(leaf.v_nodes.size(), 0.0), radius(leaf.v_nodes.size(), 0.0);
    for (std::size_t i = 0; i < leaf.cone.size(); ++i) {
        const auto& s = leaf.cone[i];
        const double ph = jets[i].value();
        sphere[s.iv] += leaf.quad.weights[s.iw] * ph * ph;
        radius[s.iv] = s.r;
    }
    double lem1 = 0.0;
    for (std::size_t v = 0; v < sphere.size(); ++v) lem1 = std::max(lem1, radius[v] * sphere[v]);
    rep.lem1 = ratio(lem1, 4.0 * e_tilde);
    const double cone_w = cone_sum(c, [](const foliation::ConeSample& s, const Jet& j) {
        const double q = j.value() / (1.0 + s.r);
        return q * q;
    });
    rep.lem2 = ratio(disc_phi_weighted + cone_w, 12.0 * e_tilde);
    rep.lem2_corollary = ratio(disc_phi2, 12.0 * (1.0 + p.R) * (1.0 + p.R) * e_tilde);
    rep.lempphi2_lhs = cone_sum(c, [&](const foliation::ConeSample& s, const Jet& j) {
        return std::pow(s.r, 1.0 - p.alpha1) * j.value() * j.value() / (s.r * s.r);
    });
    rep.lempphi2_rhs = std::pow(p.R, 1.0 - p.alpha1) * e_tilde + weighted_cone_g(c, 1.0 + p.alpha2);
    rep.lempphi2 = ratio(rep.lempphi2_lhs, rep.lempphi2_rhs);
    return rep;
}

double EnvelopeRecord::max_ratio() const { return std::max({out_lbar, out_good, in_out, in_in}); }

}  // namespace qw::diagnostics

// ---------------------------------------------------------------- ledger observer

namespace qw::diagnostics {

namespace {

constexpr double kLeafMatch = 1e-9;

double box_at(const evolve::EquationSpec& eq, const Jet& j) {
    return evolve::box_from_equation(eq, j.t, j.x, j.gradient(), j.hessian());
}

// Antiderivative of (1+x)^e.
double power_antiderivative(double e, double x) {
    if (std::abs(e + 1.0) < 1e-14) return std::log1p(x);
    return std::pow(1.0 + x, e + 1.0) / (e + 1.0);
}

}  // namespace

LedgerObserver::LedgerObserver(const LedgerOptions& opt, const evolve::EquationSpec& eq) : opt_(opt), eq_(eq) {
    if (opt_.leaf_times.empty()) throw std::invalid_argument("ledger needs at least one leaf time");
    for (std::size_t i = 1; i < opt_.leaf_times.size(); ++i)
        if (!(opt_.leaf_times[i] > opt_.leaf_times[i - 1]))
            throw std::invalid_argument("ledger leaf times must be strictly increasing");
    if (opt_.k_max < 0 || opt_.k_max > 2) throw std::invalid_argument("k_max must be in 0..2");
    quad_ = foliation::SphereQuadrature::make(opt_.sphere_degree);
    const double t_end = opt_.leaf_times.back();
    const double R = opt_.params.R;
    if (opt_.envelopes) {
        const int nr = std::max(2, opt_.envelope_radial);
        for (int i = 0; i < nr; ++i) shell_radii_.push_back(1.0 + (R - 1.0) * i / (nr - 1));
        inner_points_.push_back(Vec3::Zero());
        for (double r : {0.5, 1.0})
            for (const Vec3& w : quad_.nodes) inner_points_.push_back(r * w);
    }
    std::vector<geometry::SpacetimePoint> pts;
    for (double tau : opt_.leaf_times) {
        foliation::LeafOptions lo;
        lo.dv = opt_.dv;
        lo.t_available = t_end;
        lo.subcells = opt_.subcells;
        lo.ball_radial = opt_.k_max >= 1 ? opt_.ball_radial : 0;
        FoliationLeaf leaf = foliation::make_leaf(tau, opt_.params, opt_.grid, quad_, lo);
        offset_cone_.push_back(pts.size());
        for (const auto& c : leaf.cone) pts.push_back({c.t, c.x});
        offset_ball_.push_back(pts.size());
        for (const auto& b : leaf.ball) pts.push_back({tau, b.x});
        offset_shell_.push_back(pts.size());
        for (double r : shell_radii_)
            for (const Vec3& w : quad_.nodes) pts.push_back({tau, r * w});
        offset_inner_.push_back(pts.size());
        for (const Vec3& x : inner_points_) pts.push_back({tau, x});
        offset_end_.push_back(pts.size());
        leaves_.push_back(std::move(leaf));
    }
    const int order = (opt_.k_max >= 2 || opt_.envelopes || opt_.probe) ? 3 : 2;
    recorder_ = std::make_unique<JetRecorder>(std::move(pts), order);
    disc_.resize(leaves_.size());
    const double dx = opt_.grid.dx();
    dx3_ = dx * dx * dx;
}

void LedgerObserver::on_pair(const foliation::LevelPair& pair) { recorder_->on_pair(pair); }

void LedgerObserver::on_leaf(double t, const foliation::LevelView& level, const GridSpec& grid) {
    const double alpha = opt_.params.alpha;
    const Stencil st{grid, opt_.fd_order, grid.dx()};
    const std::size_t n = grid.n;
    const std::size_t strides[3] = {n * n, n, 1};
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
        if (std::abs(leaves_[k].tau - t) > kLeafMatch * std::max(1.0, t)) continue;
        DiscSums s;
        for (const auto& d : leaves_[k].disc) {
            int i, j, l;
            decode(grid, d.index, i, j, l);
            const std::size_t c = d.index;
            const Vec3 x = grid.position(i, j, l);
            const double r = x.norm();
            Vec4 dphi(level.pi[c], st.d1(level.phi, i, j, l, 0), st.d1(level.phi, i, j, l, 1),
                      st.d1(level.phi, i, j, l, 2));
            const double ph = level.phi[c];
            const double g2 = dphi.squaredNorm();
            const double rp = 1.0 + r;
            s.energy += d.weight * g2;
            s.phi_w += d.weight * (ph / rp) * (ph / rp);
            s.phi2 += d.weight * ph * ph;
            s.ile += d.weight * std::pow(rp, -1.0 - alpha) * (g2 + ph * ph / (rp * rp));
            s.ile_eps += d.weight * std::pow(rp, -1.0 - opt_.params.epsilon) * (g2 + ph * ph / (rp * rp));
            Mat4 H;
            H(0, 0) = level.acc ? level.acc[c] : 0.0;
            for (int a = 0; a < 3; ++a) {
                H(0, a + 1) = H(a + 1, 0) = st.d1(level.pi, i, j, l, a);
                H(a + 1, a + 1) = st.d2(level.phi, c, strides[a]);
                for (int b = 0; b < a; ++b)
                    H(a + 1, b + 1) = H(b + 1, a + 1) = st.mixed(level.phi, c, strides[a], strides[b]);
            }
            const double F = evolve::box_from_equation(eq_, t, x, dphi, H);
            s.dalpha += d.weight * std::pow(rp, 1.0 + alpha) * F * F;
        }
        disc_[k] = s;
    }
    if (std::abs(t - opt_.leaf_times.back()) <= kLeafMatch * std::max(1.0, t)) {
        std::vector<double> ph(level.phi, level.phi + grid.size()), gx, gy, gz;
        grid_gradient(grid, ph, opt_.fd_order, gx, gy, gz);
        std::vector<std::pair<double, double>> cells(grid.size());
        for (int i = 0; i < grid.n; ++i)
            for (int j = 0; j < grid.n; ++j)
                for (int l = 0; l < grid.n; ++l) {
                    const std::size_t c = grid.index(i, j, l);
                    const double e = level.pi[c] * level.pi[c] + gx[c] * gx[c] + gy[c] * gy[c] + gz[c] * gz[c];
                    cells[c] = {grid.position(i, j, l).norm(), e * dx3_};
                }
        std::sort(cells.begin(), cells.end());
        far_r_.resize(cells.size());
        far_cum_.assign(cells.size() + 1, 0.0);
        for (std::size_t c = cells.size(); c-- > 0;) {
            far_r_[c] = cells[c].first;
            far_cum_[c] = far_cum_[c + 1] + cells[c].second;
        }
        // Keep the per-cell energies for the partial band.
        far_e_.resize(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) far_e_[c] = cells[c].second;
        finished_ = true;
    }
}

double LedgerObserver::far_energy(double r_cut) const {
    const double h = 0.5 * opt_.grid.dx();
    auto lo = std::lower_bound(far_r_.begin(), far_r_.end(), r_cut - h) - far_r_.begin();
    auto hi = std::lower_bound(far_r_.begin(), far_r_.end(), r_cut + h) - far_r_.begin();
    double e = far_cum_[hi];
    for (auto c = lo; c < hi; ++c) e += far_e_[c] * std::clamp(0.5 + (far_r_[c] - r_cut) / (2.0 * h), 0.0, 1.0);
    return e;
}

EnergyLedger LedgerObserver::ledger() const {
    if (!finished_) throw OutOfWindowError("ledger requested before the run reached its last leaf");
    const auto& jets = recorder_->jets();
    const auto& p = opt_.params;
    EnergyLedger led;
    led.params = p;
    led.k_max = opt_.k_max;
    led.e_tilde_approximate = !opt_.causal_domain;
    const std::vector<ZWord> words = z_words(2);
    const geometry::EnvelopeH env{opt_.envelope_delta0, p.alpha};
    for (std::size_t k = 0; k < leaves_.size(); ++k) {
        const FoliationLeaf& leaf = leaves_[k];
        if (!leaf.time_limited) led.e_tilde_approximate = true;
        const std::vector<Jet> cj(jets.begin() + offset_cone_[k], jets.begin() + offset_ball_[k]);
        const ConeData c{&leaf, &cj};
        const DiscSums& d = disc_[k];
        LeafRecord rec;
        rec.tau = leaf.tau;
        rec.r_cut = leaf.r_cut();
        rec.E = d.energy + cone_energy(c);
        rec.E_far = far_energy(rec.r_cut);
        rec.E_tilde = rec.E + rec.E_far;
        rec.S_alpha = weighted_cone_s(c, p.alpha);
        rec.S_eps = weighted_cone_s(c, p.epsilon);
        rec.g_0 = weighted_cone_g(c, 0.0);
        rec.g_1 = weighted_cone_g(c, 1.0);
        rec.g_1a1 = weighted_cone_g(c, 1.0 + p.alpha1);
        rec.g_1me = weighted_cone_g(c, 1.0 - p.epsilon);
        rec.g_1a2 = weighted_cone_g(c, 1.0 + p.alpha2);
        rec.gbar_1 = weighted_cone_g(c, 1.0, true);
        rec.gbar_1a1 = weighted_cone_g(c, 1.0 + p.alpha1, true);
        rec.ile_density = d.ile + cone_sum(c, [&](const foliation::ConeSample& s, const Jet& j) {
            const double rp = 1.0 + s.r;
            return std::pow(rp, -1.0 - p.alpha) * (frame_derivs(j).grad2 + j.value() * j.value() / (rp * rp));
        });
        rec.ile_eps_density = d.ile_eps + cone_sum(c, [&](const foliation::ConeSample& s, const Jet& j) {
            const double rp = 1.0 + s.r;
            return std::pow(rp, -1.0 - p.epsilon) * (frame_derivs(j).grad2 + j.value() * j.value() / (rp * rp));
        });
        rec.dalpha_density = d.dalpha + cone_sum(c, [&](const foliation::ConeSample& s, const Jet& j) {
            const double F = box_at(eq_, j);
            return std::pow(1.0 + s.r, 1.0 + p.alpha) * F * F;
        });
        const LemmaReport lr = lemma_checks(c, d.phi_w, d.phi2, rec.E_tilde, p);
        rec.lem1 = lr.lem1;
        rec.lem2 = lr.lem2;
        rec.lem2_corollary = lr.lem2_corollary;
        rec.lempphi2 = lr.lempphi2;
        rec.lempphi2_lhs = lr.lempphi2_lhs;
        rec.lempphi2_rhs = lr.lempphi2_rhs;
        // g^0 against the integrated-by-parts form: int r^2 |d_v phi|^2 + [r phi^2] between the end circles.
        if (leaf.v_nodes.size() >= 2) {
            const double lhs = rec.g_0;
            const double bulk = cone_sum(c, [](const foliation::ConeSample&, const Jet& j) {
                const double L = frame_derivs(j).L;
                return L * L;
            });
            double outer = 0.0, inner = 0.0;
            const int last = static_cast<int>(leaf.v_nodes.size()) - 1;
            for (std::size_t i = 0; i < leaf.cone.size(); ++i) {
                const auto& s = leaf.cone[i];
                const double term = leaf.quad.weights[s.iw] * s.r * cj[i].value() * cj[i].value();
                if (s.iv == last) outer += term;
                if (s.iv == 0) inner += term;
            }
            const double rhs = bulk + outer - inner;
            // Outgoing waves make g^0 nearly vanish by cancellation, so scale by the separate terms.
            const double scale = std::abs(lhs) + bulk + outer + inner;
            rec.g0_ibp_mismatch = scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
            rec.g0_ibp_scale = scale;
        }
        rec.E_commuted.push_back(rec.E);
        for (int kk = 1; kk <= opt_.k_max; ++kk) {
            double e = 0.0;
            std::vector<Jet> wj(cj.size());
            for (const ZWord& w : words) {
                if (static_cast<int>(w.size()) != kk) continue;
                for (std::size_t i = 0; i < cj.size(); ++i) wj[i] = apply_word(cj[i], w);
                e += cone_energy(ConeData{&leaf, &wj});
                std::vector<double> vals(leaf.ball.size());
                for (std::size_t b = 0; b < leaf.ball.size(); ++b)
                    vals[b] = frame_derivs(apply_word(jets[offset_ball_[k] + b], w)).grad2;
                e += foliation::ball_integral(leaf, vals);
            }
            rec.E_commuted.push_back(e);
        }
        led.leaves.push_back(rec);

        if (opt_.envelopes || opt_.probe) {
            const std::size_t nv = leaf.v_nodes.size();
            std::vector<double> out_l(nv, 0.0), out_g(nv, 0.0), rad(nv, 0.0), tv(nv, 0.0);
            std::vector<ProbeRow> rows(nv);
            for (std::size_t i = 0; i < leaf.cone.size(); ++i) {
                const auto& s = leaf.cone[i];
                double lsum = 0.0, gsum = 0.0, phi_abs = 0.0, lbar_abs = 0.0, good_abs = 0.0;
                for (const ZWord& w : words) {
                    const Jet z = apply_word(cj[i], w);
                    const FrameDerivs f = frame_derivs(z);
                    lsum += f.Lbar * f.Lbar;
                    gsum += f.L * f.L + f.angular2;
                    phi_abs += std::abs(z.value());
                    lbar_abs += std::abs(f.Lbar);
                    good_abs += std::sqrt(f.L * f.L + f.angular2);
                    if (w.size() <= 1) {
                        const double dl = d_lbar2(z), dg = d_good2(z);
                        lsum += dl;
                        gsum += dg;
                        lbar_abs += std::sqrt(dl);
                        good_abs += std::sqrt(dg);
                    }
                }
                out_l[s.iv] += leaf.quad.weights[s.iw] * lsum;
                out_g[s.iv] += leaf.quad.weights[s.iw] * gsum;
                rad[s.iv] = s.r;
                tv[s.iv] = s.t;
                ProbeRow& row = rows[s.iv];
                row.phi = std::max(row.phi, phi_abs);
                row.lbar = std::max(row.lbar, lbar_abs);
                row.good = std::max(row.good, good_abs);
            }
            if (opt_.envelopes) {
                EnvelopeRecord er;
                er.tau = leaf.tau;
                for (std::size_t v = 0; v < nv; ++v) {
                    const double H = env.H(leaf.tau, rad[v]), Hb = env.Hbar(rad[v]);
                    er.out_lbar = std::max(er.out_lbar, out_l[v] / (2.0 * H * H));
                    er.out_good = std::max(er.out_good, out_g[v] / (2.0 * Hb * Hb));
                }
                auto interior = [&](const Jet& jet) {
                    double sum = 0.0;
                    for (const ZWord& w : words) {
                        const Jet z = apply_word(jet, w);
                        sum += frame_derivs(z).grad2;
                        if (w.size() <= 1) sum += z.hessian().squaredNorm();
                    }
                    return sum;
                };
                const std::size_t nq = quad_.size();
                for (std::size_t ri = 0; ri < shell_radii_.size(); ++ri) {
                    double sphere = 0.0;
                    for (std::size_t q = 0; q < nq; ++q)
                        sphere += quad_.weights[q] * interior(jets[offset_shell_[k] + ri * nq + q]);
                    const double Hb = env.Hbar(shell_radii_[ri]);
                    er.in_out = std::max(er.in_out, sphere / (2.0 * Hb * Hb));
                }
                const double d0 = opt_.envelope_delta0;
                for (std::size_t q = offset_inner_[k]; q < offset_end_[k]; ++q)
                    er.in_in = std::max(er.in_in, interior(jets[q]) / (2.0 * d0 * d0));
                led.envelopes.push_back(er);
            }
            if (opt_.probe) {
                for (std::size_t v = 0; v < nv; ++v) {
                    ProbeRow row = rows[v];
                    row.tau = leaf.tau;
                    row.r = rad[v];
                    row.t = tv[v];
                    const double rp = 1.0 + row.r;
                    const double tw = std::pow(1.0 + std::abs(row.t - row.r + p.R), -0.5 - 0.5 * p.alpha);
                    row.phi_ratio = row.phi / (std::pow(rp, -0.5) * tw);
                    row.lbar_ratio = row.lbar / (std::pow(rp, -1.0 + p.epsilon) * tw);
                    row.good_ratio = row.good / std::pow(rp, -1.5 + p.epsilon);
                    led.probe.push_back(row);
                }
            }
        }
    }
    return led;
}

// ---------------------------------------------------------------- ledger queries and output

namespace {

using Getter = std::function<double(const LeafRecord&)>;

const std::vector<std::pair<std::string, Getter>>& quantity_table() {
    static const std::vector<std::pair<std::string, Getter>> table = {
        {"E", [](const LeafRecord& r) { return r.E; }},
        {"E_far", [](const LeafRecord& r) { return r.E_far; }},
        {"E_tilde", [](const LeafRecord& r) { return r.E_tilde; }},
        {"S_alpha", [](const LeafRecord& r) { return r.S_alpha; }},
        {"S_eps", [](const LeafRecord& r) { return r.S_eps; }},
        {"g_0", [](const LeafRecord& r) { return r.g_0; }},
        {"g_1", [](const LeafRecord& r) { return r.g_1; }},
        {"g_1+alpha1", [](const LeafRecord& r) { return r.g_1a1; }},
        {"g_1-eps", [](const LeafRecord& r) { return r.g_1me; }},
        {"g_1+alpha2", [](const LeafRecord& r) { return r.g_1a2; }},
        {"gbar_1", [](const LeafRecord& r) { return r.gbar_1; }},
        {"gbar_1+alpha1", [](const LeafRecord& r) { return r.gbar_1a1; }},
        {"ile_density", [](const LeafRecord& r) { return r.ile_density; }},
        {"ile_eps_density", [](const LeafRecord& r) { return r.ile_eps_density; }},
        {"dalpha_density", [](const LeafRecord& r) { return r.dalpha_density; }},
        {"lem1", [](const LeafRecord& r) { return r.lem1; }},
        {"lem2", [](const LeafRecord& r) { return r.lem2; }},
        {"lem2_corollary", [](const LeafRecord& r) { return r.lem2_corollary; }},
        {"lempphi2", [](const LeafRecord& r) { return r.lempphi2; }},
        {"g0_ibp_mismatch", [](const LeafRecord& r) { return r.g0_ibp_mismatch; }},
        {"g0_ibp_scale", [](const LeafRecord& r) { return r.g0_ibp_scale; }},
        {"r_cut", [](const LeafRecord& r) { return r.r_cut; }},
    };
    return table;
}

std::vector<std::pair<std::string, Getter>> all_quantities(int k_max) {
    auto q = quantity_table();
    for (int k = 1; k <= k_max; ++k)
        q.emplace_back("E_Z" + std::to_string(k), [k](const LeafRecord& r) {
            return static_cast<std::size_t>(k) < r.E_commuted.size() ? r.E_commuted[k] : 0.0;
        });
    return q;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::vector<double> EnergyLedger::taus() const {
    std::vector<double> t;
    for (const auto& l : leaves) t.push_back(l.tau);
    return t;
}

std::vector<double> EnergyLedger::series(const std::string& quantity) const {
    for (const auto& [name, get] : all_quantities(k_max))
        if (name == quantity) {
            std::vector<double> v;
            for (const auto& l : leaves) v.push_back(get(l));
            return v;
        }
    throw std::invalid_argument("unknown ledger quantity '" + quantity + "'");
}

SlabRecord EnergyLedger::slab(double tau1, double tau2, double beta, double p) const {
    auto find = [&](double tau) {
        for (std::size_t i = 0; i < leaves.size(); ++i)
            if (std::abs(leaves[i].tau - tau) <= kLeafMatch * std::max(1.0, tau)) return i;
        throw std::invalid_argument("slab end is not a leaf time");
    };
    const std::size_t i1 = find(tau1), i2 = find(tau2);
    if (i1 > i2) throw std::invalid_argument("slab needs tau1 <= tau2");
    Getter gp;
    const double a1 = params.alpha1, a2 = params.alpha2, eps = params.epsilon;
    auto near = [](double x, double y) { return std::abs(x - y) < 1e-12; };
    if (near(p, 0.0))
        gp = [](const LeafRecord& r) { return r.g_0; };
    else if (near(p, 1.0))
        gp = [](const LeafRecord& r) { return r.g_1; };
    else if (near(p, 1.0 + a1))
        gp = [](const LeafRecord& r) { return r.g_1a1; };
    else if (near(p, 1.0 - eps))
        gp = [](const LeafRecord& r) { return r.g_1me; };
    else if (near(p, 1.0 + a2))
        gp = [](const LeafRecord& r) { return r.g_1a2; };
    else
        throw std::invalid_argument("g^p is recorded only for p in {0, 1, 1+alpha1, 1-eps, 1+alpha2}");
    SlabRecord s;
    s.tau1 = leaves[i1].tau;
    s.tau2 = leaves[i2].tau;
    s.beta = beta;
    s.p = p;
    for (std::size_t i = i1; i < i2; ++i) {
        const LeafRecord &A = leaves[i], &B = leaves[i + 1];
        const double a = A.tau, b = B.tau, h = b - a;
        s.I_alpha += 0.5 * h * (A.ile_density + B.ile_density);
        s.D_alpha += 0.5 * h * (A.dalpha_density + B.dalpha_density);
        // Piecewise-linear series against the exact weight (1+tau)^{-beta}.
        const double m0 = power_antiderivative(-beta, b) - power_antiderivative(-beta, a);
        const double M1 = power_antiderivative(1.0 - beta, b) - power_antiderivative(1.0 - beta, a);
        const double m1 = (M1 - (1.0 + a) * m0) / h;
        s.E_beta += A.E * (m0 - m1) + B.E * m1;
        s.G_p_beta += gp(A) * (m0 - m1) + gp(B) * m1;
    }
    return s;
}

void EnergyLedger::write_csv(std::ostream& os) const {
    os << "tau,quantity,value\n";
    const auto q = all_quantities(k_max);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        for (const auto& [name, get] : q) os << fmt(leaves[i].tau) << ',' << name << ',' << fmt(get(leaves[i])) << '\n';
        if (i < envelopes.size()) {
            const auto& e = envelopes[i];
            os << fmt(e.tau) << ",env_out_lbar," << fmt(e.out_lbar) << '\n';
            os << fmt(e.tau) << ",env_out_good," << fmt(e.out_good) << '\n';
            os << fmt(e.tau) << ",env_in_out," << fmt(e.in_out) << '\n';
            os << fmt(e.tau) << ",env_in_in," << fmt(e.in_in) << '\n';
        }
    }
}

std::string EnergyLedger::to_json() const {
    nlohmann::json j;
    j["params"] = {{"delta0", params.delta0}, {"alpha", params.alpha},   {"epsilon", params.epsilon},
                   {"alpha1", params.alpha1}, {"alpha2", params.alpha2}, {"R", params.R}};
    j["k_max"] = k_max;
    j["commuted_truncation"] = commuted_truncation;
    j["e_tilde_approximate"] = e_tilde_approximate;
    j["tau"] = taus();
    nlohmann::json q = nlohmann::json::object();
    for (const auto& [name, get] : all_quantities(k_max)) {
        std::vector<double> v;
        for (const auto& l : leaves) v.push_back(get(l));
        q[name] = v;
    }
    j["quantities"] = q;
    if (!envelopes.empty()) {
        nlohmann::json e = nlohmann::json::object();
        std::vector<double> a, b, c, d;
        for (const auto& r : envelopes) {
            a.push_back(r.out_lbar);
            b.push_back(r.out_good);
            c.push_back(r.in_out);
            d.push_back(r.in_in);
        }
        e["out_lbar"] = a;
        e["out_good"] = b;
        e["in_out"] = c;
        e["in_in"] = d;
        j["envelopes"] = e;
    }
    return j.dump(2);
}

void EnergyLedger::write_probe_csv(std::ostream& os) const {
    os << "tau,t,r,phi,lbar,good,phi_ratio,lbar_ratio,good_ratio\n";
    for (const auto& r : probe)
        os << fmt(r.tau) << ',' << fmt(r.t) << ',' << fmt(r.r) << ',' << fmt(r.phi) << ',' << fmt(r.lbar) << ','
           << fmt(r.good) << ',' << fmt(r.phi_ratio) << ',' << fmt(r.lbar_ratio) << ',' << fmt(r.good_ratio) << '\n';
}

}  // namespace qw::diagnostics
