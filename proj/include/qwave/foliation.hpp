#pragma once

#include "qwave/geometry.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace qw::foliation {

class GridTooSmallError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutOfDomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Uniform cell-centred Cartesian grid on [-half_width, half_width]^3.
struct GridSpec {
    double half_width = 16.0;
    int n = 64;

    double dx() const { return 2.0 * half_width / n; }
    double coord(int i) const { return -half_width + (i + 0.5) * dx(); }
    std::size_t size() const { return static_cast<std::size_t>(n) * n * n; }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * n + j) * n + k;
    }
    Vec3 position(int i, int j, int k) const { return Vec3(coord(i), coord(j), coord(k)); }
    // Largest radius at which the 4-point interpolation stencil stays inside the grid.
    double interp_radius() const { return half_width - 2.5 * dx(); }
    void validate() const;
};

// Gauss-Legendre nodes and weights on [a, b].
void gauss_legendre(int n, double a, double b, std::vector<double>& nodes, std::vector<double>& weights);

// Product rule: Gauss-Legendre in cos(theta) times uniform azimuth.
struct SphereQuadrature {
    int degree = 11;
    std::vector<Vec3> nodes;
    std::vector<double> weights;

    static SphereQuadrature make(int degree);
    std::size_t size() const { return nodes.size(); }
};

struct DiscNode {
    std::size_t index = 0;  // grid cell
    Vec3 x = Vec3::Zero();
    double weight = 0.0;
};

struct BallNode {
    Vec3 x = Vec3::Zero();
    double weight = 0.0;
};

struct ConeSample {
    double v = 0.0, r = 0.0, t = 0.0;
    Vec3 x = Vec3::Zero();
    Vec3 omega = Vec3::Zero();
    double weight = 0.0;  // dv weight times sphere weight; the r^2 factor is applied by cone_integral
    int iv = 0, iw = 0;
};

struct FoliationLeaf {
    double tau = 0.0;
    double R = 0.0;
    double u_tau = 0.0, v_tau = 0.0, v_max = 0.0;
    double dv = 0.0;
    bool time_limited = true;  // cone stopped by the available time rather than the grid
    std::vector<double> v_nodes, v_weights;
    SphereQuadrature quad;
    std::vector<DiscNode> disc;
    std::vector<BallNode> ball;  // optional high-order disc rule, used through interpolation
    std::vector<ConeSample> cone;

    // Radius where the cone is cut.
    double r_cut() const { return v_max - u_tau; }
};

struct LeafOptions {
    double dv = 0.0;          // default: grid dx
    double t_available = 0.0; // latest time stored for the cone
    int subcells = 8;         // per axis, for fractional disc weights
    int ball_radial = 0;      // > 0 builds the Gauss ball rule with this many radial nodes
};

FoliationLeaf make_leaf(double tau, const geometry::DecayParams& params, const GridSpec& grid,
                        const SphereQuadrature& quad, const LeafOptions& opt);

double cone_integral(const FoliationLeaf& leaf, const std::function<double(const ConeSample&)>& f);
// values[i] belongs to leaf.cone[i].
double cone_integral(const FoliationLeaf& leaf, const std::vector<double>& values);
double disc_integral(const FoliationLeaf& leaf, const std::function<double(const DiscNode&)>& f);
double ball_integral(const FoliationLeaf& leaf, const std::vector<double>& values);

void dump_leaf_csv(const FoliationLeaf& leaf, std::ostream& os);

// One stored time level: phi, pi = d_t phi and acc = d_t pi on the grid.
struct LevelView {
    double t = 0.0;
    const double* phi = nullptr;
    const double* pi = nullptr;
    const double* acc = nullptr;
};

// Two bracketing levels, a.t <= b.t.
struct LevelPair {
    const GridSpec* grid = nullptr;
    LevelView a, b;
};

// Derivatives d^alpha f(p) for all multi-indices |alpha| <= order over (t, x, y, z).
class Jet {
public:
    static constexpr int kMaxOrder = 3;
    static constexpr int kSize = 35;

    int order = 0;
    double t = 0.0;
    Vec3 x = Vec3::Zero();
    std::array<double, kSize> d{};

    static int slot(int a0, int a1, int a2, int a3);
    double at(int a0, int a1, int a2, int a3) const { return d[slot(a0, a1, a2, a3)]; }
    double& at(int a0, int a1, int a2, int a3) { return d[slot(a0, a1, a2, a3)]; }

    double value() const { return d[0]; }
    Vec4 gradient() const;
    Mat4 hessian() const;  // requires order >= 2

    // Coordinate derivative d_mu: order drops by one.
    Jet derivative(int mu) const;
    // Multiplication by the coordinate x^mu (mu >= 1).
    Jet times_coordinate(int mu) const;
    // Z generators: 0 = d_t, 1 = Omega_12, 2 = Omega_13, 3 = Omega_23.
    Jet apply_generator(int gen) const;
    Jet operator+(const Jet& o) const;
    Jet operator-(const Jet& o) const;
    Jet operator*(double s) const;
};

// Hermite-in-time local jet of the stored field; 6-point Lagrange per axis in space, 4-point near the edges.
Jet interp_jet(const LevelPair& pair, double t, const Vec3& x, int order);

struct InterpValue {
    double phi = 0.0;
    Vec4 dphi = Vec4::Zero();
};

InterpValue interp(const LevelPair& pair, const geometry::SpacetimePoint& pt);

}  // namespace qw::foliation
