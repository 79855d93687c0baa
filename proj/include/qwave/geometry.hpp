#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace qw {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

class DegeneratePointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qw

namespace qw::geometry {

// Smallness/ordering parameters of the decay analysis.
struct DecayParams {
    double delta0 = 0.01;
    double alpha = 0.1;
    double epsilon = 0.002;
    double alpha1 = 0.107;
    double alpha2 = 0.12;
    double R = 10.0;
};

struct ParamViolation {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
};

// Empty result means every ordering inequality holds.
std::vector<ParamViolation> validate_params(const DecayParams& p);

struct SpacetimePoint {
    double t = 0.0;
    Vec3 x = Vec3::Zero();

    double r() const { return x.norm(); }
    double u() const { return 0.5 * (t - r()); }
    double v() const { return 0.5 * (t + r()); }
};

// Inverse Minkowski metric diag(-1, 1, 1, 1).
Mat4 minkowski();

// h^{mu nu} and its coordinate derivatives d[gamma](mu, nu) = d_gamma h^{mu nu}.
struct MetricSample {
    Mat4 h = Mat4::Zero();
    std::array<Mat4, 4> dh{Mat4::Zero(), Mat4::Zero(), Mat4::Zero(), Mat4::Zero()};
};

enum class MetricFamily { Flat, InteriorOscillator, Static, ConstantHtt };

std::string to_string(MetricFamily f);
MetricFamily metric_family_from_string(const std::string& name);

// Analytic background perturbation of the inverse metric, g = m0 + h.
class MetricSpec {
public:
    MetricFamily family = MetricFamily::Flat;
    double delta0 = 0.0;
    double alpha = 0.1;
    double support = 0.0;    // bump radius for compact families
    double amplitude = 0.2;  // profile constant c in c (1+r)^{-1-2 alpha}
    Mat4 shape = Mat4::Zero();

    static MetricSpec flat();
    // delta0 sin(t) w(r) e^{mu nu}, w supported in r <= support.
    static MetricSpec interior_oscillator(double delta0, double alpha, double support);
    // Time independent and rotation invariant: delta0 w(r) diag(-1, 1, 1, 1).
    static MetricSpec static_bump(double delta0, double alpha, double support);
    static MetricSpec constant_htt(double delta0);

    MetricSample eval(double t, const Vec3& x) const;
    // Compact families: the spatial profile w(r) and w'(r)/r, so callers can cache it per point.
    bool radial_factors(double r, double& w, double& dw_over_r) const;
    MetricSample eval_cached(double t, const Vec3& x, double w, double dw_over_r) const;
    Mat4 h(double t, const Vec3& x) const { return eval(t, x).h; }

    bool is_flat() const { return family == MetricFamily::Flat || delta0 == 0.0; }
    bool time_independent() const { return family != MetricFamily::InteriorOscillator; }
    bool has_exact_derivatives() const { return true; }
    // h vanishes identically for r > support_radius(); infinite when not compact.
    double support_radius() const;
    // True when some h^{ij}, i != j, can be nonzero.
    bool has_spatial_offdiagonal() const;

    std::string name() const { return to_string(family); }
};

// Radial profile of the compact families: value and first two r-derivatives.
struct RadialProfile {
    double w = 0.0, dw = 0.0, d2w = 0.0;
};
RadialProfile compact_profile(double r, double alpha, double support, double amplitude);

// Lowered metric g_{mu nu} from g^{mu nu}; throws on a singular matrix.
Mat4 lower(const Mat4& ginv);

// N^nu = d_mu h^{mu nu} - 1/2 g^{mu nu} g_{ab} d_mu h^{ab}: first-order part of Box_g.
Vec4 box_first_order(const Mat4& ginv, const MetricSample& s);

struct NullFrame {
    Vec3 omega = Vec3::Zero();
    double r = 0.0;
    Vec4 L, Lbar, S1, S2;   // vectors
    Vec4 L_cov, Lbar_cov;  // covectors (1, omega), (1, -omega)
};

inline constexpr double kDefaultRFloor = 1e-8;

NullFrame null_frame_at(const SpacetimePoint& pt, double r_floor = kDefaultRFloor);
// Same frame with (S1, S2) rotated by angle theta in the tangent plane.
NullFrame rotate_tangent(const NullFrame& fr, double theta);

enum class FrameSlot { Lbar, L, S1, S2 };

// Frame covectors theta^Lbar = Lbar_mu / 2, theta^L = L_mu / 2, theta^S = S.
Vec4 frame_covector(const NullFrame& fr, FrameSlot a);
// k^{AB} = k^{mu nu} theta^A_mu theta^B_nu.
double frame_component(const Mat4& k, const NullFrame& fr, FrameSlot a, FrameSlot b);

// Constant coefficients of the quadratic terms.
struct NullFormTensor {
    std::array<double, 64> g{};  // g[(mu * 4 + nu) * 4 + gamma], symmetric in mu nu
    Mat4 A = Mat4::Zero();

    double& at(int mu, int nu, int gamma) { return g[(mu * 4 + nu) * 4 + gamma]; }
    double at(int mu, int nu, int gamma) const { return g[(mu * 4 + nu) * 4 + gamma]; }
    // Sets both (mu, nu, gamma) and (nu, mu, gamma).
    void set_sym(int mu, int nu, int gamma, double value);
    double max_coefficient() const;
    bool is_zero() const;

    static NullFormTensor zero();
    // d_t phi (d_tt phi - Laplacian phi): g^{ttt} = 1, g^{iit} = -1.
    static NullFormTensor wave_times_dt();
    // Only g^{ttt} = 1 (violates the null condition).
    static NullFormTensor ttt_only();
    static NullFormTensor from_preset(const std::string& name);
};

struct NullCheckReport {
    bool pass = false;
    double worst_residual = 0.0;  // max |cubic| or |quadratic| symbol
    double max_coefficient = 0.0;
    Vec4 worst_xi = Vec4::Zero();
    int n_directions = 0;
};

// Unit directions: n points of a Fibonacci lattice optionally rotated by a seeded rotation.
std::vector<Vec3> fibonacci_directions(int n, unsigned long long seed = 0);

NullCheckReport check_null_condition(const NullFormTensor& nf, int n_samples = 1024, double tol = 1e-12,
                                     unsigned long long seed = 0);

// Decay envelopes for the background and the bootstrap assumptions.
struct EnvelopeH {
    double delta0 = 0.0;
    double alpha = 0.1;

    double Hbar(double r) const;
    // Time-decaying term alone.
    double H_tau_part(double tau, double r) const;
    // Full envelope Hbar + tau part.
    double H(double tau, double r) const;
    // Envelope for the angular derivative of h^{Lbar Lbar}.
    double angular_improved(double tau, double r) const;
};

struct EnvelopePlan {
    std::vector<double> times{0.0, 1.0, 2.5, 5.0};  // interior times and cone parameters
    int n_radial = 24;
    int sphere_degree = 5;
    double cone_extent = 30.0;  // radial extent of each sampled cone beyond R
    int k_max = 2;
};

struct EnvelopeEntry {
    std::string name;
    double max_ratio = 0.0;
    SpacetimePoint argmax;
};

struct EnvelopeReport {
    std::vector<EnvelopeEntry> entries;
    int k_max = 2;
    bool pass() const;
    std::string to_json() const;
};

EnvelopeReport validate_envelope(const MetricSpec& spec, const DecayParams& p, const EnvelopePlan& plan = {});

}  // namespace qw::geometry
