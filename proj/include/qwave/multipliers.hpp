#pragma once

#include "qwave/evolve.hpp"
#include "qwave/foliation.hpp"
#include "qwave/geometry.hpp"

#include <functional>
#include <string>
#include <vector>

namespace qw::multipliers {

using foliation::GridSpec;

// T_{mu nu} = d_mu phi d_nu phi - 1/2 g_{mu nu} g^{ab} d_a phi d_b phi (lower indices).
Mat4 stress_energy(const Vec4& dphi, const Mat4& ginv);
Mat4 stress_energy(const Vec4& dphi, const Mat4& ginv, const Mat4& g_lower);

// f = 2/alpha (1 - (1+r)^{-alpha}), chi = f / r, with derivatives in r.
struct MorawetzValues {
    double f = 0.0, fp = 0.0, fpp = 0.0;
    double chi = 0.0, chip = 0.0, chipp = 0.0;
    double identity = 0.0;  // chi - f / r + f' / 2, equal to (1+r)^{-1-alpha}
};
MorawetzValues morawetz_multiplier(double alpha, double r);

enum class MultiplierKind { Dt, Rotation, Morawetz, PWeight, Custom };

// X^gamma and dX(mu, gamma) = d_mu X^gamma.
struct VectorJet {
    Vec4 X = Vec4::Zero();
    Mat4 dX = Mat4::Zero();
};

struct ScalarJet {
    double value = 0.0;
    Vec4 d = Vec4::Zero();
    Mat4 dd = Mat4::Zero();
};

class RadiusError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// X = r^p (-2 d^{Lbar} + g^{Lbar Lbar} Lbar) with d^{Lbar} = g^{Lbar A} A summed over the whole null frame.
Vec4 pweight_vector(double p, const Vec3& x, const Mat4& ginv);
// Same, evaluated on the background metric; throws RadiusError for r < R.
Vec4 pweight_vector(double p, const geometry::SpacetimePoint& pt, const geometry::MetricSpec& metric, double R);

struct MultiplierSpec {
    MultiplierKind kind = MultiplierKind::Dt;
    double alpha = 0.1;  // Morawetz
    double p = 0.0;      // p-weight exponent
    double R = 0.0;      // p-weight: defined for r >= R
    int rot_a = 1, rot_b = 2;  // Omega_ab = x_a d_b - x_b d_a, spatial indices 1..3
    geometry::MetricSpec metric = geometry::MetricSpec::flat();
    std::function<Vec4(double, const Vec3&)> custom_X;
    std::function<double(double, const Vec3&)> custom_chi;
    double fd_step = 1e-4;  // relative step (times 1 + r) for finite-difference derivatives

    static MultiplierSpec dt();
    static MultiplierSpec rotation(int a, int b);
    static MultiplierSpec morawetz(double alpha);
    static MultiplierSpec pweight(double p, const geometry::MetricSpec& metric, double R);
    static MultiplierSpec custom(std::function<Vec4(double, const Vec3&)> X,
                                 std::function<double(double, const Vec3&)> chi = {});

    std::string name() const;
    bool exact_derivatives() const;
    Vec4 vector(double t, const Vec3& x) const;
    VectorJet vector_jet(double t, const Vec3& x) const;
    ScalarJet chi(double t, const Vec3& x) const;
};

// pi^X_{mu nu} = 1/2 (X^gamma d_gamma g_{mu nu} + g_{gamma nu} d_mu X^gamma + g_{mu gamma} d_nu X^gamma).
Mat4 deformation(const MultiplierSpec& X, const geometry::MetricSpec& metric, double t, const Vec3& x);

struct CurrentBundle {
    Mat4 T = Mat4::Zero();          // lower indices
    Vec4 J_lower = Vec4::Zero();    // modified current, lower index
    Vec4 J = Vec4::Zero();          // modified current, upper index
    double K = 0.0;                 // T^{mu nu} pi_{mu nu}
    double density = 0.0;           // divergence of the modified current
    double sqrt_minus_G = 1.0;
    double divergence_residual = 0.0;  // FD divergence minus density (jet input of order >= 2 only)
};

// Currents of phi at (t, x). box_phi is Box_g phi at the point.
CurrentBundle currents(const MultiplierSpec& X, const geometry::MetricSpec& metric, double t, const Vec3& x,
                       double phi, const Vec4& dphi, double box_phi);
// Same from a local jet; also fills the pointwise divergence residual with Box_g phi taken from the jet.
CurrentBundle currents(const MultiplierSpec& X, const geometry::MetricSpec& metric, const foliation::Jet& jet);

// Box_g phi = g^{mu nu} d_mu d_nu phi + N^nu d_nu phi from a jet of order >= 2.
double box_from_jet(const geometry::MetricSpec& metric, const foliation::Jet& jet);

// Region between Sigma_tau1 and Sigma_tau2, cut by the incoming cone v = v_c.
enum class AuditRegion { Slab, ConeOnly };

struct AuditOptions {
    double tau1 = 5.0, tau2 = 15.0;
    double v_c = 0.0;       // 0: (tau2 + R) / 2
    double dtau = 0.0;      // 0: dx / 2
    double dv = 0.0;        // 0: dx
    int sphere_degree = 11;
    int ball_radial = 24;
    AuditRegion region = AuditRegion::Slab;
};

struct AuditPlan {
    AuditOptions opt;
    geometry::DecayParams params;
    GridSpec grid;
    std::vector<double> tau_nodes, tau_weights;
    std::vector<foliation::FoliationLeaf> leaves;  // one per tau node
    foliation::SphereQuadrature quad;
    // Flat list of sample points: per leaf [ball nodes at t = tau][cone nodes][incoming ring][cylinder ring].
    std::vector<geometry::SpacetimePoint> points;
    std::vector<std::size_t> leaf_offset;
};

AuditPlan make_audit_plan(const geometry::DecayParams& params, const GridSpec& grid, const AuditOptions& opt);

struct AuditTerms {
    double bulk = 0.0;
    double flux1 = 0.0, flux2 = 0.0;  // -(oriented boundary integral) on Sigma_tau1, Sigma_tau2
    double incoming = 0.0;
    double cylinder = 0.0;            // ConeOnly region: flux through r = R
    double boundary = 0.0;            // flux1 - flux2 + incoming - cylinder
    double scale = 0.0;               // |bulk| + |flux1| + |flux2| + |incoming| + |cylinder|
    double residual = 0.0;
    double ile_bulk = 0.0;            // integral of (1+r)^{-1-alpha} |dbar phi|^2 over the region
};

inline constexpr double kAuditFloor = 1e-14;

AuditTerms evaluate_audit(const AuditPlan& plan, const std::vector<foliation::Jet>& jets, const MultiplierSpec& X,
                          const evolve::EquationSpec& eq);

struct AuditReport {
    std::string multiplier;
    std::string region;
    std::vector<double> resolutions;
    std::vector<AuditTerms> terms;
    double order = 0.0;  // least-squares slope of log residual against log dx

    void add(double dx, const AuditTerms& t);
    std::string to_json() const;
};

}  // namespace qw::multipliers
