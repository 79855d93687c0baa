#pragma once

#include "qwave/foliation.hpp"
#include "qwave/geometry.hpp"

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace qw::evolve {

using foliation::GridSpec;

class HyperbolicityLossError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FieldState {
    double t = 0.0;
    GridSpec grid;
    std::vector<double> phi, pi;

    static FieldState zeros(const GridSpec& g, double t = 0.0);
};

// Compactly supported bump on |y| < 1: exp(1 - 1/(1 - y^2)) when power == 0, else (1 - y^2)^power.
struct Bump {
    int power = 0;
    // Value and first three derivatives in y.
    void eval(double y, double out[4]) const;
    double operator()(double y) const;
};

// Radial profile F(s) = amplitude * bump((s - center) / width).
struct Profile {
    double amplitude = 1.0;
    double center = 2.0;
    double width = 1.0;
    Bump bump;

    // F^{(k)}(s) for k = 0..3.
    double deriv(double s, int k) const;
    double operator()(double s) const { return deriv(s, 0); }
};

// phi(t, r) = [F(r - t) - F(-r - t)] / (2 r), continuous at r = 0.
double exact_spherical(const Profile& F, double t, double r);
double exact_spherical_dt(const Profile& F, double t, double r);
double exact_spherical_dr(const Profile& F, double t, double r);

enum class DataFamily { Zero, Shell, RadialBump, OffCenterBump, AngularBump };

std::string to_string(DataFamily f);
DataFamily data_family_from_string(const std::string& name);

struct InitialData {
    DataFamily family = DataFamily::Zero;
    double amplitude = 0.0;
    double width = 2.0;
    Vec3 center = Vec3::Zero();
    int power = 0;
    double velocity = 0.0;        // bump families: phi1 = velocity * bump
    double profile_center = 2.0;  // shell family: F centred here

    Profile profile() const;
    double phi0(const Vec3& x) const;
    double phi1(const Vec3& x) const;
    double support_radius() const;
    FieldState sample(const GridSpec& g) const;
};

enum class BoundaryMode { CausalDomain, Sommerfeld };

std::string to_string(BoundaryMode m);
BoundaryMode boundary_mode_from_string(const std::string& name);

struct EquationSpec {
    geometry::MetricSpec metric = geometry::MetricSpec::flat();
    geometry::NullFormTensor nullform;
    bool semilinear = false;                              // include A^{mu nu} d phi d phi
    std::function<double(double, const Vec3&)> source;    // F, empty means 0
    double interior_quadratic = 0.0;                      // q b(r) (d_t phi)^2 inside interior_radius
    double interior_radius = 0.0;
    bool stability = false;                               // co-evolve the background Phi
    InitialData background;
    int fd_order = 4;

    bool is_flat_linear() const;
};

// G^{mu nu} = m0 + h + g^{mu nu gamma} d_gamma phi (+ g^{mu nu gamma} d_gamma Phi).
Mat4 effective_principal(const EquationSpec& spec, double t, const Vec3& x, const Vec4& dphi,
                         const Vec4* dPhi = nullptr);
// Same, with d phi taken from the state by finite differences at grid cell (i, j, k).
Mat4 effective_principal(const EquationSpec& spec, const FieldState& state, int i, int j, int k);

struct HyperbolicityVerdict {
    bool pass = false;
    double margin = 0.0;
};

// Box_g phi read off from the equation: A d phi d phi + F + interior term - quasilinear terms.
double box_from_equation(const EquationSpec& spec, double t, const Vec3& x, const Vec4& dphi, const Mat4& hess);

HyperbolicityVerdict hyperbolicity_check(const Mat4& G);
// Upper bound on the characteristic speed of the principal symbol G.
double characteristic_speed(const Mat4& G);

// d_t phi = pi, d_t pi from the equation, on the whole grid.
void rhs(const EquationSpec& spec, const FieldState& state, BoundaryMode mode, std::vector<double>& dphi,
         std::vector<double>& dpi);
double cfl_dt(const EquationSpec& spec, const FieldState& state, double courant = 0.25);
FieldState step_rk4(const EquationSpec& spec, const FieldState& state, double dt,
                    BoundaryMode mode = BoundaryMode::Sommerfeld);

// Streaming consumers of the evolution.
class Observer {
public:
    virtual ~Observer() = default;
    // Two consecutive levels; called once per step.
    virtual void on_pair(const foliation::LevelPair&) {}
    // Level exactly at a requested leaf time.
    virtual void on_leaf(double, const foliation::LevelView&, const GridSpec&) {}
};

struct RunSetup {
    GridSpec grid;
    EquationSpec eq;
    InitialData data;
    BoundaryMode boundary = BoundaryMode::CausalDomain;
    double courant = 0.25;
    std::vector<double> leaf_times;  // ascending; the run ends at the last one
    double clamp_margin = 0.0;       // causal mode: default 3 dx
    std::string checkpoint_dir;      // empty: no checkpoints
    int checkpoint_every = 0;        // leaves between checkpoints; 0 = final only
    int threads = 1;
};

struct CheckpointRecord {
    double t = 0.0;
    std::string file;
};

struct Trajectory {
    std::vector<double> leaf_times;
    std::vector<CheckpointRecord> checkpoints;
    FieldState final_state;
    double min_margin = 1.0;
    long steps = 0;
    std::vector<double> dts;  // per leaf interval
    bool boundary_reached = false;  // causal mode: the causal ball touched the grid boundary layer
    double max_speed = 1.0;         // largest characteristic speed seen by the CFL estimate

    // Checkpoint paths are written relative to base_dir when it is nonempty.
    std::string index_json(const GridSpec& g, const std::string& base_dir = "") const;
};

Trajectory run(const RunSetup& setup, const std::vector<Observer*>& observers = {});

// Binary checkpoint: header (magic, version, endianness tag, grid, t) plus raw arrays.
void write_checkpoint(const std::string& path, const FieldState& s);
FieldState read_checkpoint(const std::string& path);

}  // namespace qw::evolve
