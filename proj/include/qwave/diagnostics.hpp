#pragma once

#include "qwave/evolve.hpp"
#include "qwave/foliation.hpp"
#include "qwave/geometry.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qw::diagnostics {

using foliation::FoliationLeaf;
using foliation::GridSpec;
using foliation::Jet;

class OutOfWindowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientLevelsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Interpolates jets of the evolving field at fixed spacetime points as the run passes them.
class JetRecorder : public evolve::Observer {
public:
    JetRecorder(std::vector<geometry::SpacetimePoint> points, int order);

    void on_pair(const foliation::LevelPair& pair) override;
    bool complete() const { return next_ == order_.size(); }
    // Jets in the order of the requested points; throws OutOfWindowError if some were never reached.
    const std::vector<Jet>& jets() const;
    std::size_t size() const { return points_.size(); }

private:
    std::vector<geometry::SpacetimePoint> points_;
    std::vector<std::size_t> order_;  // point indices sorted by t
    std::size_t next_ = 0;
    int jet_order_ = 1;
    std::vector<Jet> jets_;
};

// ---------------------------------------------------------------- pointwise frame quantities

// Word over Z = {d_t, Omega_12, Omega_13, Omega_23}, generator codes as in Jet::apply_generator.
using ZWord = std::vector<int>;
// All words of length <= k in lexicographic order, starting with the empty word.
std::vector<ZWord> z_words(int k);
std::string word_name(const ZWord& w);
// Z^w applied to a jet; order drops by the number of d_t letters plus Omega letters.
Jet apply_word(const Jet& jet, const ZWord& w);

// First-order frame data of a jet at r > 0: L f, Lbar f, and |angular gradient|^2.
struct FrameDerivs {
    double L = 0.0, Lbar = 0.0, angular2 = 0.0, grad2 = 0.0;  // grad2 = f_t^2 + |nabla f|^2
};
FrameDerivs frame_derivs(const Jet& jet);
// |d(Lbar f)|^2 and |d(dbar_v f)|^2 = |d(L f)|^2 + sum_{i<j} |d(Omega_ij f / r)|^2 from a jet of order >= 2.
double d_lbar2(const Jet& jet);
double d_good2(const Jet& jet);

// ---------------------------------------------------------------- commuted grid fields

struct GridField {
    std::vector<double> phi, pi;
};

// Z^w on the grid: Omega by centred differences, d_t by shifting (phi, pi) -> (pi, acc) and a
// backward difference of acc against the previous level for a second d_t.
GridField commuted(const GridSpec& grid, const foliation::LevelView& now, const foliation::LevelView* previous,
                   const ZWord& w, int fd_order = 4);

// Spatial gradient by centred differences (one-sided at the edges).
void grid_gradient(const GridSpec& grid, const std::vector<double>& f, int fd_order, std::vector<double>& gx,
                   std::vector<double>& gy, std::vector<double>& gz);

// ---------------------------------------------------------------- ledger

struct LedgerOptions {
    geometry::DecayParams params;
    GridSpec grid;
    std::vector<double> leaf_times;  // ascending, the run ends at the last
    double dv = 0.0;                 // 0: grid dx
    int sphere_degree = 11;
    int subcells = 8;
    int k_max = 0;                   // commuted energies E[Z^k phi], k <= k_max <= 2
    int ball_radial = 16;            // disc rule for commuted quantities
    bool envelopes = false;
    double envelope_delta0 = 0.01;
    int envelope_radial = 8;         // radii sampled in [1, R]
    bool probe = false;
    int fd_order = 4;
    bool causal_domain = true;       // false: the far-cone completion of E-tilde is flagged approximate
};

// Per-leaf values.
struct LeafRecord {
    double tau = 0.0;
    double r_cut = 0.0;
    double E = 0.0;                      // E[phi]
    std::vector<double> E_commuted;      // E[Z^k phi] summed over words of length k, k = 0..k_max
    double E_far = 0.0;                  // energy outside the truncated cone at the final time
    double E_tilde = 0.0;
    double S_alpha = 0.0, S_eps = 0.0;   // S^alpha, S^epsilon
    double g_1 = 0.0, g_1a1 = 0.0, g_1me = 0.0, g_1a2 = 0.0, g_0 = 0.0;  // g^p for p = 1, 1+alpha1, 1-eps, 1+alpha2, 0
    double gbar_1 = 0.0, gbar_1a1 = 0.0;
    double ile_density = 0.0;            // integral over Sigma_tau of (1+r)^{-1-alpha} |dbar phi|^2
    double ile_eps_density = 0.0;        // same with epsilon in place of alpha
    double dalpha_density = 0.0;         // integral over Sigma_tau of (1+r)^{1+alpha} |F|^2
    double lem1 = 0.0, lem2 = 0.0, lem2_corollary = 0.0, lempphi2 = 0.0;
    double lempphi2_lhs = 0.0, lempphi2_rhs = 0.0;
    double g0_ibp_mismatch = 0.0;        // relative mismatch of the g^0 integration-by-parts identity
    double g0_ibp_scale = 0.0;           // sum of the magnitudes of its terms
};

struct EnvelopeRecord {
    double tau = 0.0;
    double out_lbar = 0.0, out_good = 0.0;  // S_tau, ratios to 2 H^2 and 2 Hbar^2
    double in_out = 0.0;                    // 1 <= r <= R, ratio to 2 Hbar^2
    double in_in = 0.0;                     // |x| <= 1, ratio to 2 delta0^2
    double max_ratio() const;
};

struct ProbeRow {
    double tau = 0.0, r = 0.0, t = 0.0;
    double phi = 0.0, lbar = 0.0, good = 0.0;           // sup over the sphere of the raw sums
    double phi_ratio = 0.0, lbar_ratio = 0.0, good_ratio = 0.0;  // divided by the pointwise envelopes
};

struct SlabRecord {
    double tau1 = 0.0, tau2 = 0.0;
    double I_alpha = 0.0;
    double D_alpha = 0.0;
    double E_beta = 0.0;
    double G_p_beta = 0.0;
    double beta = 0.0, p = 0.0;
};

struct EnergyLedger {
    geometry::DecayParams params;
    int k_max = 0;
    int commuted_truncation = 2;  // words of length <= 2 in every commuted monitor
    bool e_tilde_approximate = false;
    std::vector<LeafRecord> leaves;
    std::vector<EnvelopeRecord> envelopes;
    std::vector<ProbeRow> probe;

    // Trapezoid in tau over leaves with tau1 <= tau <= tau2 (both must be leaf times).
    SlabRecord slab(double tau1, double tau2, double beta = 0.0, double p = 1.0) const;
    std::vector<double> series(const std::string& quantity) const;
    std::vector<double> taus() const;

    void write_csv(std::ostream& os) const;
    std::string to_json() const;
    void write_probe_csv(std::ostream& os) const;
};

// Single quantities on a finished leaf.
struct ConeData {
    const FoliationLeaf* leaf = nullptr;
    const std::vector<Jet>* jets = nullptr;  // one per cone sample
};

// E = disc part + cone integral of |L phi|^2 + |angular phi|^2.
double cone_energy(const ConeData& c);
// S^alpha-type cone integral of (1+r)^{-1-a} |d phi|^2 r^2 dv dw.
double weighted_cone_s(const ConeData& c, double a);
// g^p: integral of r^p |d_v psi|^2, psi = r phi; bar = true adds |angular psi|^2.
double weighted_cone_g(const ConeData& c, double p, bool bar = false);

// Lemma-check ratios on one leaf. disc_phi_weighted = integral over r <= R of (phi/(1+r))^2, disc_phi2 of phi^2.
struct LemmaReport {
    double lem1 = 0.0, lem2 = 0.0, lem2_corollary = 0.0, lempphi2 = 0.0;
    double lempphi2_lhs = 0.0, lempphi2_rhs = 0.0;
};
LemmaReport lemma_checks(const ConeData& c, double disc_phi_weighted, double disc_phi2, double e_tilde,
                         const geometry::DecayParams& p);

// Records everything needed for the ledger during a run and assembles it at the end.
class LedgerObserver : public evolve::Observer {
public:
    LedgerObserver(const LedgerOptions& opt, const evolve::EquationSpec& eq);

    void on_pair(const foliation::LevelPair& pair) override;
    void on_leaf(double t, const foliation::LevelView& level, const GridSpec& grid) override;

    // Valid after the run reached the last leaf time.
    EnergyLedger ledger() const;
    const std::vector<FoliationLeaf>& leaves() const { return leaves_; }

private:
    struct DiscSums {
        double energy = 0.0, phi_w = 0.0, phi2 = 0.0, ile = 0.0, ile_eps = 0.0, dalpha = 0.0;
    };
    LedgerOptions opt_;
    evolve::EquationSpec eq_;
    foliation::SphereQuadrature quad_;
    std::vector<FoliationLeaf> leaves_;
    std::vector<DiscSums> disc_;
    // Point layout per leaf: [cone][ball, k >= 1][envelope shell points][envelope inner points]
    std::vector<std::size_t> offset_cone_, offset_ball_, offset_shell_, offset_inner_, offset_end_;
    std::vector<double> shell_radii_, shell_weights_;
    std::vector<Vec3> inner_points_;
    std::unique_ptr<JetRecorder> recorder_;
    std::vector<double> far_r_, far_e_, far_cum_;  // final-time cell energies sorted by radius, suffix sums

    double far_energy(double r_cut) const;
    double dx3_ = 0.0;
    bool finished_ = false;
};

}  // namespace qw::diagnostics
