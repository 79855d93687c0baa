#include "qwave/evolve.hpp"

#include <cmath>

namespace qw::evolve {

FieldState FieldState::zeros(const GridSpec& g, double t) {
    FieldState s;
    s.t = t;
    s.grid = g;
    s.phi.assign(g.size(), 0.0);
    s.pi.assign(g.size(), 0.0);
    return s;
}

void Bump::eval(double y, double out[4]) const {
    out[0] = out[1] = out[2] = out[3] = 0.0;
    const double q = 1.0 - y * y;
    if (q <= 0.0) return;
    if (power == 0) {
        // b = exp(1 - 1/q); derivatives via g = 1 - 1/q, b' = b g', b'' = b (g'^2 + g''), ...
        const double b = std::exp(1.0 - 1.0 / q);
        const double q2 = q * q;
        const double g1 = -2.0 * y / q2;
        const double g2 = -2.0 / q2 - 8.0 * y * y / (q2 * q);
        const double g3 = -24.0 * y / (q2 * q) - 48.0 * y * y * y / (q2 * q2);
        out[0] = b;
        out[1] = b * g1;
        out[2] = b * (g1 * g1 + g2);
        out[3] = b * (g1 * g1 * g1 + 3.0 * g1 * g2 + g3);
        return;
    }
    // (1 - y^2)^p with q' = -2y, q'' = -2.
    const int p = power;
    auto qp = [&](int k) { return k < 0 ? 0.0 : std::pow(q, k); };
    const double dq = -2.0 * y;
    out[0] = qp(p);
    out[1] = p * qp(p - 1) * dq;
    out[2] = p * (p - 1) * qp(p - 2) * dq * dq + p * qp(p - 1) * (-2.0);
    out[3] = p * (p - 1) * (p - 2) * qp(p - 3) * dq * dq * dq + 3.0 * p * (p - 1) * qp(p - 2) * dq * (-2.0);
}

double Bump::operator()(double y) const {
    double v[4];
    eval(y, v);
    return v[0];
}

double Profile::deriv(double s, int k) const {
    double v[4];
    bump.eval((s - center) / width, v);
    return amplitude * v[k] / std::pow(width, k);
}

double exact_spherical(const Profile& F, double t, double r) {
    if (r < 1e-4) return F.deriv(-t, 1) + r * r / 6.0 * F.deriv(-t, 3);
    return (F(r - t) - F(-r - t)) / (2.0 * r);
}

double exact_spherical_dt(const Profile& F, double t, double r) {
    if (r < 1e-4) return -F.deriv(-t, 2);
    return (-F.deriv(r - t, 1) + F.deriv(-r - t, 1)) / (2.0 * r);
}

double exact_spherical_dr(const Profile& F, double t, double r) {
    if (r < 1e-4) return r / 3.0 * F.deriv(-t, 3);
    return (F.deriv(r - t, 1) + F.deriv(-r - t, 1)) / (2.0 * r) - (F(r - t) - F(-r - t)) / (2.0 * r * r);
}

std::string to_string(DataFamily f) {
    switch (f) {
        case DataFamily::Zero: return "zero";
        case DataFamily::Shell: return "shell";
        case DataFamily::RadialBump: return "radial-bump";
        case DataFamily::OffCenterBump: return "offcenter-bump";
        case DataFamily::AngularBump: return "angular-bump";
    }
    return "zero";
}

DataFamily data_family_from_string(const std::string& name) {
    if (name == "zero") return DataFamily::Zero;
    if (name == "shell") return DataFamily::Shell;
    if (name == "radial-bump") return DataFamily::RadialBump;
    if (name == "offcenter-bump") return DataFamily::OffCenterBump;
    if (name == "angular-bump") return DataFamily::AngularBump;
    throw std::invalid_argument("unknown initial-data family '" + name + "'");
}

Profile InitialData::profile() const {
    Profile F;
    F.amplitude = amplitude;
    F.center = profile_center;
    F.width = width;
    F.bump.power = power;
    return F;
}

double InitialData::phi0(const Vec3& x) const {
    const Bump b{power};
    switch (family) {
        case DataFamily::Zero: return 0.0;
        case DataFamily::Shell: return exact_spherical(profile(), 0.0, x.norm());
        case DataFamily::RadialBump: return amplitude * b(x.norm() / width);
        case DataFamily::OffCenterBump: return amplitude * b((x - center).norm() / width);
        case DataFamily::AngularBump: return amplitude * (x[0] / width) * b(x.norm() / width);
    }
    return 0.0;
}

double InitialData::phi1(const Vec3& x) const {
    const Bump b{power};
    switch (family) {
        case DataFamily::Zero: return 0.0;
        case DataFamily::Shell: return exact_spherical_dt(profile(), 0.0, x.norm());
        case DataFamily::RadialBump: return velocity * b(x.norm() / width);
        case DataFamily::OffCenterBump: return velocity * b((x - center).norm() / width);
        case DataFamily::AngularBump: return velocity * (x[0] / width) * b(x.norm() / width);
    }
    return 0.0;
}

double InitialData::support_radius() const {
    switch (family) {
        case DataFamily::Zero: return 0.0;
        case DataFamily::Shell:
            return std::max(std::abs(profile_center - width), std::abs(profile_center + width));
        case DataFamily::RadialBump:
        case DataFamily::AngularBump: return width;
        case DataFamily::OffCenterBump: return center.norm() + width;
    }
    return 0.0;
}

FieldState InitialData::sample(const GridSpec& g) const {
    FieldState s = FieldState::zeros(g, 0.0);
    if (family == DataFamily::Zero) return s;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            for (int k = 0; k < g.n; ++k) {
                const Vec3 x = g.position(i, j, k);
                const std::size_t c = g.index(i, j, k);
                s.phi[c] = phi0(x);
                s.pi[c] = phi1(x);
            }
    return s;
}

}  // namespace qw::evolve
