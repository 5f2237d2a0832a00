// The six Hamiltonian benchmark systems: closed-form energies, hand-derived
// symplectic vector fields, initial-condition samplers, and the phase-state
// to graph-input conversion. All physical constants (m_i, k, l, g, G) are 1.
#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hammeta/common.hpp"
#include "hammeta/rng.hpp"
#include "hammeta/tape.hpp"

namespace hammeta::phys {

enum class SystemKind {
  kMassSpring,
  kPendulum,
  kHenonHeiles,
  kMagneticMirror,
  kTwoBody,
  kThreeBody,
};

constexpr std::array<SystemKind, 6> kAllSystems = {
    SystemKind::kMassSpring,   SystemKind::kPendulum, SystemKind::kHenonHeiles,
    SystemKind::kMagneticMirror, SystemKind::kTwoBody,  SystemKind::kThreeBody,
};

struct SystemSpec {
  SystemKind kind{SystemKind::kMassSpring};
  int n_particles{1};

  static SystemSpec make(SystemKind k) {
    int n = 1;
    if (k == SystemKind::kTwoBody) n = 2;
    if (k == SystemKind::kThreeBody) n = 3;
    return SystemSpec{k, n};
  }
  static SystemSpec from_name(std::string_view name);

  // 2 generalized coordinates + 2 momenta per particle.
  std::size_t state_dim() const { return 4u * static_cast<std::size_t>(n_particles); }
  std::size_t coord_dim() const { return 2u * static_cast<std::size_t>(n_particles); }
  std::string_view name() const;

  friend bool operator==(const SystemSpec&, const SystemSpec&) = default;
};

inline std::string_view SystemSpec::name() const {
  switch (kind) {
    case SystemKind::kMassSpring: return "mass-spring";
    case SystemKind::kPendulum: return "pendulum";
    case SystemKind::kHenonHeiles: return "henon-heiles";
    case SystemKind::kMagneticMirror: return "magnetic-mirror";
    case SystemKind::kTwoBody: return "two-body";
    case SystemKind::kThreeBody: return "three-body";
  }
  return "?";
}

inline SystemSpec SystemSpec::from_name(std::string_view name) {
  for (SystemKind k : kAllSystems) {
    if (SystemSpec::make(k).name() == name) return SystemSpec::make(k);
  }
  throw DomainError("unknown system '" + std::string(name) + "'");
}

// Canonical state: generalized coordinates and conjugate momenta, each of
// length 2*n_particles.
struct PhasePoint {
  double t{0.0};
  std::vector<double> q;
  std::vector<double> p;

  std::vector<double> to_state() const {
    std::vector<double> s(q);
    s.insert(s.end(), p.begin(), p.end());
    return s;
  }
  static PhasePoint from_state(double t, std::span<const double> s) {
    const std::size_t half = s.size() / 2;
    return PhasePoint{t, {s.begin(), s.begin() + static_cast<std::ptrdiff_t>(half)},
                      {s.begin() + static_cast<std::ptrdiff_t>(half), s.end()}};
  }
};

struct Trajectory {
  SystemSpec system;
  std::vector<PhasePoint> points;
  std::vector<std::vector<double>> derivs;  // (qdot, pdot) per point
};

// ---------------------------------------------------------------------------
// Closed-form energies, written once over a generic scalar so both the double
// path and the tape path evaluate the same expression.

namespace detail {

constexpr double kMinBodySeparation = 1e-9;

template <class S>
S pair_potential(std::span<const S> q, int i, int j) {
  using std::sqrt;
  const S dx = q[2 * i] - q[2 * j];
  const S dy = q[2 * i + 1] - q[2 * j + 1];
  const S d = sqrt(dx * dx + dy * dy);
  if (ad::value_of(d) < kMinBodySeparation) {
    throw DomainError("coincident bodies: |r_i - r_j| < 1e-9");
  }
  return -1.0 / d;
}

template <class S>
S hamiltonian_formula(SystemKind kind, std::span<const S> q, std::span<const S> p) {
  using std::cos;
  switch (kind) {
    case SystemKind::kMassSpring:
      // H = p_x^2/2 + x^2/2; (y, p_y) are redundant embedding coordinates.
      return p[0] * p[0] * 0.5 + q[0] * q[0] * 0.5;
    case SystemKind::kPendulum:
      // H = p_theta^2/2 + (1 - cos theta); (r, p_r) redundant.
      return p[0] * p[0] * 0.5 + (1.0 - cos(q[0]));
    case SystemKind::kHenonHeiles: {
      const S x = q[0], y = q[1];
      return (p[0] * p[0] + p[1] * p[1]) * 0.5 + (x * x + y * y) * 0.5 +
             x * x * y - y * y * y * (1.0 / 3.0);
    }
    case SystemKind::kMagneticMirror: {
      const S rho = q[0], z = q[1];
      const S r2 = rho * rho, z2 = z * z;
      return (p[0] * p[0] + p[1] * p[1]) * 0.5 + r2 * 0.5 + r2 * z2 * 0.5 -
             r2 * r2 * 0.125 + r2 * z2 * z2 * 0.125 - r2 * r2 * z2 * 0.0625 +
             r2 * r2 * r2 * (1.0 / 128.0);
    }
    case SystemKind::kTwoBody: {
      S kin = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]) * 0.5;
      return kin + pair_potential(q, 0, 1);
    }
    case SystemKind::kThreeBody: {
      S kin = p[0] * p[0];
      for (std::size_t i = 1; i < 6; ++i) kin = kin + p[i] * p[i];
      return kin * 0.5 + pair_potential(q, 0, 1) + pair_potential(q, 1, 2) +
             pair_potential(q, 2, 0);
    }
  }
  throw DomainError("unknown system kind");
}

}  // namespace detail

inline double hamiltonian(const SystemSpec& sys, const PhasePoint& x) {
  if (x.q.size() != sys.coord_dim() || x.p.size() != sys.coord_dim()) {
    throw ShapeError("phase point dimension does not match system " +
                     std::string(sys.name()));
  }
  return detail::hamiltonian_formula<double>(sys.kind, x.q, x.p);
}

// Records H as tape nodes. `state` is a 1 x 4n row (q then p).
inline ad::Var hamiltonian_on_tape(const SystemSpec& sys, ad::Var state) {
  const std::size_t dim = sys.state_dim();
  if (!(state.shape() == ad::Shape{1, dim})) {
    throw ShapeError("hamiltonian_on_tape: state must be 1x" + std::to_string(dim));
  }
  std::vector<ad::Sc> q, p;
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    q.push_back(ad::wrap(ad::slice(state, 0, 1, i, i + 1)));
    p.push_back(ad::wrap(ad::slice(state, 0, 1, half + i, half + i + 1)));
  }
  return detail::hamiltonian_formula<ad::Sc>(sys.kind, q, p).v;
}

// ---------------------------------------------------------------------------
// Hand-derived symplectic fields (dq/dt, dp/dt) = (dH/dp, -dH/dq). Kept
// independent of the tape path so the two can audit each other.

inline std::pair<std::vector<double>, std::vector<double>> analytic_field(
    const SystemSpec& sys, const PhasePoint& x) {
  const std::size_t half = sys.coord_dim();
  if (x.q.size() != half || x.p.size() != half) {
    throw ShapeError("phase point dimension does not match system " +
                     std::string(sys.name()));
  }
  std::vector<double> qdot(half, 0.0), pdot(half, 0.0);
  const auto& q = x.q;
  const auto& p = x.p;
  switch (sys.kind) {
    case SystemKind::kMassSpring:
      qdot[0] = p[0];
      pdot[0] = -q[0];
      break;
    case SystemKind::kPendulum:
      qdot[0] = p[0];
      pdot[0] = -std::sin(q[0]);
      break;
    case SystemKind::kHenonHeiles:
      qdot[0] = p[0];
      qdot[1] = p[1];
      pdot[0] = -(q[0] + 2.0 * q[0] * q[1]);
      pdot[1] = -(q[1] + q[0] * q[0] - q[1] * q[1]);
      break;
    case SystemKind::kMagneticMirror: {
      const double rho = q[0], z = q[1];
      const double r2 = rho * rho, z2 = z * z;
      qdot[0] = p[0];
      qdot[1] = p[1];
      pdot[0] = -(rho + rho * z2 - 0.5 * rho * r2 + 0.25 * rho * z2 * z2 -
                  0.25 * rho * r2 * z2 + (3.0 / 64.0) * rho * r2 * r2);
      pdot[1] = -(r2 * z + 0.5 * r2 * z2 * z - 0.125 * r2 * r2 * z);
      break;
    }
    case SystemKind::kTwoBody:
    case SystemKind::kThreeBody: {
      const int n = sys.n_particles;
      for (std::size_t i = 0; i < half; ++i) qdot[i] = p[i];
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double dx = q[2 * i] - q[2 * j];
          const double dy = q[2 * i + 1] - q[2 * j + 1];
          const double d2 = dx * dx + dy * dy;
          const double d = std::sqrt(d2);
          if (d < detail::kMinBodySeparation) {
            throw DomainError("coincident bodies: |r_i - r_j| < 1e-9");
          }
          const double inv_d3 = 1.0 / (d2 * d);
          pdot[2 * i] -= dx * inv_d3;
          pdot[2 * i + 1] -= dy * inv_d3;
          pdot[2 * j] += dx * inv_d3;
          pdot[2 * j + 1] += dy * inv_d3;
        }
      }
      break;
    }
  }
  return {std::move(qdot), std::move(pdot)};
}

// Field over flat states, the form integrators consume.
inline void analytic_field_flat(const SystemSpec& sys, std::span<const double> state,
                                std::span<double> dxdt) {
  PhasePoint x = PhasePoint::from_state(0.0, state);
  auto [qd, pd] = analytic_field(sys, x);
  std::copy(qd.begin(), qd.end(), dxdt.begin());
  std::copy(pd.begin(), pd.end(), dxdt.begin() + static_cast<std::ptrdiff_t>(qd.size()));
}

// ---------------------------------------------------------------------------
// Initial-condition samplers.
//
// Conventions fixed where the source is silent: near-circular momenta point
// counterclockwise (perpendicular (-y, x)/|r|), the three-body bodies are
// placed by counterclockwise rotations of 2*pi/3, and Gaussian noise is
// standard normal scaled by the stated constant, applied to momentum
// components only.

namespace detail {

inline std::array<double, 2> perp_ccw(double x, double y) {
  const double r = std::sqrt(x * x + y * y);
  return {-y / r, x / r};
}

}  // namespace detail

inline PhasePoint sample_initial(const SystemSpec& sys, Rng& rng,
                                 std::optional<double> noise_scale = std::nullopt) {
  PhasePoint x;
  x.t = 0.0;
  switch (sys.kind) {
    case SystemKind::kMassSpring: {
      const double x0 = rng.uniform(-1.0, 1.0);
      const double px = rng.uniform(-1.0, 1.0);
      x.q = {x0, 0.0};
      x.p = {px, 0.0};
      break;
    }
    case SystemKind::kPendulum: {
      const double theta = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
      const double ptheta = rng.uniform(-1.0, 1.0);
      x.q = {theta, 1.0};
      x.p = {ptheta, 0.0};
      break;
    }
    case SystemKind::kHenonHeiles: {
      // Rejection inside the stated box: orbits at or above the escape energy
      // of the cubic potential (1/6) blow up in finite time and cannot be
      // integrated over [0, 10] by any method.
      constexpr double kEscapeEnergy = 1.0 / 6.0;
      for (int attempt = 0; attempt < 100000; ++attempt) {
        x.q = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        x.p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        if (hamiltonian(sys, x) < kEscapeEnergy) break;
      }
      break;
    }
    case SystemKind::kMagneticMirror: {
      x.q = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      x.p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      break;
    }
    case SystemKind::kTwoBody: {
      const double x1 = rng.uniform(0.5, 1.5);
      const double y1 = rng.uniform(0.5, 1.5);
      const double r = std::sqrt(x1 * x1 + y1 * y1);
      // Bodies at +/- r orbit their midpoint: 1/(2r)^2 = v^2/r.
      const double v = 1.0 / (2.0 * std::sqrt(r));
      const auto u = detail::perp_ccw(x1, y1);
      x.q = {x1, y1, -x1, -y1};
      x.p = {v * u[0], v * u[1], -v * u[0], -v * u[1]};
      const double s = noise_scale.value_or(0.1);
      for (auto& pi : x.p) pi += s * rng.gaussian();
      break;
    }
    case SystemKind::kThreeBody: {
      const double x1 = rng.uniform(0.8, 1.2);
      const double y1 = rng.uniform(0.8, 1.2);
      const double r = std::sqrt(x1 * x1 + y1 * y1);
      // Lagrange triangle: net pull 1/(sqrt(3) r^2) = v^2/r.
      const double v = std::pow(3.0, -0.25) / std::sqrt(r);
      const auto u = detail::perp_ccw(x1, y1);
      x.q.resize(6);
      x.p.resize(6);
      for (int b = 0; b < 3; ++b) {
        const double ang = 2.0 * std::numbers::pi * b / 3.0;
        const double c = std::cos(ang), s = std::sin(ang);
        x.q[2 * b] = c * x1 - s * y1;
        x.q[2 * b + 1] = s * x1 + c * y1;
        x.p[2 * b] = v * (c * u[0] - s * u[1]);
        x.p[2 * b + 1] = v * (s * u[0] + c * u[1]);
      }
      const double s = noise_scale.value_or(0.05);
      for (auto& pi : x.p) pi += s * rng.gaussian();
      break;
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Graph inputs: one node per particle with features (q1, q2, p1, p2);
// complete graph plus self-loops under symmetric normalization, which for n
// equal-degree nodes is a constant matrix of 1/n.

inline ad::Tensor graph_features(const SystemSpec& sys, const PhasePoint& x) {
  const std::size_t n = static_cast<std::size_t>(sys.n_particles);
  ad::Tensor f(ad::Shape{n, 4});
  double* d = f.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    d[4 * i + 0] = x.q[2 * i];
    d[4 * i + 1] = x.q[2 * i + 1];
    d[4 * i + 2] = x.p[2 * i];
    d[4 * i + 3] = x.p[2 * i + 1];
  }
  return f;
}

inline ad::Tensor graph_adjacency(const SystemSpec& sys) {
  const std::size_t n = static_cast<std::size_t>(sys.n_particles);
  return ad::Tensor::full(n, n, 1.0 / static_cast<double>(n));
}

// Inverse of graph_features' layout: node-major rows back to (q, p).
inline PhasePoint phase_from_features(const SystemSpec& sys, const ad::Tensor& f,
                                      double t = 0.0) {
  const std::size_t n = static_cast<std::size_t>(sys.n_particles);
  PhasePoint x;
  x.t = t;
  x.q.resize(2 * n);
  x.p.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    x.q[2 * i] = f(i, 0);
    x.q[2 * i + 1] = f(i, 1);
    x.p[2 * i] = f(i, 2);
    x.p[2 * i + 1] = f(i, 3);
  }
  return x;
}

// Relative energy drift along a trajectory: max |H(x_t) - H(x_0)| / (|H(x_0)| + 1).
inline double energy_drift(const Trajectory& traj) {
  if (traj.points.empty()) return 0.0;
  const double h0 = hamiltonian(traj.system, traj.points.front());
  double worst = 0.0;
  for (const PhasePoint& pt : traj.points) {
    worst = std::max(worst, std::abs(hamiltonian(traj.system, pt) - h0));
  }
  return worst / (std::abs(h0) + 1.0);
}

}  // namespace hammeta::phys
