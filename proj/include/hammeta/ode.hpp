// Adaptive ODE integration: Dormand-Prince 5(4) with PI step-size control
// and 4th-order dense output, plus a fixed-step RK4 for deterministic tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hammeta/common.hpp"

namespace hammeta::ode {

struct IntegratorConfig {
  double rtol{1e-9};
  double atol{1e-12};
  std::size_t max_steps{10'000'000};
  std::optional<double> initial_step;
};

// Defaults used for ground-truth dataset generation (energy-conservation
// checks require tight tolerances) and for learned-field rollouts.
inline IntegratorConfig dataset_tolerances() { return {1e-9, 1e-12, 10'000'000, {}}; }
inline IntegratorConfig rollout_tolerances() { return {1e-6, 1e-9, 10'000'000, {}}; }

// dx/dt = f(t, x), written into dxdt.
using VectorField =
    std::function<void(double t, std::span<const double> x, std::span<double> dxdt)>;

struct IntegrationFailure {
  double t{0.0};
  std::string reason;
};

struct IntegrationResult {
  std::vector<std::vector<double>> states;  // one per requested time, in order
  std::optional<IntegrationFailure> failure;

  bool complete(std::size_t n_requested) const {
    return !failure && states.size() == n_requested;
  }
};

namespace detail {

// Dormand-Prince 5(4) tableau.
constexpr double kA21 = 1.0 / 5.0;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                 kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0,
                 kA63 = 46732.0 / 5247.0, kA64 = 49.0 / 176.0,
                 kA65 = -5103.0 / 18656.0;
constexpr double kC2 = 1.0 / 5.0, kC3 = 3.0 / 10.0, kC4 = 4.0 / 5.0, kC5 = 8.0 / 9.0;
constexpr double kB1 = 35.0 / 384.0, kB3 = 500.0 / 1113.0, kB4 = 125.0 / 192.0,
                 kB5 = -2187.0 / 6784.0, kB6 = 11.0 / 84.0;
// b - b_hat (embedded 4th order error weights)
constexpr double kE1 = kB1 - 5179.0 / 57600.0;
constexpr double kE3 = kB3 - 7571.0 / 16695.0;
constexpr double kE4 = kB4 - 393.0 / 640.0;
constexpr double kE5 = kB5 - -92097.0 / 339200.0;
constexpr double kE6 = kB6 - 187.0 / 2100.0;
constexpr double kE7 = -1.0 / 40.0;
// dense-output weights for the 4th-order interpolant
constexpr double kD1 = -12715105075.0 / 11282082432.0;
constexpr double kD3 = 87487479700.0 / 32700410799.0;
constexpr double kD4 = -10690763975.0 / 1880347072.0;
constexpr double kD5 = 701980252875.0 / 199316789632.0;
constexpr double kD6 = -1453857185.0 / 822651844.0;
constexpr double kD7 = 69997945.0 / 29380423.0;

inline void check_finite(std::span<const double> v, double t) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw IntegrationError("vector field returned a non-finite value at t=" +
                             std::to_string(t), t);
    }
  }
}

}  // namespace detail

// Integrates `field` from (t_eval[0], x0) and reports the state at every
// requested time via 4th-order dense interpolation of accepted steps. On
// failure the partial results and the failure reason are returned; strict
// callers use integrate() below.
inline IntegrationResult try_integrate(const VectorField& field,
                                       std::span<const double> x0,
                                       std::span<const double> t_eval,
                                       const IntegratorConfig& cfg) {
  using namespace detail;
  IntegrationResult result;
  if (t_eval.empty()) return result;
  for (std::size_t i = 1; i < t_eval.size(); ++i) {
    if (!(t_eval[i] > t_eval[i - 1])) {
      throw DomainError("t_eval must be strictly increasing");
    }
  }
  if (cfg.rtol <= 0.0 || cfg.atol <= 0.0 || cfg.max_steps < 1) {
    throw DomainError("integrator tolerances must be positive");
  }

  const std::size_t n = x0.size();
  std::vector<double> y(x0.begin(), x0.end());
  double t = t_eval[0];
  result.states.emplace_back(y);
  std::size_t next_eval = 1;
  if (next_eval == t_eval.size()) return result;
  const double t_end = t_eval.back();

  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> ytmp(n), ynew(n), yerr(n);
  std::vector<double> cont1(n), cont2(n), cont3(n), cont4(n), cont5(n);

  auto eval = [&](double tt, std::span<const double> yy, std::vector<double>& out) {
    field(tt, yy, out);
    check_finite(out, tt);
  };

  try {
    eval(t, y, k1);

    // initial step size: rough second-derivative probe (Hairer's hinit)
    double h;
    if (cfg.initial_step) {
      h = *cfg.initial_step;
    } else {
      double d0 = 0.0, d1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double sc = cfg.atol + cfg.rtol * std::abs(y[i]);
        d0 += (y[i] / sc) * (y[i] / sc);
        d1 += (k1[i] / sc) * (k1[i] / sc);
      }
      d0 = std::sqrt(d0 / static_cast<double>(n));
      d1 = std::sqrt(d1 / static_cast<double>(n));
      double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
      h0 = std::min(h0, t_end - t);
      for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k1[i];
      eval(t + h0, ytmp, k2);
      double d2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double sc = cfg.atol + cfg.rtol * std::abs(y[i]);
        d2 += ((k2[i] - k1[i]) / sc) * ((k2[i] - k1[i]) / sc);
      }
      d2 = std::sqrt(d2 / static_cast<double>(n)) / h0;
      const double dmax = std::max(d1, d2);
      const double h1 = (dmax <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                        : std::pow(0.01 / dmax, 0.2);
      h = std::min({100.0 * h0, h1, t_end - t});
    }

    double err_old = 1e-4;
    bool last_rejected = false;

    for (std::size_t step = 0;; ++step) {
      if (step >= cfg.max_steps) {
        throw IntegrationError("max_steps exceeded at t=" + std::to_string(t), t);
      }
      if (h < 1e-14 * std::max(1.0, std::abs(t))) {
        throw IntegrationError("step size underflow at t=" + std::to_string(t) +
                               " (problem too stiff for this method)", t);
      }
      h = std::min(h, t_end - t);

      for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * kA21 * k1[i];
      eval(t + kC2 * h, ytmp, k2);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
      eval(t + kC3 * h, ytmp, k3);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
      eval(t + kC4 * h, ytmp, k4);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
      eval(t + kC5 * h, ytmp, k5);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] +
                              kA64 * k4[i] + kA65 * k5[i]);
      eval(t + h, ytmp, k6);
      for (std::size_t i = 0; i < n; ++i)
        ynew[i] = y[i] + h * (kB1 * k1[i] + kB3 * k3[i] + kB4 * k4[i] + kB5 * k5[i] +
                              kB6 * k6[i]);
      eval(t + h, ynew, k7);  // FSAL

      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        yerr[i] = h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] +
                       kE6 * k6[i] + kE7 * k7[i]);
        const double sc =
            cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
        err += (yerr[i] / sc) * (yerr[i] / sc);
      }
      err = std::sqrt(err / static_cast<double>(n));

      // PI controller (Lund stabilization), Hairer's constants.
      const double fac11 = std::pow(std::max(err, 1e-16), 0.2 - 0.04 * 0.75);
      double fac = fac11 / std::pow(err_old, 0.04);
      fac = std::max(0.1, std::min(5.0, fac / 0.9));
      double h_new = h / fac;

      if (err <= 1.0) {
        // accepted; fill dense output over (t, t+h]
        err_old = std::max(err, 1e-4);
        for (std::size_t i = 0; i < n; ++i) {
          cont1[i] = y[i];
          const double ydiff = ynew[i] - y[i];
          cont2[i] = ydiff;
          const double bspl = h * k1[i] - ydiff;
          cont3[i] = bspl;
          cont4[i] = ydiff - h * k7[i] - bspl;
          cont5[i] = h * (kD1 * k1[i] + kD3 * k3[i] + kD4 * k4[i] + kD5 * k5[i] +
                          kD6 * k6[i] + kD7 * k7[i]);
        }
        while (next_eval < t_eval.size() && t_eval[next_eval] <= t + h + 1e-14) {
          const double theta = std::min((t_eval[next_eval] - t) / h, 1.0);
          const double theta1 = 1.0 - theta;
          std::vector<double> yi(n);
          for (std::size_t i = 0; i < n; ++i) {
            yi[i] = cont1[i] +
                    theta * (cont2[i] +
                             theta1 * (cont3[i] +
                                       theta * (cont4[i] + theta1 * cont5[i])));
          }
          result.states.push_back(std::move(yi));
          ++next_eval;
        }

        t += h;
        y = ynew;
        k1 = k7;
        if (next_eval >= t_eval.size() || t >= t_end - 1e-14) break;
        if (last_rejected) h_new = std::min(h_new, h);
        last_rejected = false;
        h = h_new;
      } else {
        last_rejected = true;
        h = h / std::min(5.0, fac11 / 0.9);
      }
    }
  } catch (const IntegrationError& e) {
    result.failure = IntegrationFailure{e.t_fail, e.what()};
  }
  return result;
}

// Strict variant: throws on any failure.
inline std::vector<std::vector<double>> integrate(const VectorField& field,
                                                  std::span<const double> x0,
                                                  std::span<const double> t_eval,
                                                  const IntegratorConfig& cfg) {
  IntegrationResult r = try_integrate(field, x0, t_eval, cfg);
  if (r.failure) {
    throw IntegrationError(r.failure->reason, r.failure->t);
  }
  return std::move(r.states);
}

// Classical fixed-step RK4; n_steps+1 states including x0.
inline std::vector<std::vector<double>> rk4_fixed(const VectorField& field,
                                                  std::span<const double> x0,
                                                  double t0, double dt,
                                                  std::size_t n_steps) {
  if (dt <= 0.0) throw DomainError("rk4_fixed: dt must be positive");
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> out;
  out.reserve(n_steps + 1);
  std::vector<double> y(x0.begin(), x0.end());
  out.push_back(y);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), ytmp(n);
  double t = t0;
  for (std::size_t s = 0; s < n_steps; ++s) {
    field(t, y, k1);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + 0.5 * dt * k1[i];
    field(t + 0.5 * dt, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + 0.5 * dt * k2[i];
    field(t + 0.5 * dt, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + dt * k3[i];
    field(t + dt, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    detail::check_finite(y, t + dt);
    t += dt;
    out.push_back(y);
  }
  return out;
}

}  // namespace hammeta::ode
