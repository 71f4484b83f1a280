#pragma once

// Adaptive integration of the first-order companion system
//   y' = F(x) y,   y = (u, u', ..., u^{(N-1)}),
// with forced stops at prescribed nodes (piece joints are always nodes, so
// steps never straddle a discontinuity of the potential).

#include <boost/numeric/odeint.hpp>
#include <complex>
#include <span>
#include <vector>

#include "jostlab/core.hpp"

namespace jostlab {

using OdeState = std::vector<cplx>;

struct OdeResult {
  // state at every requested stop, in the order the stops were given
  std::vector<OdeState> states;
  double max_amplification = 1.0;
};

// Integrates y' = rhs(x, y) visiting `stops` in order (monotone increasing or
// decreasing); states[i] is the solution at stops[i]. states[0] = y0.
template <class Rhs>
OdeResult integrate_at_stops(Rhs&& rhs, const OdeState& y0,
                             std::span<const double> stops, double rtol = 1e-13,
                             double atol = 1e-13) {
  namespace ode = boost::numeric::odeint;
  OdeResult out;
  out.states.reserve(stops.size());
  OdeState y = y0;
  out.states.push_back(y);
  if (stops.size() < 2) return out;

  double norm0 = 0.0;
  for (const auto& c : y0) norm0 = std::max(norm0, std::abs(c));
  if (norm0 == 0.0) norm0 = 1.0;

  auto sys = [&rhs](const OdeState& y_, OdeState& dy_, double x_) {
    rhs(x_, y_, dy_);
  };

  auto stepper =
      ode::make_controlled(atol, rtol, ode::runge_kutta_fehlberg78<OdeState>());
  for (std::size_t i = 0; i + 1 < stops.size(); ++i) {
    double a = stops[i], b = stops[i + 1];
    if (a == b) {
      out.states.push_back(y);
      continue;
    }
    double dt = (b - a) / 8.0;
    ode::integrate_adaptive(stepper, sys, y, a, b, dt);
    out.states.push_back(y);
    double n = 0.0;
    for (const auto& c : y) n = std::max(n, std::abs(c));
    out.max_amplification = std::max(out.max_amplification, n / norm0);
  }
  return out;
}

// Companion right-hand side for ((-i d/dx)^N + V - z) u = 0:
//   u^{(N)} = i^N (z - V(x)) u.
inline auto companion_rhs(const Potential& V, const SpectralParam& sp) {
  const cplx factor = ipow(sp.N());
  const cplx z = sp.z();
  const int N = sp.N();
  return [&V, factor, z, N](double x, const OdeState& y, OdeState& dy) {
    dy.resize(y.size());
    for (int k = 0; k + 1 < N; ++k) dy[k] = y[k + 1];
    dy[N - 1] = factor * (z - V(x)) * y[0];
  };
}

}  // namespace jostlab
