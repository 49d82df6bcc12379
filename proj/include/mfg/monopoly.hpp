#ifndef MFG_MONOPOLY_HPP
#define MFG_MONOPOLY_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/model.hpp"
#include "mfg/special_functions.hpp"

namespace mfg {

/// Thrown when a closed form is requested outside the regime it covers.
class RegimeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class MonopolyRegime { EarlyExhaustion, ExactExhaustion, NoExhaustion };

inline const char* to_string(MonopolyRegime r) {
  switch (r) {
    case MonopolyRegime::EarlyExhaustion: return "early";
    case MonopolyRegime::ExactExhaustion: return "exact";
    case MonopolyRegime::NoExhaustion: return "none";
  }
  return "?";
}

namespace detail {

inline void check_reserve(double x0) {
  if (!(x0 >= 0.0) || !std::isfinite(x0)) throw std::domain_error("monopoly: x0 must be finite and >= 0");
}

// Largest reserve exhausted strictly before T: phi(T)/2.
inline double early_bound(const ModelParams& p) { return 0.5 * phi(p.horizon.end(), p.r); }

}  // namespace detail

/// Regimes split at phi(T)/2 and T/2; ties go to the lower regime, where
/// the neighbouring formulas agree.
inline MonopolyRegime monopoly_regime(double x0, const ModelParams& params) {
  detail::check_reserve(x0);
  if (!params.horizon.is_finite()) return MonopolyRegime::EarlyExhaustion;
  if (x0 <= detail::early_bound(params)) return MonopolyRegime::EarlyExhaustion;
  if (x0 <= 0.5 * params.horizon.end()) return MonopolyRegime::ExactExhaustion;
  return MonopolyRegime::NoExhaustion;
}

/// Exhaustion time 2 x0 + (1 + W(-e^{-1-2 r x0})) / r = phi^{-1}(2 x0).
inline double monopoly_tau(double x0, const ModelParams& params) {
  if (monopoly_regime(x0, params) != MonopolyRegime::EarlyExhaustion) {
    throw RegimeError("monopoly_tau: reserve " + std::to_string(x0) + " is not exhausted before T");
  }
  return phi_inv(2.0 * x0, params.r);
}

/// Terminal adjoint r (T - 2 x0) / (1 - e^{-rT}) on the band
/// phi(T)/2 <= x0 <= T/2.
inline double monopoly_terminal_adjoint(double x0, const ModelParams& params) {
  detail::check_reserve(x0);
  if (!params.horizon.is_finite()) throw RegimeError("monopoly_terminal_adjoint: needs a finite horizon");
  const double T = params.horizon.end();
  const double lo = detail::early_bound(params);
  const double slack = 1e-12 * std::max(1.0, T);
  if (x0 < lo - slack || x0 > 0.5 * T + slack) {
    throw RegimeError("monopoly_terminal_adjoint: reserve " + std::to_string(x0) +
                      " outside the exact-exhaustion band");
  }
  return params.r * (T - 2.0 * x0) / -std::expm1(-params.r * T);
}

/// Closed-form optimal extraction for one reserve level.
struct MonopolySolution {
  ModelParams params;
  double x0 = 0.0;
  MonopolyRegime regime = MonopolyRegime::EarlyExhaustion;
  std::optional<double> tau;  // exhaustion time, absent when never exhausted
  double y_terminal = 0.0;    // adjoint at T in the exact-exhaustion regime

  double rate(double t) const {
    const double r = params.r;
    switch (regime) {
      case MonopolyRegime::EarlyExhaustion:
        return t <= *tau ? -0.5 * std::expm1(-r * (*tau - t)) : 0.0;
      case MonopolyRegime::ExactExhaustion:
        return 0.5 * (1.0 - y_terminal * std::exp(-r * (params.horizon.end() - t)));
      case MonopolyRegime::NoExhaustion:
        return 0.5;
    }
    return 0.0;
  }

  /// int_0^t rate.
  double extracted(double t) const {
    const double r = params.r;
    switch (regime) {
      case MonopolyRegime::EarlyExhaustion: {
        const double s = std::min(t, *tau);
        return 0.5 * s - 0.5 * (std::exp(-r * (*tau - s)) - std::exp(-r * *tau)) / r;
      }
      case MonopolyRegime::ExactExhaustion: {
        const double T = params.horizon.end();
        return 0.5 * t - 0.5 * y_terminal * (std::exp(-r * (T - t)) - std::exp(-r * T)) / r;
      }
      case MonopolyRegime::NoExhaustion:
        return 0.5 * t;
    }
    return 0.0;
  }

  /// End of the extraction period: tau, T, or T.
  double active_until() const {
    if (tau) return params.horizon.is_finite() ? std::min(*tau, params.horizon.end()) : *tau;
    return params.horizon.end();
  }
};

inline MonopolySolution solve_monopoly(double x0, const ModelParams& params) {
  MonopolySolution s;
  s.params = params;
  s.x0 = x0;
  s.regime = monopoly_regime(x0, params);
  switch (s.regime) {
    case MonopolyRegime::EarlyExhaustion:
      s.tau = monopoly_tau(x0, params);
      s.y_terminal = 1.0;
      break;
    case MonopolyRegime::ExactExhaustion:
      s.tau = params.horizon.end();
      s.y_terminal = monopoly_terminal_adjoint(x0, params);
      break;
    case MonopolyRegime::NoExhaustion:
      break;
  }
  return s;
}

/// Optimal control sampled on `cells` uniform cells over [0, end] with the
/// exhaustion time as a node. `end` defaults to T, or to the exhaustion
/// time when the horizon is infinite.
inline ControlPath monopoly_control(double x0, const ModelParams& params, std::size_t cells = 2000,
                                    std::optional<double> end = std::nullopt) {
  const MonopolySolution sol = solve_monopoly(x0, params);
  const double stop = end.value_or(params.horizon.is_finite() ? params.horizon.end() : *sol.tau);
  std::vector<double> structural;
  if (sol.tau && *sol.tau <= stop) structural.push_back(*sol.tau);
  TimeGrid grid = TimeGrid::uniform(stop, cells, structural);
  std::vector<double> q(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) q[k] = sol.rate(grid[k]);
  return ControlPath(std::move(grid), std::move(q), x0);
}

/// Value function u(x0) from the three-branch closed form.
inline double monopoly_value(double x0, const ModelParams& params) {
  const double r = params.r;
  switch (monopoly_regime(x0, params)) {
    case MonopolyRegime::EarlyExhaustion: {
      const double v = lambert_w0_shifted(-std::expm1(-2.0 * r * x0));
      return v * v / (4.0 * r);
    }
    case MonopolyRegime::ExactExhaustion: {
      const double T = params.horizon.end();
      const double d = T - 2.0 * x0;
      return (-std::expm1(-r * T) - r * r * d * d / std::expm1(r * T)) / (4.0 * r);
    }
    case MonopolyRegime::NoExhaustion:
      return -std::expm1(-r * params.horizon.end()) / (4.0 * r);
  }
  return 0.0;
}

}  // namespace mfg

#endif  // MFG_MONOPOLY_HPP
