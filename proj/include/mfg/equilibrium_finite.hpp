#ifndef MFG_EQUILIBRIUM_FINITE_HPP
#define MFG_EQUILIBRIUM_FINITE_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "mfg/best_response.hpp"
#include "mfg/distributions.hpp"
#include "mfg/equilibrium_infinite.hpp"
#include "mfg/model.hpp"

namespace mfg {

struct TerminalFixedPoint {
  double q_T = 0.0;
  double gamma_residual = 0.0;
  bool bound_check = true;
  double xi_T = 0.0;  // xi*(T)
};

/// Gamma(Q) = (1/2) int_{(xi_T, inf)} min(psi(x0), (1 - eps Q)^+) mu(dx0),
/// psi(x0) = (x0 - xi_T)/beta_T. With b = xi_T + beta_T (1 - eps Q)^+ this is
///   [PM(xi_T, b) - xi_T (S(xi_T) - S(b))] / (2 beta_T) + (1/2)(1 - eps Q)^+ S(b).
inline double gamma_map(double q, const InitialDistribution& mu, const ModelParams& params, double xi_T) {
  if (!(q >= 0.0 && q <= 0.5)) throw std::domain_error("gamma_map: argument outside [0, 1/2]");
  if (!params.horizon.is_finite()) throw std::invalid_argument("gamma_map: needs a finite horizon");
  const double T = params.horizon.end();
  const double beta = -std::expm1(-params.r * T) / (2.0 * params.r);
  const double cap = std::max(1.0 - params.epsilon * q, 0.0);
  const double b = xi_T + beta * cap;
  const double s_xi = mu.survival(xi_T);
  const double s_b = mu.survival(b);
  const double inner = partial_mean(mu, xi_T, b) - xi_T * (s_xi - s_b);
  return std::clamp(inner / (2.0 * beta) + 0.5 * cap * s_b, 0.0, 0.5);
}

/// Unique fixed point of Gamma by bisection on Q - Gamma(Q) over [0, 1/2].
inline TerminalFixedPoint solve_terminal(const InitialDistribution& mu, const ModelParams& params) {
  if (!params.horizon.is_finite()) throw std::invalid_argument("solve_terminal: needs a finite horizon");
  TerminalFixedPoint out;
  out.xi_T = xi_star(mu, params, params.horizon.end());
  if (gamma_map(0.0, mu, params, out.xi_T) <= 0.0) {
    out.q_T = 0.0;
  } else {
    double lo = 0.0;
    double hi = 0.5;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid - gamma_map(mid, mu, params, out.xi_T) < 0.0) lo = mid; else hi = mid;
    }
    out.q_T = 0.5 * (lo + hi);
  }
  out.gamma_residual = std::abs(gamma_map(out.q_T, mu, params, out.xi_T) - out.q_T);
  const double s = mu.survival(out.xi_T);
  out.bound_check = out.q_T <= s / (2.0 + params.epsilon * s) + 1e-12;
  return out;
}

/// Finite-horizon equilibrium on [0, T]. Q* runs backward from Q*_T; the
/// players respond to Q* through best_response_control.
inline EquilibriumSolution equilibrium_finite(const InitialDistribution& mu, const ModelParams& params,
                                              GridOptions opts = {}, std::span<const double> players = {},
                                              bool check_fixed_point = true, bool check_ode = true) {
  if (!params.horizon.is_finite()) throw std::invalid_argument("equilibrium_finite: needs a finite horizon");
  const double T = params.horizon.end();
  auto prof = std::make_shared<EquilibriumProfile>(mu, params, T, opts.n_steps, players);
  const TerminalFixedPoint fp = solve_terminal(mu, params);

  EquilibriumSolution sol;
  sol.params = params;
  sol.grid = prof->grid();
  sol.xi_star.assign(prof->xi().begin(), prof->xi().end());
  sol.Q_star = ProductionPath(prof->grid(), prof->aggregate_nodes(fp.q_T));
  sol.terminal_Q = fp.q_T;
  sol.diagnostics.gamma_residual = fp.gamma_residual;

  const XiFunction xi(sol.Q_star, params);
  for (double x0 : players) {
    PlayerTrajectory pt;
    pt.x0 = x0;
    const BestResponse br = best_response_control(xi, x0);
    const ResponsePlan plan = plan_response(xi, x0);
    pt.tau = br.tau;
    pt.regime = br.regime;
    pt.y_terminal = br.y_terminal;
    pt.control = br.control;
    pt.rate.resize(sol.grid.size());
    pt.reserve.resize(sol.grid.size());
    for (std::size_t k = 0; k < sol.grid.size(); ++k) {
      pt.rate[k] = std::max(response_rate(xi, plan, sol.grid[k]), 0.0);
      pt.reserve[k] = std::max(x0 - response_extracted(xi, plan, sol.grid[k]), 0.0);
    }
    sol.players.push_back(std::move(pt));
  }
  detail::fill_structure(*prof, sol.Q_star, sol.diagnostics);
  if (check_fixed_point) sol.diagnostics.fixed_point_residual = detail::fixed_point_residual(sol.Q_star, mu, params);
  if (check_ode) sol.diagnostics.xi_ode_deviation = prof->ode_deviation();
  sol.tau_star = [prof](double x0) { return prof->tau_at(x0); };
  return sol;
}

}  // namespace mfg

#endif  // MFG_EQUILIBRIUM_FINITE_HPP
