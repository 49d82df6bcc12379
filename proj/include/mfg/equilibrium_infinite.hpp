#ifndef MFG_EQUILIBRIUM_INFINITE_HPP
#define MFG_EQUILIBRIUM_INFINITE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "mfg/best_response.hpp"
#include "mfg/distributions.hpp"
#include "mfg/model.hpp"
#include "mfg/quadrature.hpp"
#include "mfg/special_functions.hpp"

namespace mfg {

struct GridOptions {
  std::size_t n_steps = 4000;
  std::optional<double> truncation;  // end of the grid for the infinite horizon
};

/// xi*(t) = psi^{-1}(phi(t)).
inline double xi_star(const PsiFunction& psi_fn, double r, double t) { return psi_fn.inverse(phi(t, r)); }
inline double xi_star(const InitialDistribution& mu, const ModelParams& params, double t) {
  return xi_star(PsiFunction(mu, params.epsilon), params.r, t);
}

/// tau*(x0) = phi^{-1}(psi(x0)).
inline double tau_star(const PsiFunction& psi_fn, double r, double x0) {
  if (!(x0 >= 0.0)) throw std::domain_error("tau_star: negative reserve");
  return phi_inv(psi_fn(x0), r);
}
inline double tau_star(const InitialDistribution& mu, const ModelParams& params, double x0) {
  return tau_star(PsiFunction(mu, params.epsilon), params.r, x0);
}

/// Equilibrium quantities sampled on a grid over [0, end]. With
/// h = 1 / (2 + eps S(xi*)) and g = S(xi*) h, the rates solve
///   q*_t(x0) = int_t^{tau*} r e^{-r(s-t)} h(s) ds,   Q*_t = int_t^inf r e^{-r(s-t)} g(s) ds,
/// which are evaluated by backward recursion over the cells. For atoms
/// S(xi*) is constant between consecutive atom times, which are grid
/// nodes, so every cell integral is exact.
class EquilibriumProfile {
 public:
  EquilibriumProfile(InitialDistribution mu, ModelParams params, double end, std::size_t n_steps,
                     std::span<const double> players = {})
      : psi_(std::move(mu), params.epsilon), params_(params) {
    if (!(end > 0.0) || !std::isfinite(end)) throw std::domain_error("EquilibriumProfile: bad grid end");
    if (n_steps < 1) throw std::invalid_argument("EquilibriumProfile: need at least one step");
    for (double b : psi_.distribution().breakpoints()) {
      if (b > 0.0) kinks_.push_back(tau_at(b));
    }
    std::vector<double> structural;
    for (double t : kinks_) {
      if (t < end) structural.push_back(t);
    }
    for (double x0 : players) {
      const double t = tau_at(x0);
      if (t > 0.0 && t < end) structural.push_back(t);
    }
    grid_ = TimeGrid::uniform(end, n_steps, structural);
    quad_width_ = end / static_cast<double>(n_steps);

    const std::size_t n = grid_.size();
    xi_.resize(n);
    for (std::size_t k = 0; k < n; ++k) xi_[k] = xi_at(grid_[k]);
    disc_h_.assign(n - 1, 0.0);
    disc_g_.assign(n - 1, 0.0);
    h_prefix_.assign(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const auto c = integrate(grid_[k], grid_[k + 1]);
      disc_h_[k] = c.disc_h;
      disc_g_[k] = c.disc_g;
      h_prefix_[k + 1] = h_prefix_[k] + c.plain_h;
    }
  }

  const TimeGrid& grid() const { return grid_; }
  const ModelParams& params() const { return params_; }
  const InitialDistribution& distribution() const { return psi_.distribution(); }
  const PsiFunction& psi_function() const { return psi_; }
  std::span<const double> xi() const { return xi_; }
  /// Exploitation times of the atoms (kinks of Q* and q*).
  std::span<const double> kink_times() const { return kinks_; }

  double xi_at(double t) const { return xi_star(psi_, params_.r, t); }
  double tau_at(double x0) const { return tau_star(psi_, params_.r, x0); }
  double survival_at(double t) const { return psi_.distribution().survival(xi_at(t)); }

  /// q*(x0) at the grid nodes; zero from tau*(x0) on.
  std::vector<double> rate_nodes(double x0) const {
    const std::size_t n = grid_.size();
    std::vector<double> q(n, 0.0);
    const double tau = tau_at(x0);
    if (tau <= 0.0) return q;
    const double r = params_.r;
    std::size_t start;  // last node strictly before tau
    if (tau >= grid_.back()) {
      start = n - 1;
      q[start] = integrate(grid_.back(), tau).disc_h;
    } else if (auto node = grid_.find_node(tau, 1e-12 * tau)) {
      start = *node - 1;
      q[start] = disc_h_[start];
    } else {
      start = grid_.cell_of(tau);
      q[start] = integrate(grid_[start], tau).disc_h;
    }
    for (std::size_t k = start; k-- > 0;) {
      q[k] = std::exp(-r * (grid_[k + 1] - grid_[k])) * q[k + 1] + disc_h_[k];
    }
    return q;
  }

  /// X*_t(x0) at the nodes from the exact identity int_0^t q* = H(t) + (q*_t - q*_0)/r,
  /// H = int h, valid up to tau*.
  std::vector<double> reserve_nodes(double x0, std::span<const double> q) const {
    const double tau = tau_at(x0);
    std::vector<double> x(grid_.size(), 0.0);
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      if (grid_[k] >= tau) break;
      x[k] = x0 - h_prefix_[k] - (q[k] - q[0]) / params_.r;
    }
    return x;
  }

  ControlPath control(double x0) const {
    std::vector<double> q = rate_nodes(x0);
    const double tau = tau_at(x0);
    if (tau <= 0.0 || grid_.find_node(tau, 1e-12 * tau)) return ControlPath(grid_, std::move(q), x0);
    std::vector<double> nodes;
    std::vector<double> values;
    for (std::size_t k = 0; k < grid_.size(); ++k) {
      if (grid_[k] > tau && (nodes.empty() || nodes.back() < tau)) {
        nodes.push_back(tau);
        values.push_back(0.0);
      }
      nodes.push_back(grid_[k]);
      values.push_back(q[k]);
    }
    if (nodes.back() < tau) {
      nodes.push_back(tau);
      values.push_back(0.0);
    }
    return ControlPath(TimeGrid(std::move(nodes)), std::move(values), x0);
  }

  /// Pointwise q*_t(x0).
  double rate_at(double x0, double t) const {
    const double tau = tau_at(x0);
    if (t >= tau) return 0.0;
    return integrate(t, tau).disc_h;
  }

  /// Q* at the nodes given its value at the last node.
  std::vector<double> aggregate_nodes(double terminal) const {
    const std::size_t n = grid_.size();
    std::vector<double> Q(n, 0.0);
    Q[n - 1] = terminal;
    for (std::size_t k = n - 1; k-- > 0;) {
      Q[k] = std::exp(-params_.r * (grid_[k + 1] - grid_[k])) * Q[k + 1] + disc_g_[k];
    }
    return Q;
  }

  /// int_end^inf r e^{-r(s-end)} g(s) ds: the infinite-horizon Q* at the last node.
  double aggregate_tail() const {
    const double end = grid_.back();
    return integrate(end, end + 40.0 / params_.r, std::max(quad_width_, 0.02 / params_.r)).disc_g;
  }

  /// sup over the nodes of |xi*(t) - odeint solution of xi' = (1 - e^{-rt}) / (2 + eps S(xi))|.
  double ode_deviation(double tol = 1e-13) const {
    namespace ode = boost::numeric::odeint;
    using State = std::array<double, 1>;
    const double r = params_.r;
    const double eps = params_.epsilon;
    const auto& mu = distribution();
    auto rhs = [&](const State& x, State& dx, double t) {
      dx[0] = -std::expm1(-r * t) / (2.0 + eps * mu.survival(x[0]));
    };
    State x{0.0};
    double worst = 0.0;
    std::size_t k = 0;
    auto observer = [&](const State& s, double) {
      worst = std::max(worst, std::abs(s[0] - xi_[k]));
      ++k;
    };
    auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
    ode::integrate_times(stepper, rhs, x, grid_.nodes().begin(), grid_.nodes().end(),
                         quad_width_ * 1e-3, observer);
    return worst;
  }

 private:
  struct CellIntegrals {
    double disc_h = 0.0;   // r int_a^b e^{-r(s-a)} h
    double disc_g = 0.0;   // r int_a^b e^{-r(s-a)} g
    double plain_h = 0.0;  // int_a^b h
  };

  CellIntegrals integrate(double a, double b, std::optional<double> panel_width = std::nullopt) const {
    CellIntegrals out;
    const double width = panel_width.value_or(quad_width_);
    if (!(b > a)) return out;
    const double r = params_.r;
    const double eps = params_.epsilon;
    const auto& mu = distribution();
    double lo = a;
    auto it = std::upper_bound(kinks_.begin(), kinks_.end(), a);
    while (lo < b) {
      const double hi = it != kinks_.end() && *it < b ? *it++ : b;
      if (hi <= lo) continue;
      if (mu.is_atomic()) {
        const double s = mu.survival(xi_at(0.5 * (lo + hi)));
        const double h = 1.0 / (2.0 + eps * s);
        const double w = std::exp(-r * (lo - a)) * -std::expm1(-r * (hi - lo));
        out.disc_h += w * h;
        out.disc_g += w * s * h;
        out.plain_h += (hi - lo) * h;
      } else {
        const auto panel = [&](double p, double q) {
          const double half = 0.5 * (q - p);
          const double mid = 0.5 * (p + q);
          for (std::size_t i = 0; i < quadrature::kGaussNodes.size(); ++i) {
            const double s_t = mid + half * quadrature::kGaussNodes[i];
            const double wt = quadrature::kGaussWeights[i] * half;
            const double s = mu.survival(xi_at(s_t));
            const double h = 1.0 / (2.0 + eps * s);
            const double e = r * std::exp(-r * (s_t - a));
            out.disc_h += wt * e * h;
            out.disc_g += wt * e * s * h;
            out.plain_h += wt * h;
          }
        };
        const auto panels = static_cast<std::size_t>(std::ceil((hi - lo) / width - 1e-9));
        const std::size_t m = std::max<std::size_t>(panels, 1);
        const double w = (hi - lo) / static_cast<double>(m);
        for (std::size_t j = 0; j < m; ++j) panel(lo + w * static_cast<double>(j), j + 1 == m ? hi : lo + w * static_cast<double>(j + 1));
      }
      lo = hi;
    }
    return out;
  }

  PsiFunction psi_;
  ModelParams params_;
  TimeGrid grid_;
  double quad_width_ = 1.0;
  std::vector<double> kinks_;
  std::vector<double> xi_;
  std::vector<double> disc_h_;
  std::vector<double> disc_g_;
  std::vector<double> h_prefix_;
};

/// Default infinite-horizon grid end: past every atom's exploitation time,
/// or far enough that e^{-rT} S(xi*(T)) < 1e-12 r.
inline double default_truncation(const InitialDistribution& mu, const ModelParams& params,
                                 std::span<const double> players = {}) {
  const PsiFunction psi_fn(mu, params.epsilon);
  double end = tau_star(psi_fn, params.r, mu.tail_cutoff(1e-12));
  if (!mu.is_atomic() && !std::holds_alternative<DensityTable>(mu.variant())) {
    end = std::max(end, std::log(1.0 / params.r) / params.r);
  }
  for (double x0 : players) end = std::max(end, tau_star(psi_fn, params.r, x0));
  return end > 0.0 ? end : 1.0;
}

struct PlayerTrajectory {
  double x0 = 0.0;
  std::optional<double> tau;
  ResponseRegime regime = ResponseRegime::Early;
  double y_terminal = 0.0;
  ControlPath control;
  std::vector<double> rate;     // on the solution grid
  std::vector<double> reserve;  // on the solution grid
};

struct EquilibriumDiagnostics {
  double fixed_point_residual = 0.0;   // sup |aggregate_of(Q*) - Q*|
  double compatibility_margin = 0.0;   // inf of 1 - eps Q* + (eps/r) Qdot*
  double identity_residual = 0.0;      // sup |1 - eps Q* + (eps/r) Qdot* - 2/(2 + eps S(xi*))|
  double bound_excess = 0.0;           // max of Q* - S(xi*)/(2 + eps S(xi*))
  double monotonicity_violation = 0.0; // max increase of Q* between nodes
  double xi_ode_deviation = 0.0;
  double gamma_residual = 0.0;         // finite horizon only
};

struct EquilibriumSolution {
  ModelParams params;
  TimeGrid grid;
  std::vector<double> xi_star;
  ProductionPath Q_star;
  double terminal_Q = 0.0;
  std::vector<PlayerTrajectory> players;
  EquilibriumDiagnostics diagnostics;
  std::function<double(double)> tau_star;
};

namespace detail {

inline std::optional<double> estimate_tail_decay(std::span<const double> t, std::span<const double> Q) {
  const std::size_t n = Q.size();
  if (n < 2 || Q[n - 1] <= 0.0) return kInfinity;
  if (Q[n - 2] <= Q[n - 1]) return 0.0;
  return std::log(Q[n - 2] / Q[n - 1]) / (t[n - 1] - t[n - 2]);
}

/// Cell averages of 1 - eps Q + (eps/r) Qdot = 2/(2 + eps S(xi*)): chord slope,
/// cubic (or trapezoid) mean of Q, Gauss mean of the right side. Plus the
/// structural bounds.
inline void fill_structure(const EquilibriumProfile& prof, const ProductionPath& Q, EquilibriumDiagnostics& d) {
  const auto& g = Q.grid();
  const auto v = Q.values();
  const auto& p = prof.params();
  d.compatibility_margin = compatibility_check(Q, p).margin;
  const bool smooth = !prof.distribution().is_atomic();
  double id = 0.0;
  double mono = 0.0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const double h = g[k + 1] - g[k];
    double mean_q = 0.5 * (v[k] + v[k + 1]);
    if (smooth && k > 0 && k + 2 < g.size() && std::abs(g[k] - g[k - 1] - h) < 1e-9 * h &&
        std::abs(g[k + 2] - g[k + 1] - h) < 1e-9 * h) {
      mean_q = (13.0 * (v[k] + v[k + 1]) - v[k - 1] - v[k + 2]) / 24.0;
    }
    const double rhs = quadrature::gauss_legendre(
                           [&](double t) { return 2.0 / (2.0 + p.epsilon * prof.survival_at(t)); }, g[k], g[k + 1]) /
                       h;
    const double lhs = 1.0 - p.epsilon * mean_q + p.epsilon / p.r * Q.slope(k);
    id = std::max(id, std::abs(lhs - rhs));
    mono = std::max(mono, v[k + 1] - v[k]);
  }
  double bound = -kInfinity;
  const auto xi = prof.xi();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double s = prof.distribution().survival(xi[k]);
    bound = std::max(bound, v[k] - s / (2.0 + p.epsilon * s));
  }
  d.identity_residual = id;
  d.monotonicity_violation = mono;
  d.bound_excess = bound;
}

inline double fixed_point_residual(const ProductionPath& Q, const InitialDistribution& mu, const ModelParams& p) {
  const ProductionPath image = aggregate_of(Q, mu, p);
  double worst = 0.0;
  const auto& g = image.grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    worst = std::max(worst, std::abs(image.values()[k] - Q.value_at(g[k])));
  }
  return worst;
}

}  // namespace detail

/// Q* on the profile grid for the infinite horizon.
inline ProductionPath aggregate_star(const EquilibriumProfile& prof) {
  const auto Q = prof.aggregate_nodes(prof.aggregate_tail());
  const auto decay = detail::estimate_tail_decay(prof.grid().nodes(), Q);
  return ProductionPath(prof.grid(), Q, decay);
}

inline ProductionPath aggregate_star(const InitialDistribution& mu, const ModelParams& params, GridOptions opts = {}) {
  const double end = opts.truncation.value_or(default_truncation(mu, params));
  return aggregate_star(EquilibriumProfile(mu, params, end, opts.n_steps));
}

inline ControlPath q_star(const InitialDistribution& mu, const ModelParams& params, double x0, GridOptions opts = {}) {
  const double players[] = {x0};
  const double end = opts.truncation.value_or(default_truncation(mu, params, players));
  return EquilibriumProfile(mu, params, end, opts.n_steps, players).control(x0);
}

/// Full infinite-horizon equilibrium with per-player trajectories and
/// diagnostics. `check_fixed_point` and `check_ode` can be switched off
/// for speed.
inline EquilibriumSolution equilibrium_infinite(const InitialDistribution& mu, const ModelParams& params,
                                                GridOptions opts = {}, std::span<const double> players = {},
                                                bool check_fixed_point = true, bool check_ode = true) {
  if (params.horizon.is_finite()) throw std::invalid_argument("equilibrium_infinite: horizon is finite");
  const double end = opts.truncation.value_or(default_truncation(mu, params, players));
  auto prof = std::make_shared<EquilibriumProfile>(mu, params, end, opts.n_steps, players);
  EquilibriumSolution sol;
  sol.params = params;
  sol.grid = prof->grid();
  sol.xi_star.assign(prof->xi().begin(), prof->xi().end());
  sol.Q_star = aggregate_star(*prof);
  sol.terminal_Q = 0.0;
  for (double x0 : players) {
    PlayerTrajectory pt;
    pt.x0 = x0;
    pt.tau = prof->tau_at(x0);
    pt.rate = prof->rate_nodes(x0);
    pt.reserve = prof->reserve_nodes(x0, pt.rate);
    pt.control = prof->control(x0);
    sol.players.push_back(std::move(pt));
  }
  detail::fill_structure(*prof, sol.Q_star, sol.diagnostics);
  if (check_fixed_point) sol.diagnostics.fixed_point_residual = detail::fixed_point_residual(sol.Q_star, mu, params);
  if (check_ode) sol.diagnostics.xi_ode_deviation = prof->ode_deviation();
  sol.tau_star = [prof](double x0) { return prof->tau_at(x0); };
  return sol;
}

/// Closed-form two-group equilibrium: a share 1 - p2 of producers holds x1,
/// the rest x2 >= x1.
struct TwoGroupSolution {
  ModelParams params;
  double x1 = 0.0;
  double x2 = 0.0;
  double p2 = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;

  double rate1(double t) const {
    if (t >= tau1) return 0.0;
    return -std::expm1(-params.r * (tau1 - t)) / (2.0 + params.epsilon);
  }

  double rate2(double t) const {
    const double r = params.r;
    const double eps = params.epsilon;
    if (t >= tau2) return 0.0;
    const double late = -std::expm1(-r * (tau2 - std::max(t, tau1))) / (2.0 + eps * p2);
    if (t >= tau1) return late;
    return -std::expm1(-r * (tau1 - t)) / (2.0 + eps) + std::exp(-r * (tau1 - t)) * late;
  }
};

inline TwoGroupSolution two_group_closed_form(double x1, double x2, double p2, const ModelParams& params) {
  if (!(x1 >= 0.0) || !(x2 >= x1) || !std::isfinite(x2)) {
    throw std::domain_error("two_group_closed_form: need 0 <= x1 <= x2");
  }
  if (!(p2 >= 0.0 && p2 <= 1.0)) throw std::domain_error("two_group_closed_form: p2 must lie in [0, 1]");
  TwoGroupSolution s;
  s.params = params;
  s.x1 = x1;
  s.x2 = x2;
  s.p2 = p2;
  const double eps = params.epsilon;
  s.tau1 = phi_inv((2.0 + eps) * x1, params.r);
  s.tau2 = phi_inv(eps * (1.0 - p2) * x1 + (2.0 + eps * p2) * x2, params.r);
  return s;
}

/// Picard iteration Q <- (1 - damping) Q + damping aggregate_of(Q) started
/// from Q = 1/(2+eps); returns the sup distance to `target` after each step.
/// Stops early (returning what it has) if an iterate is not compatible.
inline std::vector<double> picard_distances(const InitialDistribution& mu, const ModelParams& params,
                                            const ProductionPath& target, std::size_t iterations,
                                            double damping = 1.0) {
  std::vector<double> out;
  ProductionPath Q = ProductionPath::constant(target.grid(), params.max_aggregate(),
                                              params.horizon.is_finite() ? std::nullopt : std::optional<double>(0.0));
  for (std::size_t i = 0; i < iterations; ++i) {
    ProductionPath next;
    try {
      next = aggregate_of(Q, mu, params);
    } catch (const CompatibilityError&) {
      break;
    }
    const auto& g = target.grid();
    std::vector<double> v(g.size());
    double dist = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      v[k] = (1.0 - damping) * Q.value_at(g[k]) + damping * next.value_at(g[k]);
      dist = std::max(dist, std::abs(v[k] - target.values()[k]));
    }
    out.push_back(dist);
    Q = ProductionPath(g, std::move(v), next.tail_decay());
  }
  return out;
}

}  // namespace mfg

#endif  // MFG_EQUILIBRIUM_INFINITE_HPP
