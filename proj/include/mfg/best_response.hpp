#ifndef MFG_BEST_RESPONSE_HPP
#define MFG_BEST_RESPONSE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfg/distributions.hpp"
#include "mfg/model.hpp"
#include "mfg/monopoly.hpp"
#include "mfg/quadrature.hpp"
#include "mfg/special_functions.hpp"

namespace mfg {

/// The aggregate path violates 1 - eps Q + (eps/r) Qdot > 0, so the
/// exploitation time cannot be recovered by inverting xi^Q.
class CompatibilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A candidate control left the admissible set (negative extraction).
class AdmissibilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// xi^Q(t): resource extracted by time t by the producer who would run dry
/// exactly at t. For linear-between-nodes Q,
///   xi^Q(t) = (1 - eps Q_t) phi(t) / 2 + eps (t Q_t - int_0^t Q) / 2,
/// which is exact and evaluates without nested integrals.
class XiFunction {
 public:
  XiFunction(ProductionPath Q, const ModelParams& params) : Q_(std::move(Q)), params_(params) {
    const double cap = params_.max_aggregate() + 1e-9;
    for (double q : Q_.values()) {
      if (q > cap) {
        throw std::domain_error("XiFunction: aggregate " + std::to_string(q) + " exceeds 1/(2+eps)");
      }
    }
    if (params_.horizon.is_finite() && std::abs(Q_.end() - params_.horizon.end()) > 1e-9 * params_.horizon.end()) {
      throw std::invalid_argument("XiFunction: finite-horizon path must end at T");
    }
    margin_ = compatibility_check(Q_, params_).margin;
    if (!params_.horizon.is_finite() && Q_.grid().size() > 0) {
      const auto k = Q_.tail_decay();
      const double q_end = Q_.values().back();
      if (k && std::isfinite(*k)) {
        margin_ = std::min(margin_, 1.0 - params_.epsilon * q_end * (1.0 + *k / params_.r));
      } else if (k && q_end > 1e-12) {
        margin_ = -kInfinity;  // jump to zero
      }
    }
    if (!(margin_ > 0.0)) {
      throw CompatibilityError("XiFunction: compatibility margin " + std::to_string(margin_) + " is not positive");
    }
    const auto& g = Q_.grid();
    nodes_.resize(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) nodes_[k] = eval(g[k], Q_.values()[k]);
  }

  const ProductionPath& path() const { return Q_; }
  const ModelParams& params() const { return params_; }
  double margin() const { return margin_; }
  std::span<const double> node_values() const { return nodes_; }

  double operator()(double t) const { return eval(t, Q_.value_at(t)); }

  /// (1/2) {1 - eps Q_t + (eps/r) Qdot_t} (1 - e^{-rt}) with the right slope.
  double derivative(double t) const {
    const double c = 1.0 - params_.epsilon * Q_.value_at(t) + params_.epsilon / params_.r * Q_.slope_at(t);
    return 0.5 * c * phi_derivative(t, params_.r);
  }

  /// beta_T = (1 - e^{-rT}) / (2r).
  double beta() const { return beta_at(params_.horizon.end()); }
  double beta_at(double t) const { return -std::expm1(-params_.r * t) / (2.0 * params_.r); }

  /// xi^Q(T) (finite horizon).
  double at_horizon() const { return nodes_.back(); }

  /// eta^Q(T) = (1/2) int_0^T (1 - eps Q).
  double eta() const {
    const double T = params_.horizon.end();
    return 0.5 * (T - params_.epsilon * Q_.integral(T));
  }

  /// tau^Q(x0) = (xi^Q)^{-1}(x0); nullopt if x0 > xi^Q(T).
  std::optional<double> inverse(double x0) const {
    if (!(x0 >= 0.0)) throw std::domain_error("tau_of_Q: negative reserve");
    if (x0 == 0.0) return 0.0;
    const auto& g = Q_.grid();
    if (x0 <= nodes_.back()) {
      auto it = std::lower_bound(nodes_.begin(), nodes_.end(), x0);
      const auto k = static_cast<std::size_t>(it - nodes_.begin());
      if (nodes_[k] == x0) return g[k];
      return solve(x0, g[k - 1], g[k]);
    }
    if (params_.horizon.is_finite()) return std::nullopt;
    double lo = g.back();
    double step = std::max(lo, 1.0 / params_.r);
    double hi = lo + step;
    while ((*this)(hi) < x0) {
      lo = hi;
      step *= 2.0;
      hi = lo + step;
      if (!std::isfinite(hi)) throw std::runtime_error("tau_of_Q: could not bracket exploitation time");
    }
    return solve(x0, lo, hi);
  }

 private:
  double eval(double t, double q_t) const {
    const double eps = params_.epsilon;
    return 0.5 * (1.0 - eps * q_t) * phi(t, params_.r) + 0.5 * eps * (t * q_t - Q_.integral(t));
  }

  double solve(double x0, double lo, double hi) const {
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double f = (*this)(t) - x0;
      if (f > 0.0) hi = t; else lo = t;
      const double d = derivative(t);
      double next = d > 0.0 ? t - f / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) <= 1e-15 * std::max(1.0, t) || hi - lo <= 1e-15 * std::max(1.0, hi)) return next;
      t = next;
    }
    return t;
  }

  ProductionPath Q_;
  ModelParams params_;
  double margin_ = 1.0;
  std::vector<double> nodes_;
};

inline XiFunction xi_of_Q(const ProductionPath& Q, const ModelParams& params) { return XiFunction(Q, params); }

inline std::optional<double> tau_of_Q(const XiFunction& xi, double x0) { return xi.inverse(x0); }

/// Y_T(x0) = (eta^Q(T) - x0) / beta_T on the band xi^Q(T) <= x0 <= eta^Q(T).
inline double terminal_adjoint_Q(const XiFunction& xi, double x0) {
  if (!xi.params().horizon.is_finite()) throw RegimeError("terminal_adjoint_Q: needs a finite horizon");
  const double lo = xi.at_horizon();
  const double hi = xi.eta();
  const double slack = 1e-12 * std::max(1.0, hi);
  if (x0 < lo - slack || x0 > hi + slack) {
    throw RegimeError("terminal_adjoint_Q: reserve " + std::to_string(x0) + " outside [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  }
  return (hi - x0) / xi.beta();
}

enum class ResponseRegime { Early, Exact, None };

inline const char* to_string(ResponseRegime r) {
  switch (r) {
    case ResponseRegime::Early: return "early";
    case ResponseRegime::Exact: return "exact";
    case ResponseRegime::None: return "none";
  }
  return "?";
}

/// Regime, exploitation time and terminal adjoint of one producer.
struct ResponsePlan {
  double x0 = 0.0;
  ResponseRegime regime = ResponseRegime::Early;
  std::optional<double> tau;
  double y_terminal = 0.0;  // Y_T(x0) in the exact regime, else 0
};

inline ResponsePlan plan_response(const XiFunction& xi, double x0) {
  if (!(x0 >= 0.0) || !std::isfinite(x0)) throw std::domain_error("best response: x0 must be finite and >= 0");
  ResponsePlan plan;
  plan.x0 = x0;
  if (auto tau = xi.inverse(x0)) {
    plan.tau = tau;
    return plan;
  }
  if (x0 <= xi.eta()) {
    plan.regime = ResponseRegime::Exact;
    plan.tau = xi.params().horizon.end();
    plan.y_terminal = terminal_adjoint_Q(xi, x0);
  } else {
    plan.regime = ResponseRegime::None;
  }
  return plan;
}

/// q^Q_t(x0) for the planned regime.
inline double response_rate(const XiFunction& xi, const ResponsePlan& plan, double t) {
  const auto& p = xi.params();
  const double a = 1.0 - p.epsilon * xi.path().value_at(t);
  switch (plan.regime) {
    case ResponseRegime::Early: {
      const double tau = *plan.tau;
      if (t > tau) return 0.0;
      const double a_tau = 1.0 - p.epsilon * xi.path().value_at(tau);
      return 0.5 * (a - a_tau * std::exp(-p.r * (tau - t)));
    }
    case ResponseRegime::Exact:
      return 0.5 * (a - plan.y_terminal * std::exp(-p.r * (p.horizon.end() - t)));
    case ResponseRegime::None:
      return 0.5 * a;
  }
  return 0.0;
}

/// int_0^t q^Q_s(x0) ds in closed form.
inline double response_extracted(const XiFunction& xi, const ResponsePlan& plan, double t) {
  const auto& p = xi.params();
  const auto half_a = [&](double s) { return 0.5 * (s - p.epsilon * xi.path().integral(s)); };
  switch (plan.regime) {
    case ResponseRegime::Early: {
      const double tau = *plan.tau;
      const double s = std::min(t, tau);
      const double a_tau = 1.0 - p.epsilon * xi.path().value_at(tau);
      return half_a(s) - 0.5 * a_tau * (std::exp(-p.r * (tau - s)) - std::exp(-p.r * tau)) / p.r;
    }
    case ResponseRegime::Exact: {
      const double T = p.horizon.end();
      return half_a(t) - 0.5 * plan.y_terminal * (std::exp(-p.r * (T - t)) - std::exp(-p.r * T)) / p.r;
    }
    case ResponseRegime::None:
      return half_a(t);
  }
  return 0.0;
}

struct BestResponse {
  ControlPath control;
  std::optional<double> tau;
  double y_terminal = 0.0;
  ResponseRegime regime = ResponseRegime::Early;
};

/// Samples the optimal response on the aggregate's grid, with the
/// exploitation time added as a node.
inline BestResponse best_response_control(const XiFunction& xi, double x0) {
  const ResponsePlan plan = plan_response(xi, x0);
  TimeGrid grid = xi.path().grid();
  if (plan.regime == ResponseRegime::Early) {
    const double tau = *plan.tau;
    if (tau > grid.back()) {
      std::vector<double> nodes(grid.nodes().begin(), grid.nodes().end());
      nodes.push_back(tau);
      grid = TimeGrid(std::move(nodes));
    } else if (!grid.find_node(tau, 1e-12 * std::max(1.0, tau))) {
      const double s[] = {tau};
      grid = grid.with_nodes(s);
    }
  }
  std::vector<double> q(grid.size());
  double lowest = kInfinity;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    q[k] = response_rate(xi, plan, grid[k]);
    lowest = std::min(lowest, q[k]);
  }
  if (lowest < -1e-12) {
    throw AdmissibilityError("best_response_control: optimal-control candidate turns negative (" +
                             std::to_string(lowest) + ") for x0 = " + std::to_string(x0));
  }
  return {ControlPath(std::move(grid), std::move(q), x0), plan.tau, plan.y_terminal, plan.regime};
}

inline BestResponse best_response_control(const ProductionPath& Q, double x0, const ModelParams& params) {
  return best_response_control(XiFunction(Q, params), x0);
}

/// Q^Q_T: aggregate terminal rate assembled from survival and partial means,
///   (1/2)(1 - eps Q_T) S(xi_T) - [eta (S(xi_T) - S(eta)) - int_{xi_T}^{eta} x mu(dx)] / (2 beta_T).
inline double terminal_aggregate(const XiFunction& xi, const InitialDistribution& mu) {
  const auto& p = xi.params();
  const double xi_T = xi.at_horizon();
  const double eta = xi.eta();
  const double a_T = 1.0 - p.epsilon * xi.path().values().back();
  const double s_xi = mu.survival(xi_T);
  const double s_eta = mu.survival(eta);
  const double pm = partial_mean(mu, xi_T, eta);
  return 0.5 * a_T * s_xi - (eta * (s_xi - s_eta) - pm) / (2.0 * xi.beta());
}

namespace detail {

inline TimeGrid response_grid(const XiFunction& xi, const InitialDistribution& mu) {
  const TimeGrid& base = xi.path().grid();
  std::vector<double> taus;
  for (double b : mu.breakpoints()) {
    if (b <= 0.0) continue;
    if (b > base.back() && xi.params().horizon.is_finite()) continue;
    if (auto tau = xi.inverse(b); tau && *tau < base.back()) taus.push_back(*tau);
  }
  return base.with_nodes(taus);
}

}  // namespace detail

/// Q^Q via the time-domain representation
///   Q^Q_t = (r/2) int_t^T S(xi^Q(s)) e^{-r(s-t)} {1 - eps Q_s + (eps/r) Qdot_s} ds + e^{-r(T-t)} Q^Q_T,
/// valid for any reserve distribution (T = inf drops the terminal term).
inline ProductionPath aggregate_of_fubini(const XiFunction& xi, const InitialDistribution& mu) {
  const auto& p = xi.params();
  const auto& Q = xi.path();
  const TimeGrid grid = detail::response_grid(xi, mu);
  const std::size_t n = grid.size();
  std::vector<double> out(n, 0.0);
  const double t_end = grid.back();
  if (p.horizon.is_finite()) {
    out[n - 1] = terminal_aggregate(xi, mu);
  } else {
    out[n - 1] = 0.5 * mu.survival(xi(t_end)) * (1.0 - p.epsilon * Q.values().back());
  }
  for (std::size_t k = n - 1; k-- > 0;) {
    const double a = grid[k];
    const double b = grid[k + 1];
    const double slope = Q.slope_at(0.5 * (a + b));
    const auto integrand = [&](double s) {
      const double c = 1.0 - p.epsilon * Q.value_at(s) + p.epsilon / p.r * slope;
      return std::exp(-p.r * (s - a)) * mu.survival(xi(s)) * c;
    };
    out[k] = std::exp(-p.r * (b - a)) * out[k + 1] + 0.5 * p.r * quadrature::gauss_legendre(integrand, a, b);
  }
  return ProductionPath(grid, std::move(out), Q.tail_decay());
}

/// Q^Q_t = int_{(xi^Q(t), inf)} q^Q_t(x0) mu(dx0). Atoms are summed
/// exactly; continuous distributions go through aggregate_of_fubini.
inline ProductionPath aggregate_of(const XiFunction& xi, const InitialDistribution& mu) {
  const Atoms* atoms = mu.atoms();
  if (atoms == nullptr) return aggregate_of_fubini(xi, mu);
  const TimeGrid grid = detail::response_grid(xi, mu);
  std::vector<double> out(grid.size(), 0.0);
  for (const auto& atom : atoms->atoms()) {
    if (atom.probability == 0.0 || atom.location == 0.0) continue;
    const ResponsePlan plan = plan_response(xi, atom.location);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      out[k] += atom.probability * response_rate(xi, plan, grid[k]);
    }
  }
  return ProductionPath(grid, std::move(out), xi.path().tail_decay());
}

inline ProductionPath aggregate_of(const ProductionPath& Q, const InitialDistribution& mu, const ModelParams& params) {
  return aggregate_of(XiFunction(Q, params), mu);
}

}  // namespace mfg

#endif  // MFG_BEST_RESPONSE_HPP
