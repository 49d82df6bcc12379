#ifndef MFG_ORACLE_HPP
#define MFG_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/model.hpp"
#include "mfg/quadrature.hpp"

namespace mfg {

/// maximize sum_i w_i q_i (a_i - q_i)  s.t.  sum_i dt q_i <= x0, q_i >= 0,
/// on n uniform cells sampled at their midpoints t_i.
struct DiscreteProblem {
  double dt = 0.0;
  double r = 1.0;
  double x0 = 0.0;
  std::vector<double> t;  // cell midpoints
  std::vector<double> a;  // 1 - eps Q(t_i)
  std::vector<double> w;  // e^{-r t_i} dt
};

/// Discretizes J^Q on [0, end] with n cells; `end` defaults to T and is
/// required for the infinite horizon.
inline DiscreteProblem discretize(const ProductionPath& Q, const ModelParams& params, double x0, std::size_t n,
                                  std::optional<double> end = std::nullopt) {
  if (n < 2) throw std::invalid_argument("discretize: need n >= 2");
  if (!(x0 >= 0.0)) throw std::domain_error("discretize: x0 must be >= 0");
  const double stop = end.value_or(params.horizon.end());
  if (!(stop > 0.0) || !std::isfinite(stop)) throw std::invalid_argument("discretize: need a finite end time");
  DiscreteProblem p;
  p.dt = stop / static_cast<double>(n);
  p.r = params.r;
  p.x0 = x0;
  p.t.resize(n);
  p.a.resize(n);
  p.w.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.t[i] = (static_cast<double>(i) + 0.5) * p.dt;
    p.a[i] = 1.0 - params.epsilon * Q.value_at(p.t[i]);
    p.w[i] = std::exp(-params.r * p.t[i]) * p.dt;
  }
  return p;
}

struct OracleSolution {
  std::vector<double> q;
  double value = 0.0;
  double lambda = 0.0;
  double budget_used = 0.0;
};

namespace detail {

inline double oracle_rate(const DiscreteProblem& p, std::size_t i, double lambda) {
  return std::max(0.5 * (p.a[i] - lambda * std::exp(p.r * p.t[i])), 0.0);
}

inline double oracle_budget(const DiscreteProblem& p, double lambda) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.t.size(); ++i) acc += p.dt * oracle_rate(p, i, lambda);
  return acc;
}

}  // namespace detail

/// q_i(lambda) = (a_i - lambda e^{r t_i})^+ / 2 with lambda from bisection on
/// the budget, then solved exactly on the final active set.
inline OracleSolution oracle_solve(const DiscreteProblem& p) {
  const std::size_t n = p.t.size();
  OracleSolution out;
  double lambda = 0.0;
  if (detail::oracle_budget(p, 0.0) > p.x0) {
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t i = 0; i < n; ++i) hi = std::max(hi, p.a[i] * std::exp(-p.r * p.t[i]));
    for (int it = 0; it < 200 && hi - lo > 1e-17 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (detail::oracle_budget(p, mid) > p.x0) lo = mid; else hi = mid;
    }
    lambda = 0.5 * (lo + hi);
    double sum_a = 0.0;
    double sum_e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (detail::oracle_rate(p, i, lambda) > 0.0) {
        sum_a += p.a[i];
        sum_e += std::exp(p.r * p.t[i]);
      }
    }
    if (sum_e > 0.0) {
      const double polished = (sum_a - 2.0 * p.x0 / p.dt) / sum_e;
      bool same = polished >= 0.0;
      for (std::size_t i = 0; same && i < n; ++i) {
        same = (detail::oracle_rate(p, i, lambda) > 0.0) == (detail::oracle_rate(p, i, polished) > 0.0);
      }
      if (same) lambda = polished;
    }
  }
  out.lambda = lambda;
  out.q.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.q[i] = detail::oracle_rate(p, i, lambda);
    out.value += p.w[i] * out.q[i] * (p.a[i] - out.q[i]);
    out.budget_used += p.dt * out.q[i];
  }
  return out;
}

inline double oracle_value_gap(double closed_form_value, const DiscreteProblem& p) {
  return closed_form_value - oracle_solve(p).value;
}

namespace detail {

/// Gauss-Legendre payoff of cell k of q, shifted by a constant.
inline double cell_payoff(const ControlPath& q, const ProductionPath& Q, const ModelParams& params, std::size_t k,
                          double shift) {
  const auto& g = q.grid();
  const double lo = g[k];
  const double hi = g[k + 1];
  const double m = (q.values()[k + 1] - q.values()[k]) / (hi - lo);
  const auto rate = [&](double t) { return q.values()[k] + m * (t - lo) + shift; };
  if (std::min(rate(lo), rate(hi)) < -1e-12) throw std::domain_error("payoff: negative extraction rate");
  return quadrature::gauss_legendre(
      [&](double t) {
        const double v = rate(t);
        return std::exp(-params.r * t) * v * (1.0 - params.epsilon * Q.value_at(t) - v);
      },
      lo, hi);
}

inline double cell_mass(const ControlPath& q, std::size_t k, double shift) {
  const auto& g = q.grid();
  return (g[k + 1] - g[k]) * (0.5 * (q.values()[k] + q.values()[k + 1]) + shift);
}

inline void check_budget(double mass, double x0) {
  if (mass > x0 + 1e-6 * std::max(1.0, x0)) {
    throw std::domain_error("payoff: control extracts " + std::to_string(mass) + " > x0");
  }
}

}  // namespace detail

/// J^Q(q) = int e^{-rt} q (1 - eps Q - q) dt for an admissible control
/// (q >= 0, total extraction <= x0), plus an optional constant shift on each
/// cell of q's grid. Gauss-Legendre per cell.
inline double payoff(const ControlPath& q, const ProductionPath& Q, const ModelParams& params,
                     std::span<const double> cell_shift = {}) {
  const auto& g = q.grid();
  if (!cell_shift.empty() && cell_shift.size() + 1 != g.size()) {
    throw std::invalid_argument("payoff: shift needs one value per cell");
  }
  double value = 0.0;
  double mass = 0.0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const double shift = cell_shift.empty() ? 0.0 : cell_shift[k];
    value += detail::cell_payoff(q, Q, params, k, shift);
    mass += detail::cell_mass(q, k, shift);
  }
  detail::check_budget(mass, q.x0());
  return value;
}

/// min over `trials` random admissible perturbations q = q* + delta of
/// J(q*) - J(q). delta is piecewise constant on the cells of q*: a
/// nonpositive dent where q* > 0 (never below zero), usually paired with a
/// bump elsewhere carrying the same mass, plus an extra bump when q* leaves
/// part of the budget unused. Only the cells a trial touches are re-integrated.
inline double perturbation_test(const ControlPath& q_star, const ProductionPath& Q, const ModelParams& params,
                                std::size_t trials, std::uint64_t seed = 20240607) {
  const auto& g = q_star.grid();
  const auto v = q_star.values();
  const std::size_t cells = g.size() - 1;
  if (cells == 0) return 0.0;
  std::vector<std::size_t> support;
  std::vector<double> base(cells);
  double mass = 0.0;
  for (std::size_t k = 0; k < cells; ++k) {
    if (std::min(v[k], v[k + 1]) > 0.0) support.push_back(k);
    base[k] = detail::cell_payoff(q_star, Q, params, k, 0.0);
    mass += detail::cell_mass(q_star, k, 0.0);
  }
  detail::check_budget(mass, q_star.x0());
  const double slack = q_star.x0() - mass;
  const bool has_slack = slack > 1e-9 * std::max(1.0, q_star.x0());
  if (support.empty() && !has_slack) return 0.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto pick = [&](std::size_t n) {
    return std::min(static_cast<std::size_t>(unit(rng) * static_cast<double>(n)), n - 1);
  };
  std::vector<double> delta(cells, 0.0);
  std::vector<std::size_t> touched;
  const auto bump = [&](double amount) {
    const std::size_t start = pick(cells);
    const std::size_t len = 1 + pick(std::min<std::size_t>(50, cells - start));
    const double width = g[start + len] - g[start];
    for (std::size_t k = start; k < start + len; ++k) {
      delta[k] += amount / width;
      touched.push_back(k);
    }
  };

  double worst = kInfinity;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    for (std::size_t k : touched) delta[k] = 0.0;
    touched.clear();
    if (!support.empty()) {
      // contiguous run of support cells
      const std::size_t i = pick(support.size());
      std::size_t j = i;
      const std::size_t max_len = 1 + pick(50);
      while (j + 1 < support.size() && support[j + 1] == support[j] + 1 && j - i + 1 < max_len) ++j;
      double floor = kInfinity;
      for (std::size_t s = i; s <= j; ++s) floor = std::min({floor, v[support[s]], v[support[s] + 1]});
      const double depth = unit(rng) * floor;
      double removed = 0.0;
      for (std::size_t s = i; s <= j; ++s) {
        delta[support[s]] -= depth;
        touched.push_back(support[s]);
        removed += depth * (g[support[s] + 1] - g[support[s]]);
      }
      if (unit(rng) < 0.85) bump(removed);
    }
    if (has_slack && unit(rng) < 0.5) bump(unit(rng) * slack);
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    double gain = 0.0;
    double extra = 0.0;
    for (std::size_t k : touched) {
      gain += detail::cell_payoff(q_star, Q, params, k, delta[k]) - base[k];
      extra += (g[k + 1] - g[k]) * delta[k];
    }
    detail::check_budget(mass + extra, q_star.x0());
    worst = std::min(worst, -gain);
  }
  return worst;
}

}  // namespace mfg

#endif  // MFG_ORACLE_HPP
