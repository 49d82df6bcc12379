#ifndef MFG_MODEL_HPP
#define MFG_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfg {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Planning horizon: a finite terminal time T or the infinite horizon.
class Horizon {
 public:
  static Horizon infinite() { return Horizon{}; }
  static Horizon finite(double T) {
    if (!(T > 0.0) || !std::isfinite(T)) {
      throw std::domain_error("Horizon: finite horizon must be positive and finite");
    }
    Horizon h;
    h.end_ = T;
    return h;
  }

  bool is_finite() const { return std::isfinite(end_); }
  /// T for a finite horizon, +inf otherwise.
  double end() const { return end_; }

  friend bool operator==(const Horizon&, const Horizon&) = default;

 private:
  double end_ = kInfinity;
};

struct ModelParams {
  double r = 1.0;
  double epsilon = 0.0;
  Horizon horizon = Horizon::infinite();

  ModelParams() = default;
  ModelParams(double rate, double eps, Horizon h = Horizon::infinite())
      : r(rate), epsilon(eps), horizon(h) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::domain_error("ModelParams: r must be positive");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
      throw std::domain_error("ModelParams: epsilon must be nonnegative");
    }
  }

  /// Upper bound 1/(2+eps) on any aggregate production rate.
  double max_aggregate() const { return 1.0 / (2.0 + epsilon); }
};

/// Strictly increasing time nodes starting at 0.
class TimeGrid {
 public:
  TimeGrid() : nodes_{0.0} {}

  explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty() || nodes_.front() != 0.0) {
      throw std::invalid_argument("TimeGrid: first node must be 0");
    }
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      if (!(nodes_[i] > nodes_[i - 1]) || !std::isfinite(nodes_[i])) {
        throw std::invalid_argument("TimeGrid: nodes must be finite and strictly increasing");
      }
    }
  }

  /// `cells` equal cells on [0, end] with the structural times merged in.
  static TimeGrid uniform(double end, std::size_t cells, std::span<const double> structural = {}) {
    if (!(end >= 0.0) || !std::isfinite(end)) throw std::invalid_argument("TimeGrid: bad end time");
    if (end == 0.0) return TimeGrid{}.with_nodes(structural);
    if (cells == 0) throw std::invalid_argument("TimeGrid: need at least one cell");
    std::vector<double> nodes(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) {
      nodes[i] = end * static_cast<double>(i) / static_cast<double>(cells);
    }
    nodes.back() = end;
    return TimeGrid(std::move(nodes)).with_nodes(structural);
  }

  /// Returns a grid containing these nodes as well. A structural node
  /// replaces any existing node closer than 1e-3 of the mean spacing, so
  /// kinks sit exactly on nodes without creating sliver cells.
  TimeGrid with_nodes(std::span<const double> structural) const {
    if (structural.empty()) return *this;
    std::vector<std::pair<double, bool>> all;
    all.reserve(nodes_.size() + structural.size());
    for (double t : nodes_) all.emplace_back(t, false);
    for (double s : structural) {
      if (!std::isfinite(s) || s < 0.0) throw std::invalid_argument("TimeGrid: bad structural node");
      all.emplace_back(s, true);
    }
    std::sort(all.begin(), all.end());
    const double span = all.back().first;
    const double mean_gap = size() > 1 ? back() / static_cast<double>(size() - 1) : span;
    const double tol = std::max(1e-3 * mean_gap, 1e-12 * span);

    std::vector<double> out{0.0};
    bool last_structural = true;  // the origin is never moved
    for (const auto& [t, is_structural] : all) {
      if (t - out.back() > tol) {
        out.push_back(t);
        last_structural = is_structural;
      } else if (is_structural && !last_structural) {
        out.back() = t;
        last_structural = true;
      }
    }
    return TimeGrid(std::move(out));
  }

  std::span<const double> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  double operator[](std::size_t i) const { return nodes_[i]; }
  double back() const { return nodes_.back(); }

  /// Index k of the cell [t_k, t_{k+1}) containing t, clamped to the
  /// first/last cell. For a single-node grid returns 0.
  std::size_t cell_of(double t) const {
    if (nodes_.size() < 2) return 0;
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    std::size_t k = it == nodes_.begin() ? 0 : static_cast<std::size_t>(it - nodes_.begin()) - 1;
    return std::min(k, nodes_.size() - 2);
  }

  /// Index of a node equal to t within `tol`, if any.
  std::optional<std::size_t> find_node(double t, double tol = 0.0) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
    if (it != nodes_.end() && std::abs(*it - t) <= tol) {
      return static_cast<std::size_t>(it - nodes_.begin());
    }
    return std::nullopt;
  }

 private:
  std::vector<double> nodes_;
};

/// Aggregate production rate Q, linear between grid nodes. Past the last
/// node an optional exponential tail Q_end e^{-k (t - t_end)} applies; a
/// path without tail is only defined on its grid.
class ProductionPath {
 public:
  ProductionPath() : values_{0.0} {}

  ProductionPath(TimeGrid grid, std::vector<double> values, std::optional<double> tail_decay = std::nullopt)
      : grid_(std::move(grid)), values_(std::move(values)), tail_decay_(tail_decay) {
    if (values_.size() != grid_.size()) throw std::invalid_argument("ProductionPath: size mismatch");
    for (double& q : values_) {
      if (!std::isfinite(q) || q < -1e-12 || q > 0.5 + 1e-12) {
        throw std::domain_error("ProductionPath: value outside [0, 1/2]: " + std::to_string(q));
      }
      q = std::clamp(q, 0.0, 0.5);
    }
    if (tail_decay_ && !(*tail_decay_ >= 0.0)) throw std::domain_error("ProductionPath: negative tail decay");
    cumulative_.assign(values_.size(), 0.0);
    for (std::size_t k = 1; k < values_.size(); ++k) {
      cumulative_[k] = cumulative_[k - 1] + 0.5 * (grid_[k] - grid_[k - 1]) * (values_[k] + values_[k - 1]);
    }
  }

  static ProductionPath constant(const TimeGrid& grid, double value, std::optional<double> tail_decay = 0.0) {
    return ProductionPath(grid, std::vector<double>(grid.size(), value), tail_decay);
  }

  const TimeGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::optional<double> tail_decay() const { return tail_decay_; }
  double end() const { return grid_.back(); }

  double value_at(double t) const {
    if (t >= grid_.back()) return tail_value(t - grid_.back());
    const std::size_t k = grid_.cell_of(t);
    return values_[k] + slope(k) * (t - grid_[k]);
  }

  /// Constant slope of cell k (0 for a single-node grid).
  double slope(std::size_t k) const {
    if (grid_.size() < 2) return 0.0;
    return (values_[k + 1] - values_[k]) / (grid_[k + 1] - grid_[k]);
  }

  /// Right derivative at t: cell slope inside the grid, tail slope past it.
  double slope_at(double t) const {
    if (t >= grid_.back()) {
      if (!tail_decay_ || *tail_decay_ == 0.0) return 0.0;
      if (std::isinf(*tail_decay_)) return 0.0;
      return -*tail_decay_ * tail_value(t - grid_.back());
    }
    return slope(grid_.cell_of(t));
  }

  /// Exact integral of Q over [0, t].
  double integral(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= grid_.back()) {
      const double u = t - grid_.back();
      double tail = 0.0;
      const double q_end = values_.back();
      if (tail_decay_) {
        const double k = *tail_decay_;
        if (k == 0.0) {
          tail = q_end * u;
        } else if (std::isfinite(k)) {
          tail = -q_end * std::expm1(-k * u) / k;
        }
      } else {
        tail = q_end * u;
      }
      return cumulative_.back() + tail;
    }
    const std::size_t k = grid_.cell_of(t);
    const double u = t - grid_[k];
    return cumulative_[k] + values_[k] * u + 0.5 * slope(k) * u * u;
  }

 private:
  double tail_value(double u) const {
    const double q_end = values_.back();
    if (u <= 0.0 || !tail_decay_) return q_end;
    const double k = *tail_decay_;
    if (std::isinf(k)) return 0.0;
    return q_end * std::exp(-k * u);
  }

  TimeGrid grid_;
  std::vector<double> values_;
  std::optional<double> tail_decay_;
  std::vector<double> cumulative_{0.0};
};

/// Extraction rate q >= 0 at grid nodes, linear in between, for a producer
/// with initial reserve x0.
class ControlPath {
 public:
  ControlPath() = default;
  ControlPath(TimeGrid grid, std::vector<double> values, double x0)
      : grid_(std::move(grid)), values_(std::move(values)), x0_(x0) {
    if (values_.size() != grid_.size()) throw std::invalid_argument("ControlPath: size mismatch");
    if (!(x0_ >= 0.0) || !std::isfinite(x0_)) throw std::domain_error("ControlPath: x0 must be >= 0");
    for (double& q : values_) {
      if (!std::isfinite(q) || q < -1e-12) {
        throw std::domain_error("ControlPath: negative extraction rate " + std::to_string(q));
      }
      if (q < 0.0) q = 0.0;
    }
  }

  const TimeGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double x0() const { return x0_; }

  double value_at(double t) const {
    if (grid_.size() < 2 || t >= grid_.back()) return t <= grid_.back() ? values_.back() : 0.0;
    const std::size_t k = grid_.cell_of(t);
    const double m = (values_[k + 1] - values_[k]) / (grid_[k + 1] - grid_[k]);
    return values_[k] + m * (t - grid_[k]);
  }

 private:
  TimeGrid grid_;
  std::vector<double> values_{0.0};
  double x0_ = 0.0;
};

struct StatePoint {
  double t;
  double x;
};

/// X_t = x0 - int_0^t q, exact (trapezoid) for the piecewise-linear control.
/// Negative values are reported as they are.
inline std::vector<StatePoint> state_trajectory(const ControlPath& q) {
  const auto& g = q.grid();
  const auto v = q.values();
  std::vector<StatePoint> out(g.size());
  double x = q.x0();
  out[0] = {0.0, x};
  for (std::size_t k = 1; k < g.size(); ++k) {
    x -= 0.5 * (g[k] - g[k - 1]) * (v[k] + v[k - 1]);
    out[k] = {g[k], x};
  }
  return out;
}

/// First time the reserve is exhausted; nullopt when it never is on the
/// grid. Reserves within `tolerance` of zero count as exhausted, which
/// absorbs the quadrature error of sampled controls.
inline std::optional<double> exhaustion_time(const ControlPath& q, double tolerance = 1e-8) {
  const auto& g = q.grid();
  const auto v = q.values();
  const double tol = tolerance * std::max(1.0, q.x0());
  if (q.x0() <= tol) return 0.0;
  // Solve v_k u + m u^2 / 2 = x on [0, h].
  const auto crossing = [&](std::size_t k, double x) {
    const double h = g[k + 1] - g[k];
    const double m = (v[k + 1] - v[k]) / h;
    double u;
    if (std::abs(m) < 1e-300) {
      u = v[k] > 0.0 ? x / v[k] : h;
    } else {
      const double disc = v[k] * v[k] + 2.0 * m * x;
      u = disc < 0.0 ? h : 2.0 * x / (v[k] + std::sqrt(disc));
    }
    return g[k] + std::clamp(u, 0.0, h);
  };
  double x = q.x0();
  std::optional<std::size_t> near;
  double x_near = 0.0;
  std::size_t zero_from = 0;
  double x_zero = x;
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const double used = 0.5 * (g[k + 1] - g[k]) * (v[k] + v[k + 1]);
    if (x - used <= 0.0) return crossing(k, x);
    if (!near && x - used <= tol) {
      near = k;
      x_near = x;
    }
    if (v[k] > 0.0) {
      zero_from = k + 1;
      x_zero = x - used;
    }
    x -= used;
  }
  if (!near) return std::nullopt;
  // reserve within tolerance: prefer the start of the trailing zero run
  if (v.back() == 0.0 && x_zero <= tol) return g[zero_from];
  return crossing(*near, x_near);
}

/// H(x, q, y) = q (1 - eps Q - q) 1{x > 0} - q y.
inline double hamiltonian(double x, double q, double y, double eps_q) {
  if (q < 0.0) throw std::domain_error("hamiltonian: negative extraction rate");
  const double revenue = x > 0.0 ? q * (1.0 - eps_q - q) : 0.0;
  return revenue - q * y;
}

struct CompatibilityReport {
  double margin = 1.0;
  bool satisfied = true;
};

/// Infimum over the grid of 1 - eps Q + (eps/r) Qdot, using each cell's
/// constant slope at both of its endpoints.
inline CompatibilityReport compatibility_check(const ProductionPath& Q, double r, double epsilon) {
  const auto& g = Q.grid();
  const auto v = Q.values();
  double margin = kInfinity;
  if (g.size() < 2) {
    margin = 1.0 - epsilon * v[0];
  } else {
    for (std::size_t k = 0; k + 1 < g.size(); ++k) {
      const double m = Q.slope(k);
      const double lo = 1.0 - epsilon * v[k] + epsilon / r * m;
      const double hi = 1.0 - epsilon * v[k + 1] + epsilon / r * m;
      margin = std::min({margin, lo, hi});
    }
  }
  return {margin, margin > 0.0};
}

inline CompatibilityReport compatibility_check(const ProductionPath& Q, const ModelParams& params) {
  return compatibility_check(Q, params.r, params.epsilon);
}

}  // namespace mfg

#endif  // MFG_MODEL_HPP
