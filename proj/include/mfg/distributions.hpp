#ifndef MFG_DISTRIBUTIONS_HPP
#define MFG_DISTRIBUTIONS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mfg/model.hpp"

namespace mfg {

struct Atom {
  double location;
  double probability;
};

/// Finitely many reserve levels with their population shares.
class Atoms {
 public:
  explicit Atoms(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("Atoms: need at least one atom");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      const auto& a = atoms_[i];
      if (!std::isfinite(a.location) || a.location < 0.0) {
        throw std::domain_error("Atoms: locations must be finite and >= 0");
      }
      if (!std::isfinite(a.probability) || a.probability < 0.0) {
        throw std::domain_error("Atoms: probabilities must be >= 0");
      }
      if (i > 0 && !(a.location > atoms_[i - 1].location)) {
        throw std::invalid_argument("Atoms: locations must be strictly increasing");
      }
      total += a.probability;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::domain_error("Atoms: probabilities sum to " + std::to_string(total));
    }
    // tail_[i] = mass of atoms i..end, accumulated from the back.
    tail_.assign(atoms_.size() + 1, 0.0);
    for (std::size_t i = atoms_.size(); i-- > 0;) tail_[i] = tail_[i + 1] + atoms_[i].probability;
    const double scale = tail_[0];
    for (double& m : tail_) m /= scale;
  }

  std::span<const Atom> atoms() const { return atoms_; }

  /// Index of the first atom strictly above x.
  std::size_t first_above(double x) const {
    auto it = std::upper_bound(atoms_.begin(), atoms_.end(), x,
                               [](double v, const Atom& a) { return v < a.location; });
    return static_cast<std::size_t>(it - atoms_.begin());
  }

  double survival(double x) const { return tail_[first_above(x)]; }

  double survival_integral(double x) const {
    double acc = 0.0;
    for (const auto& a : atoms_) acc += a.probability * std::min(a.location, x);
    return acc;
  }

  double partial_mean(double a, double b) const {
    double acc = 0.0;
    for (const auto& atom : atoms_) {
      if (atom.location > a && atom.location <= b) acc += atom.probability * atom.location;
    }
    return acc;
  }

  double support_end() const { return atoms_.back().location; }

 private:
  std::vector<Atom> atoms_;
  std::vector<double> tail_;
};

/// Exponential reserves with rate lambda.
class Exponential {
 public:
  explicit Exponential(double lambda) : lambda_(lambda) {
    if (!(lambda_ > 0.0) || !std::isfinite(lambda_)) throw std::domain_error("Exponential: lambda must be > 0");
  }
  double lambda() const { return lambda_; }
  double survival(double x) const { return std::exp(-lambda_ * x); }
  double survival_integral(double x) const { return -std::expm1(-lambda_ * x) / lambda_; }
  double partial_mean(double a, double b) const {
    const auto upper = [&](double x) {
      return std::isinf(x) ? 0.0 : (x + 1.0 / lambda_) * std::exp(-lambda_ * x);
    };
    return upper(a) - upper(b);
  }

 private:
  double lambda_;
};

/// Density tabulated on a grid and interpolated linearly, zero outside the
/// table. Masses and moments are integrated exactly for the interpolant;
/// for the total mass this coincides with the trapezoid rule on the table.
class DensityTable {
 public:
  DensityTable(std::vector<double> x, std::vector<double> density) : x_(std::move(x)), f_(std::move(density)) {
    if (x_.size() < 2 || x_.size() != f_.size()) {
      throw std::invalid_argument("DensityTable: need >= 2 nodes and matching density values");
    }
    for (std::size_t i = 0; i < x_.size(); ++i) {
      if (!std::isfinite(x_[i]) || !std::isfinite(f_[i]) || f_[i] < 0.0) {
        throw std::domain_error("DensityTable: density must be finite and nonnegative");
      }
      if (i == 0 ? x_[0] < 0.0 : !(x_[i] > x_[i - 1])) {
        throw std::invalid_argument("DensityTable: support grid must start >= 0 and increase");
      }
    }
    double mass = 0.0;
    for (std::size_t j = 0; j + 1 < x_.size(); ++j) mass += 0.5 * (x_[j + 1] - x_[j]) * (f_[j] + f_[j + 1]);
    if (!(std::abs(mass - 1.0) <= 1e-6)) {
      throw std::domain_error("DensityTable: density integrates to " + std::to_string(mass));
    }
    for (double& v : f_) v /= mass;

    const std::size_t m = x_.size();
    mass_.assign(m, 0.0);
    moment_.assign(m, 0.0);
    surv_int_.assign(m, x_[0]);
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const double h = x_[j + 1] - x_[j];
      mass_[j + 1] = mass_[j] + segment_mass(j, h);
      moment_[j + 1] = moment_[j] + segment_moment(j, h);
      surv_int_[j + 1] = surv_int_[j] + segment_survival_integral(j, h);
    }
  }

  std::span<const double> nodes() const { return x_; }
  std::span<const double> density() const { return f_; }

  double survival(double x) const {
    if (x < x_.front()) return 1.0;
    if (x >= x_.back()) return 0.0;
    const std::size_t j = segment(x);
    return std::clamp(1.0 - mass_[j] - segment_mass(j, x - x_[j]), 0.0, 1.0);
  }

  double survival_integral(double x) const {
    if (x <= x_.front()) return x;
    if (x >= x_.back()) return surv_int_.back();
    const std::size_t j = segment(x);
    return surv_int_[j] + segment_survival_integral(j, x - x_[j]);
  }

  double partial_mean(double a, double b) const { return moment_below(b) - moment_below(a); }

  double support_end() const { return x_.back(); }

 private:
  std::size_t segment(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    return std::min(static_cast<std::size_t>(it - x_.begin()) - 1, x_.size() - 2);
  }
  double slope(std::size_t j) const { return (f_[j + 1] - f_[j]) / (x_[j + 1] - x_[j]); }
  double segment_mass(std::size_t j, double s) const { return f_[j] * s + 0.5 * slope(j) * s * s; }
  double segment_moment(std::size_t j, double s) const {
    const double a = f_[j];
    const double b = slope(j);
    return x_[j] * (a * s + 0.5 * b * s * s) + a * s * s / 2.0 + b * s * s * s / 3.0;
  }
  double segment_survival_integral(std::size_t j, double s) const {
    return (1.0 - mass_[j]) * s - (f_[j] * s * s / 2.0 + slope(j) * s * s * s / 6.0);
  }
  double moment_below(double x) const {
    if (x <= x_.front()) return 0.0;
    if (x >= x_.back()) return moment_.back();
    const std::size_t j = segment(x);
    return moment_[j] + segment_moment(j, x - x_[j]);
  }

  std::vector<double> x_;
  std::vector<double> f_;
  std::vector<double> mass_;
  std::vector<double> moment_;
  std::vector<double> surv_int_;
};

/// Distribution of initial reserves. Mixed atom/density measures are not
/// representable.
class InitialDistribution {
 public:
  using Variant = std::variant<Atoms, Exponential, DensityTable>;

  InitialDistribution(Atoms a) : v_(std::move(a)) {}              // NOLINT(google-explicit-constructor)
  InitialDistribution(Exponential e) : v_(e) {}                    // NOLINT(google-explicit-constructor)
  InitialDistribution(DensityTable d) : v_(std::move(d)) {}       // NOLINT(google-explicit-constructor)

  static InitialDistribution point_mass(double x) { return Atoms({{x, 1.0}}); }

  const Variant& variant() const { return v_; }
  bool is_atomic() const { return std::holds_alternative<Atoms>(v_); }
  const Atoms* atoms() const { return std::get_if<Atoms>(&v_); }

  /// S(x) = mu((x, inf)); strict tail, so an atom at x is not counted.
  double survival(double x) const {
    return std::visit([x](const auto& d) { return d.survival(x); }, v_);
  }
  /// int_0^x S(u) du.
  double survival_integral(double x) const {
    return std::visit([x](const auto& d) { return d.survival_integral(x); }, v_);
  }
  /// int_{(a, b]} x mu(dx); b may be +inf.
  double partial_mean(double a, double b) const {
    return std::visit([a, b](const auto& d) { return d.partial_mean(a, b); }, v_);
  }

  /// Smallest reserve level beyond which at most `mass` of the population
  /// lies (exact support end for atoms and tables).
  double tail_cutoff(double mass = 1e-12) const {
    if (const auto* e = std::get_if<Exponential>(&v_)) return -std::log(mass) / e->lambda();
    if (const auto* a = std::get_if<Atoms>(&v_)) return a->support_end();
    return std::get<DensityTable>(v_).support_end();
  }

  /// Points where S jumps or changes formula; psi is smooth between them.
  std::vector<double> breakpoints() const {
    std::vector<double> out;
    if (const auto* a = std::get_if<Atoms>(&v_)) {
      for (const auto& atom : a->atoms()) out.push_back(atom.location);
    } else if (const auto* d = std::get_if<DensityTable>(&v_)) {
      out.assign(d->nodes().begin(), d->nodes().end());
    }
    return out;
  }

 private:
  Variant v_;
};

inline double survival(const InitialDistribution& mu, double x) {
  if (!(x >= 0.0)) throw std::domain_error("survival: negative reserve level");
  return mu.survival(x);
}

inline double partial_mean(const InitialDistribution& mu, double a, double b) {
  if (!(a >= 0.0) || std::isnan(b)) throw std::domain_error("partial_mean: bad interval");
  if (a > b) throw std::domain_error("partial_mean: a > b");
  if (a == b) return 0.0;
  return mu.partial_mean(a, b);
}

/// psi(x) = 2x + eps int_0^x S, with its inverse. Breakpoint values are
/// cached so the atomic case inverts exactly segment by segment.
class PsiFunction {
 public:
  PsiFunction(InitialDistribution mu, double epsilon) : mu_(std::move(mu)), eps_(epsilon) {
    if (!(eps_ >= 0.0)) throw std::domain_error("PsiFunction: epsilon must be >= 0");
    breaks_ = mu_.breakpoints();
    values_.reserve(breaks_.size());
    for (double b : breaks_) values_.push_back(eval(b));
  }

  const InitialDistribution& distribution() const { return mu_; }
  double epsilon() const { return eps_; }

  double operator()(double x) const {
    if (!(x >= 0.0)) throw std::domain_error("psi: negative argument");
    return eval(x);
  }

  /// Right derivative 2 + eps S(x).
  double derivative(double x) const { return 2.0 + eps_ * mu_.survival(x); }

  double inverse(double y) const {
    if (!(y >= 0.0)) throw std::domain_error("psi_inv: negative argument");
    if (y == 0.0) return 0.0;
    if (std::isinf(y)) return y;
    // Bracket by cached breakpoints, then by the slope bounds [2, 2+eps].
    auto it = std::upper_bound(values_.begin(), values_.end(), y);
    const auto j = static_cast<std::size_t>(it - values_.begin());
    double lo = j == 0 ? 0.0 : breaks_[j - 1];
    double hi = j < breaks_.size() ? breaks_[j] : kInfinity;
    const double y_lo = j == 0 ? 0.0 : values_[j - 1];
    if (mu_.is_atomic()) return lo + (y - y_lo) / derivative(lo);
    lo = std::max(lo, y / (2.0 + eps_));
    hi = std::min(hi, y / 2.0);
    if (hi <= lo) return lo;
    double x = 0.5 * (lo + hi);
    for (int it_count = 0; it_count < 100; ++it_count) {
      const double f = eval(x) - y;
      if (f > 0.0) hi = x; else lo = x;
      double next = x - f / derivative(x);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - x) <= 1e-16 * std::max(1.0, x) || hi - lo <= 1e-16 * std::max(1.0, hi)) {
        return next;
      }
      x = next;
    }
    return x;
  }

 private:
  double eval(double x) const { return 2.0 * x + eps_ * mu_.survival_integral(x); }

  InitialDistribution mu_;
  double eps_;
  std::vector<double> breaks_;
  std::vector<double> values_;
};

inline double psi(const InitialDistribution& mu, double epsilon, double x) { return PsiFunction(mu, epsilon)(x); }

inline double psi_inv(const InitialDistribution& mu, double epsilon, double y) {
  return PsiFunction(mu, epsilon).inverse(y);
}

}  // namespace mfg

#endif  // MFG_DISTRIBUTIONS_HPP
