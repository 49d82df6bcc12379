#ifndef MFG_SPECIAL_FUNCTIONS_HPP
#define MFG_SPECIAL_FUNCTIONS_HPP

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mfg {

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::domain_error(std::string(what) + ": non-finite argument");
  }
}

// Series of 1 + W0 in p = sqrt(2 (1 + e z)) around the branch point.
inline double branch_series(double p) {
  constexpr double c[] = {1.0,
                          -1.0 / 3.0,
                          11.0 / 72.0,
                          -43.0 / 540.0,
                          769.0 / 17280.0,
                          -221.0 / 8505.0,
                          680863.0 / 43545600.0,
                          -1963.0 / 204120.0,
                          226287557.0 / 37623398400.0};
  double acc = 0.0;
  for (int k = 8; k >= 0; --k) acc = acc * p + c[k];
  return acc * p;
}

// Solves (v - 1) e^v + 1 = q for v in [0, 1], i.e. v = 1 + W0(z) with
// q = 1 + e z. Written as v e^v - expm1(v) so that small v keeps full
// relative precision.
inline double shifted_w_negative_branch(double q) {
  const double p = std::sqrt(2.0 * q);
  double v = branch_series(p);
  if (p < 1e-2) return v;
  if (v > 1.0) v = 1.0;
  for (int it = 0; it < 50; ++it) {
    const double ev = std::exp(v);
    const double f = v * ev - std::expm1(v) - q;
    const double d1 = v * ev;
    const double d2 = (1.0 + v) * ev;
    const double step = f / (d1 - 0.5 * f * d2 / d1);
    double next = v - step;
    if (!(next > 0.0)) next = 0.5 * v;
    if (next > 1.0) next = 0.5 * (v + 1.0);
    const bool done = std::abs(next - v) <= 4 * std::numeric_limits<double>::epsilon() * next;
    v = next;
    if (done) break;
  }
  return v;
}

inline double w_positive(double z) {
  if (z == 0.0) return 0.0;
  double w;
  if (z < 3.0) {
    const double l = std::log1p(z);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  } else {
    const double l1 = std::log(z);
    const double l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }
  for (int it = 0; it < 50; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - z;
    const double wp1 = w + 1.0;
    const double step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
    const double next = w - step;
    const bool done = std::abs(next - w) <= 4 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(next));
    w = next;
    if (done) return w;
  }
  // Halley stalled; bisect on the monotone map w e^w.
  double lo = 0.0;
  double hi = std::max(1.0, std::log(z) + 1.0);
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::exp(mid) < z ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// 1 + W0(z) expressed through the distance q = 1 + e z from the branch
/// point. Keeping q explicit avoids the cancellation in e z + 1 when the
/// caller already knows it in closed form, e.g. q = -expm1(-r x).
inline double lambert_w0_shifted(double q) {
  detail::require_finite(q, "lambert_w0_shifted");
  if (q < 0.0) {
    throw std::domain_error("lambert_w0_shifted: argument below the branch point -1/e");
  }
  if (q < 1.0) return detail::shifted_w_negative_branch(q);
  return 1.0 + detail::w_positive((q - 1.0) / std::numbers::e);
}

/// Principal branch of the Lambert-W function on [-1/e, inf).
inline double lambert_w0(double z) {
  detail::require_finite(z, "lambert_w0");
  if (z >= 0.0) return detail::w_positive(z);
  double q = std::fma(std::numbers::e, z, 1.0);
  // Rounding of -1/e itself may land a hair below the branch point.
  if (q < 0.0 && q > -4 * std::numeric_limits<double>::epsilon()) q = 0.0;
  if (q < 0.0) throw std::domain_error("lambert_w0: argument below -1/e");
  return detail::shifted_w_negative_branch(q) - 1.0;
}

/// phi(t) = (r t - 1 + e^{-r t}) / r.
inline double phi(double t, double r) {
  detail::require_finite(t, "phi");
  detail::require_finite(r, "phi");
  if (t < 0.0) throw std::domain_error("phi: negative time");
  if (r <= 0.0) throw std::domain_error("phi: rate must be positive");
  const double u = r * t;
  if (u < 1e-3) {
    // u^2/2 - u^3/6 + ... ; the direct form cancels badly here.
    const double u2 = u * u;
    return u2 * (0.5 - u * (1.0 / 6.0 - u * (1.0 / 24.0 - u * (1.0 / 120.0 - u / 720.0)))) / r;
  }
  return (u + std::expm1(-u)) / r;
}

/// Derivative of phi in t: 1 - e^{-r t}.
inline double phi_derivative(double t, double r) { return -std::expm1(-r * t); }

/// Inverse of phi: x + (1 + W0(-e^{-1 - r x})) / r.
inline double phi_inv(double x, double r) {
  detail::require_finite(x, "phi_inv");
  detail::require_finite(r, "phi_inv");
  if (x < 0.0) throw std::domain_error("phi_inv: negative argument");
  if (r <= 0.0) throw std::domain_error("phi_inv: rate must be positive");
  return x + lambert_w0_shifted(-std::expm1(-r * x)) / r;
}

}  // namespace mfg

#endif  // MFG_SPECIAL_FUNCTIONS_HPP
