#ifndef MFG_QUADRATURE_HPP
#define MFG_QUADRATURE_HPP

#include <array>
#include <cmath>
#include <cstddef>

namespace mfg::quadrature {

// 8-point Gauss-Legendre rule on [-1, 1].
inline constexpr std::array<double, 8> kGaussNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGaussWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

template <class F>
double gauss_legendre(F&& f, double a, double b) {
  if (b <= a) return 0.0;
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double acc = 0.0;
  for (std::size_t i = 0; i < kGaussNodes.size(); ++i) {
    acc += kGaussWeights[i] * f(mid + half * kGaussNodes[i]);
  }
  return acc * half;
}

/// Composite Gauss-Legendre with at most `max_width` per panel.
template <class F>
double composite(F&& f, double a, double b, double max_width) {
  if (b <= a) return 0.0;
  const auto panels = static_cast<std::size_t>(std::ceil((b - a) / max_width));
  const std::size_t n = panels == 0 ? 1 : panels;
  const double h = (b - a) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double lo = a + h * static_cast<double>(k);
    const double hi = k + 1 == n ? b : lo + h;
    acc += gauss_legendre(f, lo, hi);
  }
  return acc;
}

}  // namespace mfg::quadrature

#endif  // MFG_QUADRATURE_HPP
