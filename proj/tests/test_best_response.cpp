#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "mfg/best_response.hpp"
#include "mfg/equilibrium_infinite.hpp"
#include "mfg/monopoly.hpp"
#include "mfg/oracle.hpp"

using namespace mfg;

namespace {

// Smooth compatible aggregate Q_t = c e^{-k t} sampled on a fine grid.
ProductionPath decaying(double end, std::size_t n, double c, double k, bool tail) {
  const TimeGrid g = TimeGrid::uniform(end, n);
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = c * std::exp(-k * g[i]);
  return ProductionPath(g, v, tail ? std::optional<double>(k) : std::nullopt);
}

// Random piecewise-linear aggregate with compatibility margin >= 0.1.
ProductionPath random_path(std::mt19937_64& rng, const ModelParams& p, double end) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const TimeGrid g = TimeGrid::uniform(end, 12);
    std::vector<double> v(g.size());
    const double top = p.max_aggregate();
    double x = top * u(rng);
    for (auto& y : v) {
      y = x;
      x = std::clamp(x + 0.15 * top * (u(rng) - 0.5), 0.0, top);
    }
    ProductionPath Q(g, v);
    if (compatibility_check(Q, p).margin >= 0.1) return Q;
  }
}

}  // namespace

TEST(XiFunction, ZeroAndConstantAggregates) {
  const ModelParams p(0.7, 1.5, Horizon::finite(6.0));
  const TimeGrid g = TimeGrid::uniform(6.0, 60);
  const XiFunction zero(ProductionPath::constant(g, 0.0, std::nullopt), p);
  const double c = 0.2;
  const XiFunction cst(ProductionPath::constant(g, c, std::nullopt), p);
  EXPECT_EQ(zero(0.0), 0.0);
  EXPECT_EQ(cst(0.0), 0.0);
  for (double t : {0.01, 0.5, 2.2, 6.0}) {
    EXPECT_NEAR(zero(t), 0.5 * phi(t, 0.7), 1e-15);
    EXPECT_NEAR(cst(t), (1.0 - 1.5 * c) * 0.5 * phi(t, 0.7), 1e-15);
  }
}

TEST(XiFunction, MatchesDefiningIntegralAndDerivative) {
  const ModelParams p(0.5, 2.0, Horizon::finite(4.0));
  const ProductionPath Q = decaying(4.0, 40, 0.24, 0.05, false);
  const XiFunction xi(Q, p);
  for (double t : {0.33, 1.71, 3.87}) {
    // (1/2) int_0^t {1 - eps Q_s - (1 - eps Q_t) e^{-r(t-s)}} ds
    const double qt = Q.value_at(t);
    const double direct = 0.5 * quadrature::composite(
        [&](double s) { return 1.0 - 2.0 * Q.value_at(s) - (1.0 - 2.0 * qt) * std::exp(-0.5 * (t - s)); }, 0.0, t, 0.01);
    EXPECT_NEAR(xi(t), direct, 1e-13);
    const double h = 1e-6;
    EXPECT_NEAR((xi(t + h) - xi(t - h)) / (2 * h), xi.derivative(t), 1e-7);
  }
}

TEST(XiFunction, RejectsIncompatiblePaths) {
  const ModelParams p(1.0, 1.0);
  const ProductionPath steep(TimeGrid(std::vector<double>{0.0, 0.1, 1.0}), {0.3, 0.0, 0.0}, 0.0);
  EXPECT_THROW(XiFunction(steep, p), CompatibilityError);
  const ProductionPath cliff(TimeGrid(std::vector<double>{0.0, 1.0}), {0.3, 0.3}, INFINITY);
  EXPECT_THROW(XiFunction(cliff, p), CompatibilityError);
}

TEST(TauOfQ, Examples) {
  const ModelParams p(1.0, 0.0);
  const XiFunction zero(ProductionPath::constant(TimeGrid::uniform(1.0, 10), 0.0), p);
  EXPECT_EQ(*tau_of_Q(zero, 0.0), 0.0);
  EXPECT_NEAR(*tau_of_Q(zero, 0.5), 1.8414056604369606, 1e-10);
  const ModelParams fin(1.0, 0.0, Horizon::finite(1.0));
  const XiFunction short_h(ProductionPath::constant(TimeGrid::uniform(1.0, 10), 0.0, std::nullopt), fin);
  EXPECT_FALSE(tau_of_Q(short_h, 0.5).has_value());
}

TEST(TauOfQ, RoundTrip) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ModelParams p(0.4, 1.0);
  const XiFunction xi(decaying(10.0, 500, 0.3, 0.1, true), p);
  for (int i = 0; i < 1000; ++i) {
    const double t = 25.0 * u(rng);
    EXPECT_NEAR(*tau_of_Q(xi, xi(t)), t, 1e-10 * std::max(1.0, t));
  }
}

TEST(TerminalAdjoint, Examples) {
  const ModelParams p(0.6, 1.2, Horizon::finite(3.0));
  const ProductionPath Q = decaying(3.0, 300, 0.3, 0.2, false);
  const XiFunction xi(Q, p);
  EXPECT_NEAR(terminal_adjoint_Q(xi, xi.eta()), 0.0, 1e-15);
  EXPECT_NEAR(terminal_adjoint_Q(xi, xi.at_horizon()), 1.0 - 1.2 * Q.values().back(), 1e-12);
  EXPECT_THROW(terminal_adjoint_Q(xi, xi.eta() + 0.1), RegimeError);
  // band identity
  EXPECT_NEAR(xi.eta() - xi.at_horizon(), xi.beta() * (1.0 - 1.2 * Q.values().back()), 1e-10);
  const ModelParams mono(1.0, 0.0, Horizon::finite(2.0));
  const XiFunction zero(ProductionPath::constant(TimeGrid::uniform(2.0, 20), 0.0, std::nullopt), mono);
  EXPECT_NEAR(terminal_adjoint_Q(zero, 0.7), monopoly_terminal_adjoint(0.7, mono), 1e-14);
}

TEST(BestResponse, ZeroReserve) {
  const ModelParams p(1.0, 1.0, Horizon::finite(2.0));
  const auto br = best_response_control(decaying(2.0, 20, 0.3, 0.2, false), 0.0, p);
  for (double q : br.control.values()) EXPECT_EQ(q, 0.0);
  EXPECT_EQ(*br.tau, 0.0);
}

TEST(BestResponse, ReducesToMonopolyWhenAggregateVanishes) {
  for (double T : {2.0, kInfinity}) {
    const ModelParams p(0.8, 0.0, std::isfinite(T) ? Horizon::finite(T) : Horizon::infinite());
    const double end = std::isfinite(T) ? T : 8.0;
    const ProductionPath Q = ProductionPath::constant(TimeGrid::uniform(end, 400), 0.0,
                                                      std::isfinite(T) ? std::nullopt : std::optional<double>(0.0));
    for (double x0 : {0.0, 0.1, 0.25, 0.5, 0.9, 1.2}) {
      const auto br = best_response_control(Q, x0, p);
      const auto mono = solve_monopoly(x0, p);
      EXPECT_EQ(static_cast<int>(br.regime), static_cast<int>(mono.regime));
      EXPECT_EQ(br.tau.has_value(), mono.tau.has_value());
      if (br.tau) {
        EXPECT_NEAR(*br.tau, *mono.tau, 1e-10);
      }
      for (std::size_t k = 0; k < br.control.grid().size(); ++k) {
        EXPECT_NEAR(br.control.values()[k], mono.rate(br.control.grid()[k]), 1e-10);
      }
    }
  }
}

TEST(BestResponse, UnconstrainedBranch) {
  const ModelParams p(0.5, 1.0, Horizon::finite(3.0));
  const ProductionPath Q = decaying(3.0, 300, 0.3, 0.2, false);
  const XiFunction xi(Q, p);
  const auto br = best_response_control(xi, xi.eta() + 1.0);
  EXPECT_EQ(br.regime, ResponseRegime::None);
  EXPECT_FALSE(br.tau.has_value());
  for (std::size_t k = 0; k < br.control.grid().size(); ++k) {
    EXPECT_NEAR(br.control.values()[k], 0.5 * (1.0 - Q.values()[k]), 1e-15);
  }
}

TEST(BestResponse, RegimesAcrossTheBand) {
  const ModelParams p(0.5, 1.0, Horizon::finite(3.0));
  const XiFunction xi(decaying(3.0, 300, 0.3, 0.2, false), p);
  EXPECT_EQ(best_response_control(xi, 0.5 * xi.at_horizon()).regime, ResponseRegime::Early);
  const auto exact = best_response_control(xi, 0.5 * (xi.at_horizon() + xi.eta()));
  EXPECT_EQ(exact.regime, ResponseRegime::Exact);
  EXPECT_DOUBLE_EQ(*exact.tau, 3.0);
  EXPECT_GT(exact.y_terminal, 0.0);
  EXPECT_GT(exact.control.values().back(), 0.0);
}

TEST(BestResponse, AdjointOdeAndMassConservation) {
  const ModelParams p(0.9, 1.5, Horizon::finite(6.0));
  const ProductionPath Q = decaying(6.0, 20000, 0.25, 0.15, false);
  const XiFunction xi(Q, p);
  for (double x0 : {0.2 * xi.at_horizon(), 0.7 * xi.at_horizon(), 0.5 * (xi.at_horizon() + xi.eta())}) {
    const auto plan = plan_response(xi, x0);
    const double stop = std::min(*plan.tau, 6.0);
    EXPECT_NEAR(response_extracted(xi, plan, stop), x0, 1e-8);
    // q - qdot/r = (1/2){1 - eps Q + (eps/r) Qdot} at cell midpoints
    const auto& g = Q.grid();
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < g.size() && g[k + 1] <= stop; ++k) {
      const double h = g[k + 1] - g[k];
      const double qa = response_rate(xi, plan, g[k]);
      const double qb = response_rate(xi, plan, g[k + 1]);
      const double lhs = 0.5 * (qa + qb) - (qb - qa) / h / 0.9;
      const double rhs = 0.5 * (1.0 - 1.5 * 0.5 * (Q.values()[k] + Q.values()[k + 1]) + 1.5 / 0.9 * Q.slope(k));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    EXPECT_LT(worst, 1e-6);
    // sampled control integrates back to the same extraction
    const auto br = best_response_control(xi, x0);
    const auto x = state_trajectory(br.control);
    EXPECT_NEAR(x.back().x, x0 - response_extracted(xi, plan, 6.0), 1e-8);
  }
}

TEST(AggregateOf, PointMasses) {
  const ModelParams p(0.5, 1.0, Horizon::finite(3.0));
  const ProductionPath Q = decaying(3.0, 300, 0.3, 0.2, false);
  const ProductionPath zero = aggregate_of(Q, InitialDistribution::point_mass(0.0), p);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  const XiFunction xi(Q, p);
  for (double x0 : {0.3 * xi.at_horizon(), 0.5 * (xi.at_horizon() + xi.eta()), xi.eta() + 1.0}) {
    const ProductionPath one = aggregate_of(xi, InitialDistribution::point_mass(x0));
    const auto plan = plan_response(xi, x0);
    for (std::size_t k = 0; k < one.grid().size(); ++k) {
      EXPECT_NEAR(one.values()[k], response_rate(xi, plan, one.grid()[k]), 1e-15);
    }
    // the closed-form terminal value agrees with the direct sum
    EXPECT_NEAR(terminal_aggregate(xi, InitialDistribution::point_mass(x0)), one.values().back(), 1e-12);
  }
}

TEST(AggregateOf, TimeDomainFormMatchesDirectSumForAtoms) {
  const InitialDistribution mu = Atoms({{0.05, 0.2}, {0.2, 0.3}, {0.4, 0.1}, {0.9, 0.4}});
  for (double T : {3.0, kInfinity}) {
    const ModelParams p(0.7, 1.3, std::isfinite(T) ? Horizon::finite(T) : Horizon::infinite());
    const ProductionPath Q = decaying(std::isfinite(T) ? T : 12.0, 3000, 0.3, 0.2, !std::isfinite(T));
    const XiFunction xi(Q, p);
    const ProductionPath direct = aggregate_of(xi, mu);
    const ProductionPath fubini = aggregate_of_fubini(xi, mu);
    ASSERT_EQ(direct.grid().size(), fubini.grid().size());
    for (std::size_t k = 0; k < direct.grid().size(); ++k) {
      EXPECT_NEAR(direct.values()[k], fubini.values()[k], 1e-9) << "t = " << direct.grid()[k];
    }
    if (std::isfinite(T)) {
      EXPECT_NEAR(terminal_aggregate(xi, mu), direct.values().back(), 1e-12);
    }
  }
}

TEST(AggregateOf, OdeForContinuousReserves) {
  const ModelParams p(1.0, 1.0, Horizon::finite(5.0));
  const InitialDistribution mu = Exponential(1.0);
  const ProductionPath Q = decaying(5.0, 20000, 0.3, 0.3, false);
  const XiFunction xi(Q, p);
  const ProductionPath agg = aggregate_of(xi, mu);
  const auto& g = agg.grid();
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < g.size(); ++k) {
    const double h = g[k + 1] - g[k];
    const double mid = 0.5 * (g[k] + g[k + 1]);
    const double lhs = 0.5 * (agg.values()[k] + agg.values()[k + 1]) - (agg.values()[k + 1] - agg.values()[k]) / h;
    const double c = 1.0 - Q.value_at(mid) + Q.slope_at(mid);
    worst = std::max(worst, std::abs(lhs - 0.5 * c * mu.survival(xi(mid))));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(AggregateOf, FixedPointOfFigureOneEquilibrium) {
  const ModelParams p(0.02, 2.0);
  const InitialDistribution mu = Atoms({{50.0, 0.5}, {100.0, 0.5}});
  const ProductionPath Q = aggregate_star(mu, p, {4000, 450.0});
  const ProductionPath image = aggregate_of(Q, mu, p);
  for (std::size_t k = 0; k < image.grid().size(); ++k) {
    EXPECT_NEAR(image.values()[k], Q.value_at(image.grid()[k]), 1e-6);
  }
}

TEST(BestResponse, DominatesOracleControls) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double T = 1.0 + 4.0 * u(rng);
    const ModelParams p(0.2 + 0.8 * u(rng), 2.0 * u(rng), Horizon::finite(T));
    const ProductionPath coarse = random_path(rng, p, T);
    // refine so the best response is resolved finely
    std::vector<double> v;
    const TimeGrid fine = TimeGrid::uniform(T, 2000);
    for (double t : fine.nodes()) v.push_back(coarse.value_at(t));
    const ProductionPath Q(fine, v);
    const XiFunction xi(Q, p);
    const double x0 = 1.2 * xi.eta() * u(rng);
    const auto br = best_response_control(xi, x0);
    const double j = payoff(br.control, Q, p);
    const auto oracle = oracle_solve(discretize(Q, p, x0, 2000));
    EXPECT_GE(j, oracle.value - 1e-6) << "trial " << trial;
    EXPECT_NEAR(j, oracle.value, 1e-4) << "trial " << trial;
  }
}
