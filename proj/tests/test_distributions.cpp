#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "mfg/distributions.hpp"

using namespace mfg;

namespace {

InitialDistribution figure1() { return Atoms({{50.0, 0.5}, {100.0, 0.5}}); }

DensityTable triangle() {
  // density 2(1 - x) on [0, 1]
  std::vector<double> x;
  std::vector<double> f;
  for (int i = 0; i <= 20; ++i) {
    x.push_back(i / 20.0);
    f.push_back(2.0 * (1.0 - i / 20.0));
  }
  return DensityTable(x, f);
}

}  // namespace

TEST(Survival, Examples) {
  EXPECT_EQ(survival(figure1(), 70.0), 0.5);
  EXPECT_EQ(survival(figure1(), 0.0), 1.0);
  EXPECT_NEAR(survival(Exponential(1.0), 2.0), 0.1353352832366127, 1e-15);
  EXPECT_THROW(survival(figure1(), -1.0), std::domain_error);
}

TEST(Survival, StrictTailAtAtoms) {
  EXPECT_EQ(survival(figure1(), 50.0), 0.5);
  EXPECT_EQ(survival(figure1(), 100.0), 0.0);
  EXPECT_EQ(survival(InitialDistribution::point_mass(0.0), 0.0), 0.0);
}

TEST(Survival, MonotoneIntoUnitInterval) {
  const InitialDistribution ds[] = {figure1(), Exponential(0.7), triangle()};
  for (const auto& mu : ds) {
    double last = 1.0;
    for (double x = 0.0; x < 200.0; x += 0.37) {
      const double s = mu.survival(x);
      EXPECT_LE(s, last);
      EXPECT_GE(s, 0.0);
      last = s;
    }
    EXPECT_LT(mu.survival(1e4), 1e-12);
  }
}

TEST(Atoms, Validation) {
  EXPECT_THROW(Atoms({{1.0, 0.5}, {0.5, 0.5}}), std::invalid_argument);
  EXPECT_THROW(Atoms({{1.0, 0.5}, {2.0, 0.4}}), std::domain_error);
  EXPECT_THROW(Atoms({{-1.0, 1.0}}), std::domain_error);
  EXPECT_THROW(Atoms({}), std::invalid_argument);
}

TEST(DensityTable, ValidationAndExactMoments) {
  EXPECT_THROW(DensityTable({0.0, 1.0}, {1.0, 3.0}), std::domain_error);
  EXPECT_THROW(DensityTable({0.0, 1.0}, {-1.0, 3.0}), std::domain_error);
  const InitialDistribution mu = triangle();
  // S(x) = (1 - x)^2 on a linear density
  EXPECT_NEAR(mu.survival(0.3), 0.49, 1e-14);
  EXPECT_NEAR(partial_mean(mu, 0.0, 1.0), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(mu.survival_integral(0.5), (1.0 - 0.125) / 3.0, 1e-14);
}

TEST(Psi, Examples) {
  EXPECT_EQ(psi(figure1(), 2.0, 0.0), 0.0);
  EXPECT_NEAR(psi(figure1(), 2.0, 50.0), 200.0, 1e-12);
  EXPECT_NEAR(psi(Exponential(1.0), 1.0, 1.0), 2.6321205588285577, 1e-14);
  EXPECT_THROW(psi(figure1(), 2.0, -1.0), std::domain_error);
}

TEST(Psi, InverseExamples) {
  EXPECT_EQ(psi_inv(figure1(), 2.0, 0.0), 0.0);
  EXPECT_NEAR(psi_inv(figure1(), 2.0, 150.0), 37.5, 1e-12);
  EXPECT_NEAR(psi_inv(Exponential(1.0), 1.0, psi(Exponential(1.0), 1.0, 3.7)), 3.7, 1e-10);
  EXPECT_THROW(psi_inv(figure1(), 2.0, -1.0), std::domain_error);
}

TEST(Psi, RoundTripAndBounds) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 150.0);
  const InitialDistribution ds[] = {figure1(), Exponential(0.2), triangle()};
  for (const auto& mu : ds) {
    const PsiFunction f(mu, 1.7);
    for (int i = 0; i < 500; ++i) {
      const double x = u(rng);
      const double y = f(x);
      EXPECT_GE(y, 2.0 * x - 1e-12);
      EXPECT_LE(y, 3.7 * x + 1e-12);
      EXPECT_NEAR(f(f.inverse(y)), y, 1e-10 * std::max(1.0, y));
      EXPECT_NEAR(f.inverse(y), x, 1e-9 * std::max(1.0, x));
    }
  }
}

TEST(Psi, DerivativeAwayFromAtoms) {
  const InitialDistribution ds[] = {figure1(), Exponential(1.0), triangle()};
  for (const auto& mu : ds) {
    const PsiFunction f(mu, 2.0);
    for (double x : {0.13, 0.61, 20.0, 75.0, 130.0}) {
      const double h = 1e-6;
      EXPECT_NEAR((f(x + h) - f(x - h)) / (2 * h), f.derivative(x), 1e-6);
    }
  }
}

TEST(PartialMean, Examples) {
  EXPECT_EQ(partial_mean(figure1(), 3.0, 3.0), 0.0);
  EXPECT_NEAR(partial_mean(figure1(), 0.0, 60.0), 25.0, 1e-12);
  EXPECT_NEAR(partial_mean(Exponential(1.0), 0.0, INFINITY), 1.0, 1e-15);
  EXPECT_THROW(partial_mean(figure1(), 2.0, 1.0), std::domain_error);
}

TEST(PartialMean, Additive) {
  const InitialDistribution ds[] = {figure1(), Exponential(0.3), triangle()};
  for (const auto& mu : ds) {
    for (double m : {0.2, 1.5, 50.0, 77.0}) {
      EXPECT_NEAR(partial_mean(mu, 0.1, m) + partial_mean(mu, m, 120.0), partial_mean(mu, 0.1, 120.0), 1e-12);
    }
  }
}
