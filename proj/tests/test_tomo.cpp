#include <gtest/gtest.h>

#include "biphoton/tomo.hpp"
#include "oracles.hpp"

using namespace biphoton;

namespace {
ProjectionSet expected_set(const DensityMatrix& rho, double N) {
  auto s = ProjectionSet::standard();
  s.counts = predicted_counts(rho, s, N);
  return s;
}

DensityMatrix werner(double p) {
  return p * pure_density(phi_plus()) + (1.0 - p) * DensityMatrix::Identity() / 4.0;
}
}  // namespace

TEST(Projectors, TensorExamples) {
  const auto hh = projector(Pol::H, Pol::H);
  Eigen::Matrix4cd e = Eigen::Matrix4cd::Zero();
  e(0, 0) = 1.0;
  EXPECT_LT((hh - e).cwiseAbs().maxCoeff(), 1e-15);
  const auto dd = projector(Pol::D, Pol::D);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(std::abs(dd(i, j) - 0.25), 0.0, 1e-15);
  const Eigen::Matrix4cd sum = projector(Pol::H, Pol::H) + projector(Pol::H, Pol::V) + projector(Pol::V, Pol::H) +
                               projector(Pol::V, Pol::V);
  EXPECT_LT((sum - Eigen::Matrix4cd::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(parse_pol("X"), ValidationError);
  EXPECT_EQ(parse_pol("R"), Pol::R);
  // R = (H + iV)/sqrt2
  EXPECT_NEAR(pol_state(Pol::R)(1).imag(), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Projectors, BasisCompletenessForAnyState) {
  Eigen::Matrix4cd X = Eigen::Matrix4cd::Random();
  DensityMatrix rho = X * X.adjoint();
  rho /= rho.trace().real();
  const auto set = ProjectionSet::standard();
  const auto c = predicted_counts(rho, set, 1.0);
  std::array<double, 9> per_basis{};
  for (std::size_t k = 0; k < set.settings.size(); ++k) per_basis[set.settings[k].basis()] += c[k];
  for (double s : per_basis) EXPECT_NEAR(s, 1.0, 1e-10);
}

TEST(Projectors, ProjectionSetValidation) {
  auto s = ProjectionSet::standard();
  EXPECT_NO_THROW(s.validate());
  s.settings[5] = s.settings[6];
  EXPECT_THROW(s.validate(), ValidationError);
  s = ProjectionSet::standard();
  s.settings.pop_back();
  s.counts.pop_back();
  EXPECT_THROW(s.validate(), ValidationError);
  s = ProjectionSet::standard();
  s.counts[0] = -1.0;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(PredictedCounts, BellAndMixedExamples) {
  const auto set = ProjectionSet::standard();
  const auto c = predicted_counts(pure_density(phi_plus()), set, 1e4);
  for (std::size_t k = 0; k < set.settings.size(); ++k) {
    if (set.settings[k].label() == "HV") EXPECT_NEAR(c[k], 0.0, 1e-9);
    if (set.settings[k].label() == "DD") EXPECT_NEAR(c[k], 5e3, 1e-9);
  }
  for (double v : predicted_counts(DensityMatrix::Identity() / 4.0, set, 1e4)) EXPECT_NEAR(v, 2500.0, 1e-9);
}

TEST(Metrics, FidelityAndConcurrence) {
  const auto pp = pure_density(phi_plus());
  EXPECT_NEAR(fidelity(pp, phi_plus()), 1.0, 1e-15);
  EXPECT_NEAR(fidelity(DensityMatrix::Identity() / 4.0, psi_minus()), 0.25, 1e-15);
  EXPECT_NEAR(fidelity(pure_density(psi_plus()), phi_plus()), 0.0, 1e-15);
  for (const auto& b : {phi_plus(), phi_minus(), psi_plus(), psi_minus()}) EXPECT_NEAR(concurrence(pure_density(b)), 1.0, 1e-7);
  EXPECT_NEAR(concurrence(DensityMatrix::Identity() / 4.0), 0.0, 1e-12);
  EXPECT_NEAR(concurrence(werner(0.8)), oracle::werner_concurrence(0.8), 1e-7);
  EXPECT_NEAR(oracle::werner_concurrence(0.8), 0.7, 1e-15);
  // pure non-maximally entangled state against the closed form
  TwoQubitState psi{cplx{0.8, 0.0}, cplx{0.1, 0.2}, cplx{0.0, -0.3}, cplx{0.4, 0.1}};
  psi.normalize();
  EXPECT_NEAR(concurrence(pure_density(psi)), oracle::pure_concurrence(psi(0), psi(1), psi(2), psi(3)), 1e-7);
}

TEST(Mle, NoiselessBellRecovery) {
  const auto r = mle_reconstruct(expected_set(pure_density(phi_plus()), 1e4));
  EXPECT_GT(fidelity(r.rho, phi_plus()), 0.9999);
  EXPECT_NO_THROW(check_density(r.rho));
}

TEST(Mle, MaximallyMixedPurity) {
  const auto r = mle_reconstruct(expected_set(DensityMatrix::Identity() / 4.0, 1e4));
  EXPECT_NEAR(purity(r.rho), 0.25, 1e-3);
  EXPECT_TRUE(r.converged);
}

TEST(Mle, InteriorStateRecoveredExactly) {
  const auto rho = werner(0.9);
  const auto r = mle_reconstruct(expected_set(rho, 1e4));
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.rho - rho).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Mle, LikelihoodNonDecreasing) {
  const auto r = mle_reconstruct(poisson_resample(expected_set(werner(0.95), 1e4), 3));
  ASSERT_GE(r.likelihood_history.size(), 2u);
  for (std::size_t k = 1; k < r.likelihood_history.size(); ++k)
    EXPECT_GE(r.likelihood_history[k], r.likelihood_history[k - 1]);
  EXPECT_NO_THROW(check_density(r.rho));
}

TEST(Mle, PoissonBellRecovery) {
  const auto set = expected_set(pure_density(phi_plus()), 1e4);
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto r = mle_reconstruct(poisson_resample(set, seed));
    const double F = fidelity(r.rho, phi_plus()), C = concurrence(r.rho);
    EXPECT_GE(C, 0.0);
    EXPECT_LE(C, 1.0);
    if (F > 0.99 && C > 0.98) ++good;
  }
  EXPECT_GE(good, 95);
}

TEST(Mle, AllZeroRejected) { EXPECT_THROW(mle_reconstruct(ProjectionSet::standard()), ValidationError); }

TEST(MonteCarlo, DeterministicPerSeed) {
  const auto set = poisson_resample(expected_set(werner(0.97), 1e4), 5);
  auto F = [](const DensityMatrix& r) { return fidelity(r, phi_plus()); };
  const auto a = monte_carlo_uncertainty(set, 50, 9, F);
  const auto b = monte_carlo_uncertainty(set, 50, 9, F);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stddev, b.stddev);
  EXPECT_EQ(a.failures, 0);
  EXPECT_THROW(monte_carlo_uncertainty(set, 10, 9, F), ValidationError);
}

TEST(MonteCarlo, LargeCountLimit) {
  const auto set = expected_set(werner(0.9), 1e10);
  const auto r = monte_carlo_uncertainty(set, 50, 1, [](const DensityMatrix& m) { return fidelity(m, phi_plus()); });
  EXPECT_LT(r.stddev, 1e-3);
  EXPECT_NEAR(r.mean, fidelity(werner(0.9), phi_plus()), 1e-3);
}

TEST(MonteCarlo, BellFidelitySpreadInPercentagePoints) {
  const auto data = poisson_resample(expected_set(pure_density(phi_plus()), 1e4), 77);
  const auto r = monte_carlo_uncertainty(data, 100, 2, [](const DensityMatrix& m) { return fidelity(m, phi_plus()); });
  const double std_pct = 100.0 * r.stddev;
  EXPECT_GE(std_pct, 1e-3);
  EXPECT_LE(std_pct, 1e-2);
}
