#include <gtest/gtest.h>

#include <random>

#include "biphoton/crystal.hpp"
#include "biphoton/hom.hpp"
#include "oracles.hpp"

using namespace biphoton;

namespace {
GaussianModel model(PumpShape pump, PmfPhase phase, std::size_t n) {
  GaussianModel m;
  m.pump = pump;
  m.phase = phase;
  m.n_points = n;
  return m;
}

std::vector<double> axis_values(const SpectralAxis& ax) {
  std::vector<double> w(ax.size());
  for (std::size_t i = 0; i < ax.size(); ++i) w[i] = ax[i];
  return w;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}
}  // namespace

TEST(ClosedForms, WorkedValues) {
  EXPECT_DOUBLE_EQ(intra_fit_model(0.0, 0.8, 6.4, 1.0, PmfPhase::Pi), 1.0);
  EXPECT_DOUBLE_EQ(intra_fit_model(0.0, 0.8, 6.4, 1.0, PmfPhase::Zero), 0.0);
  const double p = intra_fit_model(oracle::pi / 5, 1.0, 5.0, 1.0, PmfPhase::Pi);
  EXPECT_NEAR(p, 0.5 - 0.5 * std::exp(-oracle::pi * oracle::pi / 100), 1e-15);
  EXPECT_NEAR(p, 0.0470, 5e-5);

  const double eta = std::exp(-4.0);
  const double q = intra_exact_model(oracle::pi / 2, 1.0, 2.0, 1.0);
  EXPECT_NEAR(q, 0.5 + 0.5 * std::exp(-oracle::pi * oracle::pi / 16) * (-1 - eta) / (1 - eta), 1e-15);
  EXPECT_NEAR(q, 0.2201, 5e-5);
  EXPECT_DOUBLE_EQ(intra_exact_model(0.0, 1.0, 2.0, 1.0), 1.0);
  for (double tau : {-1.0, 0.1, 0.37, 2.0})
    EXPECT_NEAR(intra_exact_model(tau, 1.0, 6.5, 1.0), intra_fit_model(tau, 1.0, 6.5, 1.0, PmfPhase::Pi), 1e-15);

  EXPECT_DOUBLE_EQ(inter_fit_model(0.0, 0.8, 6.4, 1.0), 0.25);
  const double s = 0.8, d = 6.4;
  EXPECT_NEAR(inter_fit_model(oracle::pi / (2 * d), s, d, 1.0),
              0.5 - 2.0 / 16.0 * std::exp(-s * s * oracle::pi * oracle::pi / (16 * d * d)), 1e-15);
  for (double tau : {0.0, 0.3, 1.1}) {
    EXPECT_NEAR(intra_fit_model(tau, s, d, 0.7, PmfPhase::Zero), oracle::intra_zero(tau, s, d, 0.7), 1e-15);
    EXPECT_NEAR(inter_fit_model(tau + oracle::pi / d, s, d, 1.0) - 0.5,
                (inter_fit_model(tau, s, d, 1.0) - 0.5) *
                    std::exp(-0.25 * s * s * (std::pow(tau + oracle::pi / d, 2) - tau * tau)),
                1e-14);
  }
}

TEST(IntraTrace, MatchesBruteForceSummation) {
  const auto f = gaussian_model_jsa(model(PumpShape::FourBin, PmfPhase::Pi, 64));
  const auto w = axis_values(f.s_axis);
  const std::vector<double> delays{-3.0, -0.4, 0.0, 0.25, 1.7};
  const auto tr = intra_pair_trace(f, delays);
  for (std::size_t t = 0; t < delays.size(); ++t) {
    const auto S = oracle::exchange_overlap(f.values, w, delays[t]);
    EXPECT_NEAR(tr.probability[t], 0.5 - 0.5 * S.real(), 1e-12);
  }
}

TEST(IntraTrace, ZeroDelayIdentity) {
  const auto f = gaussian_model_jsa(model(PumpShape::TripleHalf, PmfPhase::Pi, 96));
  const auto S = oracle::exchange_overlap(f.values, axis_values(f.s_axis), 0.0);
  EXPECT_NEAR(intra_pair_trace(f, {0.0}).probability[0], 0.5 * (1.0 - S.real()), 1e-9);
}

TEST(IntraTrace, ExchangeParityAtZeroDelay) {
  const auto ax = SpectralAxis::centered(1190.0, 6.0, 48);
  JointSpectralAmplitude f;
  f.s_axis = ax;
  f.i_axis = ax;
  f.values.resize(48, 48);
  for (int a = 0; a < 48; ++a)
    for (int b = 0; b < 48; ++b) {
      const double x = ax[a] - 1190.0, y = ax[b] - 1190.0;
      f.values(a, b) = (x - y) * std::exp(-0.25 * (x * x + y * y));
    }
  f.values /= std::sqrt(f.norm2());
  EXPECT_NEAR(intra_pair_trace(f, {0.0}).probability[0], 1.0, 1e-12);
  f.values = f.values.cwiseAbs().cast<cplx>();
  f.values /= std::sqrt(f.norm2());
  EXPECT_NEAR(intra_pair_trace(f, {0.0}).probability[0], 0.0, 1e-12);
}

TEST(IntraTrace, GaussianModelMatchesClosedForm) {
  for (auto phase : {PmfPhase::Pi, PmfPhase::Zero}) {
    const auto m = model(PumpShape::FourBin, phase, 512);
    const auto delays = default_delays(m.sigma);
    const auto tr = intra_pair_trace(gaussian_model_jsa(m), delays);
    std::vector<double> ref(delays.size());
    for (std::size_t t = 0; t < delays.size(); ++t) ref[t] = intra_fit_model(delays[t], m.sigma, m.delta, 1.0, phase);
    EXPECT_LT(max_abs_diff(tr.probability, ref), 1e-3);
    // edges approach 1/2
    EXPECT_NEAR(tr.probability.front(), 0.5, 0.01);
    EXPECT_NEAR(tr.probability.back(), 0.5, 0.01);
  }
}

TEST(IntraTrace, SymmetricAndBaselineForRealMask) {
  const auto m = model(PumpShape::FourBin, PmfPhase::Pi, 256);
  const auto delays = default_delays(m.sigma);
  const auto tr = intra_pair_trace(gaussian_model_jsa(m), delays);
  const std::size_t n = delays.size();
  for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(tr.probability[t], tr.probability[n - 1 - t], 1e-9);
  double acc = 0.0;
  int cnt = 0;
  for (std::size_t t = 0; t < n; ++t)
    if (std::abs(delays[t]) > 6.0 / m.sigma) acc += tr.probability[t], ++cnt;
  ASSERT_GT(cnt, 0);
  EXPECT_NEAR(acc / cnt, 0.5, 1e-3);
  for (double p : tr.probability) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(IntraTrace, NonSquareGridRejected) {
  JointSpectralAmplitude f;
  f.s_axis = SpectralAxis::centered(1190.0, 5.0, 32);
  f.i_axis = SpectralAxis::centered(1190.0, 5.0, 33);
  f.values = Eigen::MatrixXcd::Constant(32, 33, 0.1);
  EXPECT_THROW(intra_pair_trace(f, {0.0}), ValidationError);
}

TEST(Heralded, DensityPropertiesAndPurity) {
  const auto f = gaussian_model_jsa(model(PumpShape::FourBin, PmfPhase::Pi, 256));
  const auto d = heralded_density(f);
  EXPECT_NEAR(d.trace(), 1.0, 1e-10);
  EXPECT_LT((d.rho - d.rho.adjoint()).cwiseAbs().maxCoeff(), 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(d.rho);
  EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
  EXPECT_NEAR(d.purity(), 0.5, 3e-3);
  EXPECT_NEAR(d.purity(), schmidt_decompose(f).purity, 1e-10);
}

TEST(Heralded, SeparableStateIsPure) {
  const auto ax = SpectralAxis::centered(1190.0, 8.0, 64);
  JointSpectralAmplitude f;
  f.s_axis = ax;
  f.i_axis = ax;
  f.values.resize(64, 64);
  for (int a = 0; a < 64; ++a)
    for (int b = 0; b < 64; ++b)
      f.values(a, b) = std::exp(-0.5 * std::pow(ax[a] - 1191.0, 2)) * std::exp(-0.5 * std::pow((ax[b] - 1189.0) / 1.5, 2));
  f.values /= std::sqrt(f.norm2());
  const auto d = heralded_density(f);
  EXPECT_NEAR(d.purity(), 1.0, 1e-12);
  EXPECT_NEAR(inter_pair_trace(d, {0.0}).probability[0], 0.0, 1e-12);
}

TEST(Heralded, FourBinTraceMatchesClosedForm) {
  const auto m = model(PumpShape::FourBin, PmfPhase::Pi, 256);
  const auto d = heralded_density(gaussian_model_jsa(m));
  const auto delays = default_delays(m.sigma);
  const auto tr = inter_pair_trace(d, delays);
  std::vector<double> ref(delays.size());
  for (std::size_t t = 0; t < delays.size(); ++t) ref[t] = inter_fit_model(delays[t], m.sigma, m.delta, 1.0);
  EXPECT_LT(max_abs_diff(tr.probability, ref), 1e-3);
  const auto z = inter_pair_trace(d, {0.0});
  EXPECT_NEAR(z.probability[0], 0.5 - 0.5 * d.purity(), 1e-9);
  EXPECT_NEAR(z.probability[0], 0.25, 2e-3);
  const auto w = axis_values(d.axis);
  EXPECT_NEAR(z.probability[0], oracle::heralded_hom(d.rho, w, 0.0), 1e-12);
  EXPECT_NEAR(tr.probability[37], oracle::heralded_hom(d.rho, w, delays[37]), 1e-12);
}

TEST(Heralded, NonHermitianRejected) {
  auto d = heralded_density(gaussian_model_jsa(model(PumpShape::FourBin, PmfPhase::Pi, 32)));
  d.rho(0, 1) += cplx{1e-6, 0.0};
  EXPECT_THROW(inter_pair_trace(d, {0.0}), ValidationError);
}

TEST(Heralded, FrequencyDoubling) {
  const auto m = model(PumpShape::FourBin, PmfPhase::Pi, 256);
  // delay grid whose DFT bins fall exactly on delta and 2 delta
  const std::size_t n = 201;
  const double dw = m.delta / 25.0;
  const double T = kTwoPi * (n - 1) / (static_cast<double>(n) * dw * 2.0);
  const auto delays = linspace(-T, T, n);
  const auto f = gaussian_model_jsa(m);
  const auto intra = intra_pair_trace(f, delays);
  const auto inter = inter_pair_trace(heralded_density(f), delays);
  const double w1 = dominant_beat_frequency(delays, intra.probability);
  const double w2 = dominant_beat_frequency(delays, inter.probability);
  EXPECT_NEAR(w1, m.delta, 1e-9);
  EXPECT_NEAR(w2, 2.0 * w1, 1e-9);
}

TEST(Heralded, SingleBinOfDesignCrystalIsNearlyPure) {
  // one bin of the four-bin state with the finite, truncated-Gaussian crystal
  const double L = 30.0, eps = 1.331, xi = 4.0 / L, delta = 6.4;
  const double slope = eps / (2.0 * delta);
  GaussianModel m;
  m.delta = delta;
  m.sigma = xi / slope;
  m.n_points = 256;
  const auto ax = m.axis();
  const auto disp = DispersionModel::linearized(0.0, slope);
  const auto target = target_nonlinearity(L, 0.0, eps, xi);
  auto f = model_pump_jsa(m, target_pmf_grid(ax, ax, disp, target));
  const double w0 = m.omega0;
  for (Eigen::Index a = 0; a < f.values.rows(); ++a)
    for (Eigen::Index b = 0; b < f.values.cols(); ++b)
      if (!(ax[a] - w0 > 0.5 * delta && std::abs(ax[b] - w0) < 0.5 * delta)) f.values(a, b) = 0.0;
  f.values /= std::sqrt(f.norm2());
  EXPECT_NEAR(heralded_density(f).purity(), 0.993, 0.005);
}

TEST(Fit, NoiselessRecoveryIsExact) {
  HomTrace tr;
  tr.delays = default_delays(0.8);
  for (double t : tr.delays) tr.probability.push_back(0.5 * hom_model(FitModel::IntraPi, t, 0.8, 6.4, 0.93, 1.0));
  const auto r = fit_trace(tr, FitModel::IntraPi, FitGuess{0.85, 6.3, 0.8, 0.0});
  EXPECT_NEAR(r.sigma / 0.8, 1.0, 1e-6);
  EXPECT_NEAR(r.delta / 6.4, 1.0, 1e-6);
  EXPECT_NEAR(r.V / 0.93, 1.0, 1e-6);
  EXPECT_NEAR(r.baseline, 0.5, 1e-6);
}

TEST(Fit, PoissonVisibilityWithinThreeSigma) {
  const double sigma = 0.8, delta = 6.4, V = 0.9, base = 1000.0;
  const auto delays = default_delays(sigma);
  int inside = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    HomTrace tr;
    tr.delays = delays;
    for (double t : delays) {
      std::poisson_distribution<long> P(hom_model(FitModel::IntraPi, t, sigma, delta, V, base));
      tr.counts.push_back(static_cast<double>(P(rng)));
    }
    tr.probability.assign(delays.size(), 0.0);
    const auto r = fit_trace(tr, FitModel::IntraPi, FitGuess{0.85, 6.3, 0.8, 0.0});
    if (std::abs(r.V - V) <= 3.0 * r.stderr_V()) ++inside;
  }
  EXPECT_GE(inside, 95);
}

TEST(Fit, WrongModelLeavesLargeResidual) {
  const auto m = model(PumpShape::FourBin, PmfPhase::Zero, 256);
  const auto tr = intra_pair_trace(gaussian_model_jsa(m), default_delays(m.sigma));
  const FitGuess g{0.85, 6.3, 0.8, 0.0};
  const auto good = fit_trace(tr, FitModel::IntraZero, g);
  const auto bad = fit_trace(tr, FitModel::IntraPi, g);
  EXPECT_GT(bad.residual_norm, 10.0 * good.residual_norm);
  EXPECT_NEAR(good.V, 1.0, 1e-2);
}

TEST(Fit, RejectsShortData) {
  HomTrace tr;
  tr.delays = linspace(-0.1, 0.1, 20);
  tr.probability.assign(20, 0.5);
  EXPECT_THROW(fit_trace(tr, FitModel::IntraPi, FitGuess{}), ValidationError);
  tr.delays.resize(5);
  tr.probability.resize(5);
  EXPECT_THROW(fit_trace(tr, FitModel::IntraPi, FitGuess{}), ValidationError);
}

TEST(Fit, NonConvergenceCarriesBestSoFar) {
  HomTrace tr;
  tr.delays = default_delays(0.8);
  for (double t : tr.delays) tr.probability.push_back(intra_fit_model(t, 0.8, 6.4, 0.9, PmfPhase::Pi));
  try {
    fit_trace(tr, FitModel::IntraPi, FitGuess{1.2, 5.0, 0.5, 0.0}, 1);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_GT(e.best_so_far().sigma, 0.0);
    EXPECT_EQ(e.best_so_far().iterations, 1);
  }
}
