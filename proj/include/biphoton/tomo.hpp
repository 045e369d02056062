#pragma once

// Two-qubit polarisation tomography from 36 product projections:
// projectors, forward model, maximum-likelihood reconstruction over
// rho = T^dagger T / Tr, fidelity, concurrence and Poisson Monte Carlo.
//
// Two-qubit basis order: HH, HV, VH, VV.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "biphoton/core.hpp"

namespace biphoton {

using DensityMatrix = Eigen::Matrix4cd;
using TwoQubitState = Eigen::Vector4cd;

enum class Pol { H, V, D, A, R, L };

inline constexpr std::array<Pol, 6> kPolLabels{Pol::H, Pol::V, Pol::D, Pol::A, Pol::R, Pol::L};

inline char to_char(Pol p) { return "HVDARL"[static_cast<int>(p)]; }

inline Pol parse_pol(const std::string& s) {
  if (s.size() == 1)
    for (Pol p : kPolLabels)
      if (s[0] == to_char(p)) return p;
  throw ValidationError("unknown polarisation label '" + s + "' (expected one of H, V, D, A, R, L)");
}

/// Single-photon state; R = (H + iV)/sqrt 2.
inline Eigen::Vector2cd pol_state(Pol p) {
  const double r = 1.0 / std::sqrt(2.0);
  switch (p) {
    case Pol::H: return {1.0, 0.0};
    case Pol::V: return {0.0, 1.0};
    case Pol::D: return {r, r};
    case Pol::A: return {r, -r};
    case Pol::R: return {cplx{r, 0.0}, cplx{0.0, r}};
    case Pol::L: return {cplx{r, 0.0}, cplx{0.0, -r}};
  }
  return {};
}

/// Index 0..2 of the single-qubit basis (HV, DA, RL) a label belongs to.
inline int pol_basis(Pol p) { return static_cast<int>(p) / 2; }

inline TwoQubitState product_state(Pol a, Pol b) {
  const auto u = pol_state(a), v = pol_state(b);
  return {u(0) * v(0), u(0) * v(1), u(1) * v(0), u(1) * v(1)};
}

inline Eigen::Matrix4cd projector(Pol a, Pol b) {
  const auto s = product_state(a, b);
  return s * s.adjoint();
}

struct Setting {
  Pol a, b;
  int basis() const { return 3 * pol_basis(a) + pol_basis(b); }
  std::string label() const { return std::string{to_char(a), to_char(b)}; }
  bool operator==(const Setting&) const = default;
};

struct ProjectionSet {
  std::vector<Setting> settings;
  std::vector<double> counts;
  double integration_time_s = 0.0;

  /// All 36 (a, b) settings in H, V, D, A, R, L order with zero counts.
  static ProjectionSet standard() {
    ProjectionSet s;
    for (Pol a : kPolLabels)
      for (Pol b : kPolLabels) s.settings.push_back({a, b});
    s.counts.assign(36, 0.0);
    return s;
  }

  void validate() const {
    detail::require(settings.size() == 36, detail::concat("projection set needs 36 settings, got ", settings.size()));
    detail::require(counts.size() == settings.size(), "projection set: one count per setting required");
    for (std::size_t i = 0; i < settings.size(); ++i)
      for (std::size_t j = i + 1; j < settings.size(); ++j)
        if (settings[i] == settings[j]) throw ValidationError("projection set: duplicate setting " + settings[i].label());
    for (double c : counts)
      detail::require(c >= 0.0 && std::isfinite(c), "projection counts must be non-negative");
  }
};

inline void check_density(const DensityMatrix& rho, double tol = 1e-10) {
  if (!rho.allFinite()) throw ValidationError("density matrix has non-finite entries");
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) throw ValidationError("density matrix is not Hermitian");
  if (std::abs(rho.trace() - 1.0) > tol) throw ValidationError("density matrix trace is not 1");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(rho);
  if (es.eigenvalues().minCoeff() < -tol) throw ValidationError("density matrix has a negative eigenvalue");
}

inline double purity(const DensityMatrix& rho) { return (rho * rho).trace().real(); }

/// N * Tr(rho Pi_ab) per setting.
inline std::vector<double> predicted_counts(const DensityMatrix& rho, const ProjectionSet& set, double N_per_basis) {
  std::vector<double> out;
  out.reserve(set.settings.size());
  for (const auto& s : set.settings) out.push_back(N_per_basis * std::max(0.0, (rho * projector(s.a, s.b)).trace().real()));
  return out;
}

// --- Bell states and metrics ------------------------------------------------------

inline TwoQubitState phi_plus() { return TwoQubitState{1.0, 0.0, 0.0, 1.0} / std::sqrt(2.0); }
inline TwoQubitState phi_minus() { return TwoQubitState{1.0, 0.0, 0.0, -1.0} / std::sqrt(2.0); }
inline TwoQubitState psi_plus() { return TwoQubitState{0.0, 1.0, 1.0, 0.0} / std::sqrt(2.0); }
inline TwoQubitState psi_minus() { return TwoQubitState{0.0, 1.0, -1.0, 0.0} / std::sqrt(2.0); }

inline DensityMatrix pure_density(const TwoQubitState& psi) { return psi * psi.adjoint() / psi.squaredNorm(); }

/// <psi| rho |psi> for a normalized pure target.
inline double fidelity(const DensityMatrix& rho, const TwoQubitState& psi) {
  const TwoQubitState u = psi / psi.norm();
  return std::clamp((u.adjoint() * rho * u)(0, 0).real(), 0.0, 1.0);
}

/// Wootters concurrence from the eigenvalues of sqrt(rho) rho~ sqrt(rho).
inline double concurrence(const DensityMatrix& rho) {
  Eigen::Matrix4cd yy = Eigen::Matrix4cd::Zero();
  yy(0, 3) = -1.0;
  yy(1, 2) = 1.0;
  yy(2, 1) = 1.0;
  yy(3, 0) = -1.0;
  const Eigen::Matrix4cd tilde = yy * rho.conjugate() * yy;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(rho);
  const Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::Matrix4cd sq = es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  Eigen::Matrix4cd h = sq * tilde * sq;
  h = 0.5 * (h + h.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es2(h);
  std::array<double, 4> l;
  for (int k = 0; k < 4; ++k) l[k] = std::sqrt(std::max(0.0, es2.eigenvalues()(k)));
  std::sort(l.begin(), l.end(), std::greater<>());
  return std::clamp(l[0] - l[1] - l[2] - l[3], 0.0, 1.0);
}

// --- maximum likelihood -------------------------------------------------------------

struct MleOptions {
  int max_iter = 2000;
  double gradient_tol = 1e-8;  ///< on |grad| / total counts
};

struct MleResult {
  DensityMatrix rho;
  bool converged = false;
  double gradient_norm = 0.0;  ///< per count, at the final point
  int iterations = 0;
  double log_likelihood = 0.0;
  std::vector<double> likelihood_history;  ///< accepted iterates
};

namespace detail {

// 16 real parameters of a lower-triangular T: 4 real diagonal entries, then
// real and imaginary parts of the 6 sub-diagonal entries.
struct TParam {
  int r, c;
  bool imag;
};

inline const std::array<TParam, 16>& t_params() {
  static const std::array<TParam, 16> p = [] {
    std::array<TParam, 16> q{};
    int k = 0;
    for (int i = 0; i < 4; ++i) q[k++] = {i, i, false};
    for (int r = 1; r < 4; ++r)
      for (int c = 0; c < r; ++c) {
        q[k++] = {r, c, false};
        q[k++] = {r, c, true};
      }
    return q;
  }();
  return p;
}

inline Eigen::Matrix4cd t_from(const Eigen::Matrix<double, 16, 1>& x) {
  Eigen::Matrix4cd T = Eigen::Matrix4cd::Zero();
  const auto& ps = t_params();
  for (int k = 0; k < 16; ++k) T(ps[k].r, ps[k].c) += ps[k].imag ? cplx{0.0, x(k)} : cplx{x(k), 0.0};
  return T;
}

}  // namespace detail

/// Maximizes sum_k n_k log p_k, the Poisson likelihood with the per-basis
/// totals profiled out. With x the 16 parameters of T, p_k = x^T A_k x / x^T x,
/// so gradient and Hessian are exact; steps are damped Newton (Levenberg)
/// with backtracking, and T is rescaled to unit trace after every step.
inline MleResult mle_reconstruct(const ProjectionSet& set, const MleOptions& opts = {}) {
  set.validate();
  double total = 0.0;
  for (double c : set.counts) total += c;
  if (!(total > 0.0)) throw ValidationError("mle_reconstruct: all counts are zero");

  using Vec = Eigen::Matrix<double, 16, 1>;
  using Mat = Eigen::Matrix<double, 16, 16>;
  const std::size_t m = set.settings.size();

  // quadratic forms q_k(x) = Tr(T Pi_k T^dagger) by polarization
  std::vector<Mat> A(m);
  for (std::size_t k = 0; k < m; ++k) {
    const Eigen::Matrix4cd P = projector(set.settings[k].a, set.settings[k].b);
    auto q = [&](const Vec& x) {
      const Eigen::Matrix4cd T = detail::t_from(x);
      return (T * P * T.adjoint()).trace().real();
    };
    for (int i = 0; i < 16; ++i) A[k](i, i) = q(Vec::Unit(i));
    for (int i = 0; i < 16; ++i)
      for (int j = i + 1; j < 16; ++j) A[k](i, j) = A[k](j, i) = 0.5 * (q(Vec::Unit(i) + Vec::Unit(j)) - A[k](i, i) - A[k](j, j));
  }

  auto loglik = [&](const Vec& x) {
    const double t = x.squaredNorm();
    double L = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (set.counts[k] == 0.0) continue;
      const double qk = x.dot(A[k] * x);
      if (!(qk > 0.0)) return -std::numeric_limits<double>::infinity();
      L += set.counts[k] * std::log(qk / t);
    }
    return L;
  };
  auto derivs = [&](const Vec& x, Vec& g, Mat& H) {
    const double t = x.squaredNorm();
    g = -2.0 * total / t * x;
    H = -2.0 * total / t * Mat::Identity() + 4.0 * total / (t * t) * x * x.transpose();
    for (std::size_t k = 0; k < m; ++k) {
      if (set.counts[k] == 0.0) continue;
      const Vec Ax = A[k] * x;
      const double qk = x.dot(Ax);
      g += 2.0 * set.counts[k] / qk * Ax;
      H += 2.0 * set.counts[k] / qk * A[k] - 4.0 * set.counts[k] / (qk * qk) * Ax * Ax.transpose();
    }
  };

  Vec x = Vec::Zero();
  for (int i = 0; i < 4; ++i) x(i) = 0.5;  // rho = I/4
  double L = loglik(x);

  MleResult res;
  res.likelihood_history.push_back(L);
  Vec g;
  Mat H;
  double mu = 1e-3;
  int it = 0;
  double gnorm = 0.0;
  for (; it < opts.max_iter; ++it) {
    derivs(x, g, H);
    gnorm = g.norm() / total;
    if (gnorm < opts.gradient_tol) {
      res.converged = true;
      break;
    }
    const Mat negH = -H;
    const double scale = std::max(negH.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    bool accepted = false;
    for (int tries = 0; tries < 60 && !accepted; ++tries) {
      Mat M = negH;
      M.diagonal().array() += mu * scale;
      Eigen::LLT<Mat> llt(M);
      if (llt.info() != Eigen::Success) {
        mu *= 10.0;
        continue;
      }
      const Vec step = llt.solve(g);
      double alpha = 1.0;
      for (int bt = 0; bt < 8 && !accepted; ++bt, alpha *= 0.5) {
        Vec xt = x + alpha * step;
        const double nt = xt.norm();
        if (!(nt > 0.0)) continue;
        xt /= nt;
        const double Lt = loglik(xt);
        if (Lt >= L) {
          x = xt;
          L = Lt;
          accepted = true;
        }
      }
      if (accepted)
        mu = std::max(mu * 0.1, 1e-14);
      else
        mu *= 10.0;
    }
    if (!accepted) break;  // no ascent direction left at machine precision
    res.likelihood_history.push_back(L);
  }

  const Eigen::Matrix4cd T = detail::t_from(x);
  const Eigen::Matrix4cd M = T.adjoint() * T;
  res.rho = M / M.trace().real();
  res.rho = 0.5 * (res.rho + res.rho.adjoint()).eval();
  res.iterations = it;
  res.gradient_norm = gnorm;
  res.log_likelihood = L;
  return res;
}

// --- Monte Carlo -------------------------------------------------------------------

/// Poisson sample of every setting's count around `expected`.
inline ProjectionSet poisson_resample(const ProjectionSet& expected, std::uint64_t seed) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  std::mt19937_64 rng(ss);
  ProjectionSet out = expected;
  for (auto& c : out.counts) {
    if (c <= 0.0) {
      c = 0.0;
      continue;
    }
    std::poisson_distribution<long long> pois(c);
    c = static_cast<double>(pois(rng));
  }
  return out;
}

class ReconstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct McResult {
  double mean = 0.0;
  double stddev = 0.0;
  int trials = 0;
  int failures = 0;
};

/// Resamples the counts n_trials times (trial t seeded from (seed, t)),
/// reconstructs each and reports the mean and sample standard deviation of
/// `metric`. Non-converged or failed reconstructions count as failures.
inline McResult monte_carlo_uncertainty(const ProjectionSet& set, int n_trials, std::uint64_t seed,
                                        const std::function<double(const DensityMatrix&)>& metric,
                                        const MleOptions& opts = {}) {
  set.validate();
  detail::require(n_trials >= 50, "monte_carlo_uncertainty: need at least 50 trials");
  std::vector<double> values(static_cast<std::size_t>(n_trials), 0.0);
  std::vector<char> ok(static_cast<std::size_t>(n_trials), 0);
  parallel_for(static_cast<std::size_t>(n_trials), [&](std::size_t t) {
    const std::uint64_t s = seed * 0x9E3779B97F4A7C15ULL + t + 1;
    try {
      const auto r = mle_reconstruct(poisson_resample(set, s), opts);
      if (r.converged) {
        values[t] = metric(r.rho);
        ok[t] = 1;
      }
    } catch (const std::exception&) {
    }
  });
  McResult out;
  out.trials = n_trials;
  std::vector<double> good;
  for (std::size_t t = 0; t < values.size(); ++t)
    if (ok[t])
      good.push_back(values[t]);
    else
      ++out.failures;
  if (out.failures * 10 > n_trials)
    throw ReconstructionError(detail::concat("monte_carlo_uncertainty: ", out.failures, " of ", n_trials,
                                             " reconstructions failed"));
  double mean = 0.0;
  for (double v : good) mean += v;
  mean /= static_cast<double>(good.size());
  double var = 0.0;
  for (double v : good) var += detail::sqr(v - mean);
  out.mean = mean;
  out.stddev = good.size() > 1 ? std::sqrt(var / static_cast<double>(good.size() - 1)) : 0.0;
  return out;
}

}  // namespace biphoton
