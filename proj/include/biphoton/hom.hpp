#pragma once

// Hong-Ou-Mandel traces: intra-pair interference of one photon pair and
// heralded interference of two independent pairs, the closed-form models
// used to fit measured traces, and a weighted Levenberg-Marquardt fitter.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "biphoton/core.hpp"
#include "biphoton/jsa.hpp"

namespace biphoton {

enum class TraceKind { Intra, InterHeralded };

struct HomTrace {
  std::vector<double> delays;       ///< ps
  std::vector<double> probability;  ///< coincidence probability
  std::vector<double> counts;       ///< optional raw coincidences (same length as delays)
  TraceKind kind = TraceKind::Intra;

  bool has_counts() const { return !counts.empty(); }
};

/// 201 delays over +/- 10 / sigma.
inline std::vector<double> default_delays(double sigma, std::size_t n = 201) {
  detail::require(sigma > 0.0, "default_delays: sigma must be positive");
  return linspace(-10.0 / sigma, 10.0 / sigma, n);
}

namespace detail {

// sum_ab W_ab e^{i (w_b - w_a) tau} for every tau, with w relative to the axis
// centre (the phase depends only on differences).
inline std::vector<cplx> phase_weighted_sums(const Eigen::MatrixXcd& W, const SpectralAxis& axis,
                                             const std::vector<double>& delays) {
  const auto n = static_cast<Eigen::Index>(axis.size());
  std::vector<cplx> out(delays.size());
  const double c = axis.center();
  parallel_for(delays.size(), [&](std::size_t t) {
    Eigen::VectorXcd v(n);
    for (Eigen::Index b = 0; b < n; ++b) v(b) = std::polar(1.0, (axis[b] - c) * delays[t]);
    const Eigen::VectorXcd wv = W * v;
    out[t] = v.dot(wv);  // conj(v_a) * (W v)_a
  });
  return out;
}

inline double clamp_overshoot(double p) {
  if (p < 0.0 && p > -1e-9) return 0.0;
  if (p > 1.0 && p < 1.0 + 1e-9) return 1.0;
  return p;
}

}  // namespace detail

/// S(tau) = sum f*(ws, wi) f(wi, ws) e^{i (wi - ws) tau} dws dwi for every delay.
inline std::vector<cplx> exchange_overlaps(const JointSpectralAmplitude& f, const std::vector<double>& delays) {
  f.check_shape();
  if (!f.square())
    throw ValidationError(detail::concat("exchange overlap needs a square grid with identical axes; got ",
                                         f.s_axis.size(), " x ", f.i_axis.size()));
  const Eigen::MatrixXcd W = f.values.conjugate().cwiseProduct(f.values.transpose()) * f.cell();
  return detail::phase_weighted_sums(W, f.s_axis, delays);
}

inline cplx exchange_overlap(const JointSpectralAmplitude& f, double tau) { return exchange_overlaps(f, {tau})[0]; }

/// p(tau) = 1/2 - Re S(tau) / 2.
inline HomTrace intra_pair_trace(const JointSpectralAmplitude& f, const std::vector<double>& delays) {
  const auto S = exchange_overlaps(f, delays);
  HomTrace tr;
  tr.kind = TraceKind::Intra;
  tr.delays = delays;
  tr.probability.resize(delays.size());
  for (std::size_t t = 0; t < delays.size(); ++t) tr.probability[t] = detail::clamp_overshoot(0.5 - 0.5 * S[t].real());
  return tr;
}

/// Closed-form intra-pair model for well-separated bins.
inline double intra_fit_model(double tau, double sigma, double delta, double V, PmfPhase phase) {
  const double beat = V * 0.5 * std::exp(-0.25 * sigma * sigma * tau * tau) * std::cos(delta * tau);
  return phase == PmfPhase::Pi ? 0.5 + beat : 0.5 - beat;
}

/// Intra-pair model including the overlap eta = exp(-delta^2 / sigma^2) of the two lobes.
inline double intra_exact_model(double tau, double sigma, double delta, double V) {
  const double eta = std::exp(-delta * delta / (sigma * sigma));
  return 0.5 + 0.5 * V * std::exp(-0.25 * sigma * sigma * tau * tau) * (std::cos(delta * tau) - eta) / (1.0 - eta);
}

inline double inter_fit_model(double tau, double sigma, double delta, double V) {
  return 0.5 - V / 16.0 * std::exp(-0.25 * sigma * sigma * tau * tau) * (3.0 + std::cos(2.0 * delta * tau));
}

// --- heralded interference --------------------------------------------------------

/// Reduced signal state on its grid, stored as a discrete density matrix
/// (rho_ab = rho_s(wa, wb) dw, trace 1).
struct SpectralDensity {
  SpectralAxis axis;
  Eigen::MatrixXcd rho;

  double trace() const { return rho.trace().real(); }
  double purity() const { return rho.cwiseAbs2().sum(); }

  void validate(double tol = 1e-8) const {
    detail::require(rho.rows() == rho.cols() && rho.rows() == static_cast<Eigen::Index>(axis.size()),
                    "spectral density does not match its axis");
    if (!rho.allFinite()) throw ValidationError("spectral density has non-finite entries");
    const double dev = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (dev > tol) throw ValidationError(detail::concat("spectral density is not Hermitian (deviation ", dev, ")"));
  }
};

/// rho_s(ws, ws') = integral f(ws, wi) f*(ws', wi) dwi.
inline SpectralDensity heralded_density(const JointSpectralAmplitude& f) {
  f.check_shape();
  f.check_finite();
  const Eigen::MatrixXcd M = f.values * std::sqrt(f.cell());
  SpectralDensity d;
  d.axis = f.s_axis;
  d.rho = M * M.adjoint();
  return d;
}

/// p_H(tau) = 1/2 - 1/2 sum rho(ws, ws') rho(ws', ws) e^{i (ws' - ws) tau}.
inline HomTrace inter_pair_trace(const SpectralDensity& d, const std::vector<double>& delays) {
  d.validate();
  const Eigen::MatrixXcd W = d.rho.cwiseProduct(d.rho.transpose());
  const auto S = detail::phase_weighted_sums(W, d.axis, delays);
  HomTrace tr;
  tr.kind = TraceKind::InterHeralded;
  tr.delays = delays;
  tr.probability.resize(delays.size());
  for (std::size_t t = 0; t < delays.size(); ++t) tr.probability[t] = detail::clamp_overshoot(0.5 - 0.5 * S[t].real());
  return tr;
}

// --- spectral analysis of traces -----------------------------------------------------

/// Angular frequency (rad/ps) of the strongest oscillation in a uniformly
/// sampled trace, ignoring the low-frequency lobe of the envelope. The DFT is
/// evaluated on a grid `oversample` times finer than the natural bins.
inline double dominant_beat_frequency(const std::vector<double>& delays, const std::vector<double>& values,
                                      int oversample = 1) {
  detail::require(delays.size() == values.size() && delays.size() >= 8, "dominant_beat_frequency: need >= 8 samples");
  detail::require(oversample >= 1, "dominant_beat_frequency: oversample must be >= 1");
  const std::size_t n = delays.size();
  const double dt = (delays.back() - delays.front()) / static_cast<double>(n - 1);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  const double dw = kTwoPi / (static_cast<double>(n) * dt * oversample);
  const auto n_w = static_cast<std::size_t>(oversample) * (n / 2) + 1;
  std::vector<double> mag(n_w);
  for (std::size_t k = 0; k < n_w; ++k) {
    cplx acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) acc += (values[t] - mean) * std::polar(1.0, -dw * static_cast<double>(k * t) * dt);
    mag[k] = std::abs(acc);
  }
  std::size_t k0 = 1;
  while (k0 + 1 < n_w && mag[k0 + 1] <= mag[k0]) ++k0;  // leave the DC lobe
  std::size_t best = k0;
  for (std::size_t k = k0; k < n_w; ++k)
    if (mag[k] > mag[best]) best = k;
  return dw * static_cast<double>(best);
}

// --- fitting -------------------------------------------------------------------------------

enum class FitModel { IntraPi, IntraZero, Inter };

inline const char* to_string(FitModel m) {
  switch (m) {
    case FitModel::IntraPi: return "intra-pi";
    case FitModel::IntraZero: return "intra-0";
    case FitModel::Inter: return "inter";
  }
  return "?";
}

/// Model value: baseline * p(tau) / (1/2), so `baseline` is the level far from zero delay.
inline double hom_model(FitModel m, double tau, double sigma, double delta, double V, double baseline) {
  double p = 0.0;
  switch (m) {
    case FitModel::IntraPi: p = intra_fit_model(tau, sigma, delta, V, PmfPhase::Pi); break;
    case FitModel::IntraZero: p = intra_fit_model(tau, sigma, delta, V, PmfPhase::Zero); break;
    case FitModel::Inter: p = inter_fit_model(tau, sigma, delta, V); break;
  }
  return 2.0 * baseline * p;
}

struct FitGuess {
  double sigma = 1.0;
  double delta = 5.0;
  double V = 0.9;
  double baseline = 0.0;  ///< <= 0: estimated from the outer delays
};

struct FitOutcome {
  double sigma = 0.0;
  double delta = 0.0;
  double V = 0.0;
  double baseline = 0.0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();  ///< order (sigma, delta, V, baseline)
  double residual_norm = 0.0;  ///< sqrt of the weighted sum of squared residuals
  int iterations = 0;
  FitModel model = FitModel::IntraPi;

  double stderr_sigma() const { return std::sqrt(covariance(0, 0)); }
  double stderr_delta() const { return std::sqrt(covariance(1, 1)); }
  double stderr_V() const { return std::sqrt(covariance(2, 2)); }
  double stderr_baseline() const { return std::sqrt(covariance(3, 3)); }
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, FitOutcome best) : std::runtime_error(what), best_(std::move(best)) {}
  const FitOutcome& best_so_far() const { return best_; }

 private:
  FitOutcome best_;
};

/// Weighted least squares over (sigma, delta, V, baseline). Count data use
/// Poisson weights 1 / max(c, 1); probability data are unit weighted and the
/// covariance is scaled by the reduced chi^2.
inline FitOutcome fit_trace(const HomTrace& data, FitModel model, const FitGuess& guess, int max_iter = 500) {
  const std::size_t n = data.delays.size();
  const auto& y = data.has_counts() ? data.counts : data.probability;
  detail::require(y.size() == n, "fit_trace: data length does not match the delays");
  detail::require(n >= 10, "fit_trace: need at least 10 data points");
  detail::require(guess.sigma > 0.0 && guess.delta > 0.0, "fit_trace: initial sigma and delta must be positive");
  const double span = data.delays.back() - data.delays.front();
  const double period = (model == FitModel::Inter ? kPi : kTwoPi) / guess.delta;
  detail::require(span >= period, detail::concat("fit_trace: delays span ", span, " ps, less than one beating period (",
                                                 period, " ps)"));

  std::vector<double> w(n, 1.0);
  if (data.has_counts())
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::max(y[i], 1.0);

  Eigen::Vector4d p{guess.sigma, guess.delta, std::clamp(guess.V, 0.0, 1.0), guess.baseline};
  if (!(p(3) > 0.0)) {
    // mean of the outer fifth of the delays
    double acc = 0.0;
    int cnt = 0;
    const double lim = 0.6 * std::max(std::abs(data.delays.front()), std::abs(data.delays.back()));
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(data.delays[i]) >= lim) acc += y[i], ++cnt;
    p(3) = cnt > 0 && acc > 0.0 ? acc / cnt : 0.5;
  }

  auto project = [](Eigen::Vector4d q) {
    q(0) = std::max(q(0), 1e-9);
    q(1) = std::max(q(1), 1e-9);
    q(2) = std::clamp(q(2), 0.0, 1.0);
    q(3) = std::max(q(3), 1e-12);
    return q;
  };
  auto residuals = [&](const Eigen::Vector4d& q, Eigen::VectorXd& r) {
    r.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      r(i) = std::sqrt(w[i]) * (y[i] - hom_model(model, data.delays[i], q(0), q(1), q(2), q(3)));
    return r.squaredNorm();
  };
  auto jacobian = [&](const Eigen::Vector4d& q, Eigen::MatrixXd& J) {
    J.resize(static_cast<Eigen::Index>(n), 4);
    for (int k = 0; k < 4; ++k) {
      const double h = 1e-7 * std::max(std::abs(q(k)), 1e-3);
      Eigen::Vector4d qp = q, qm = q;
      qp(k) += h;
      qm(k) -= h;
      for (std::size_t i = 0; i < n; ++i) {
        const double fp = hom_model(model, data.delays[i], qp(0), qp(1), qp(2), qp(3));
        const double fm = hom_model(model, data.delays[i], qm(0), qm(1), qm(2), qm(3));
        J(i, k) = std::sqrt(w[i]) * (fp - fm) / (2.0 * h);
      }
    }
  };

  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  double chi2 = residuals(p, r);
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  FitOutcome out;
  out.model = model;
  for (; it < max_iter && !converged; ++it) {
    jacobian(p, J);
    const Eigen::Matrix4d JtJ = J.transpose() * J;
    const Eigen::Vector4d g = J.transpose() * r;
    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix4d A = JtJ;
      for (int k = 0; k < 4; ++k) A(k, k) += lambda * std::max(JtJ(k, k), 1e-30);
      const Eigen::Vector4d step = A.ldlt().solve(g);
      const Eigen::Vector4d trial = project(p + step);
      Eigen::VectorXd rt;
      const double chi2_t = residuals(trial, rt);
      if (chi2_t <= chi2) {
        const double rel_step = (trial - p).cwiseAbs().cwiseQuotient(p.cwiseAbs().cwiseMax(1e-12)).maxCoeff();
        const double drop = chi2 - chi2_t;
        p = trial;
        r = rt;
        chi2 = chi2_t;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (rel_step < 1e-12 || drop <= 1e-14 * chi2 || chi2 == 0.0) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // no downhill direction left: local minimum within the bounds
          converged = true;
          break;
        }
      }
    }
  }

  out.sigma = p(0);
  out.delta = p(1);
  out.V = p(2);
  out.baseline = p(3);
  out.residual_norm = std::sqrt(chi2);
  out.iterations = it;
  jacobian(p, J);
  const Eigen::Matrix4d JtJ = J.transpose() * J;
  Eigen::Matrix4d cov = JtJ.completeOrthogonalDecomposition().pseudoInverse();
  if (!data.has_counts() && n > 4) cov *= chi2 / static_cast<double>(n - 4);
  out.covariance = cov;
  if (!converged) throw FitError(detail::concat("fit_trace did not converge after ", max_iter, " iterations"), out);
  return out;
}

}  // namespace biphoton
