#pragma once

// Joint spectral amplitudes: PEF x PMF assembly, Schmidt decomposition,
// phase masks for measured intensities, low-rank denoising and marginals.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "biphoton/core.hpp"
#include "biphoton/spectra.hpp"

namespace biphoton {

/// f(ws, wi) on a signal x idler grid; rows are signal, columns idler.
/// Normalized so that sum |f|^2 dws dwi = 1.
struct JointSpectralAmplitude {
  SpectralAxis s_axis;
  SpectralAxis i_axis;
  Eigen::MatrixXcd values;
  std::map<std::string, std::string> metadata;

  double cell() const { return s_axis.step() * i_axis.step(); }
  bool square() const { return s_axis == i_axis; }
  double norm2() const { return values.squaredNorm() * cell(); }

  void check_shape() const {
    detail::require(values.rows() == static_cast<Eigen::Index>(s_axis.size()) &&
                        values.cols() == static_cast<Eigen::Index>(i_axis.size()),
                    "JSA matrix does not match its axes");
  }
  void check_finite() const {
    if (!values.allFinite()) throw ValidationError("JSA contains non-finite entries");
  }

  void normalize() {
    const double n = norm2();
    if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateStateError("JSA has zero norm");
    values /= std::sqrt(n);
  }

  /// |f|^2 dws dwi: probability per grid cell (sums to 1).
  Eigen::MatrixXd cell_probabilities() const { return values.cwiseAbs2() * cell(); }
};

/// Joint spectral intensity as probability per grid cell (unit sum).
struct JointSpectralIntensity {
  SpectralAxis s_axis;
  SpectralAxis i_axis;
  Eigen::MatrixXd values;

  static JointSpectralIntensity of(const JointSpectralAmplitude& f) { return {f.s_axis, f.i_axis, f.cell_probabilities()}; }

  void validate() const {
    detail::require(values.rows() == static_cast<Eigen::Index>(s_axis.size()) &&
                        values.cols() == static_cast<Eigen::Index>(i_axis.size()),
                    "JSI matrix does not match its axes");
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      for (Eigen::Index i = 0; i < values.rows(); ++i) {
        const double v = values(i, j);
        if (!std::isfinite(v)) throw ValidationError("JSI contains non-finite entries");
        if (v < 0.0) throw ValidationError(detail::concat("JSI entry (", i, ", ", j, ") is negative: ", v));
      }
  }
};

enum class PmfPhase { Pi, Zero };

inline const char* to_string(PmfPhase p) { return p == PmfPhase::Pi ? "pi" : "zero"; }

/// Double-Gaussian PMF in the difference frequency:
/// exp(-(D - delta)^2 / 2 sigma^2) -/+ exp(-(D + delta)^2 / 2 sigma^2), D = ws - wi,
/// minus sign for the pi design, plus for the zero design.
inline Eigen::MatrixXcd double_gaussian_pmf(const SpectralAxis& s_axis, const SpectralAxis& i_axis, double sigma,
                                            double delta, PmfPhase phase) {
  detail::require(sigma > 0.0 && delta > 0.0, "double_gaussian_pmf: sigma and delta must be positive");
  const double sgn = phase == PmfPhase::Pi ? -1.0 : 1.0;
  Eigen::MatrixXcd out(s_axis.size(), i_axis.size());
  for (std::size_t b = 0; b < i_axis.size(); ++b)
    for (std::size_t a = 0; a < s_axis.size(); ++a) {
      const double d = s_axis[a] - i_axis[b];
      out(a, b) = std::exp(-0.5 * detail::sqr((d - delta) / sigma)) + sgn * std::exp(-0.5 * detail::sqr((d + delta) / sigma));
    }
  return out;
}

/// Sum-frequency axis spanning every ws + wi of the grid.
inline SpectralAxis sum_axis(const SpectralAxis& s_axis, const SpectralAxis& i_axis, std::size_t n = 0) {
  if (n == 0) n = s_axis.size() + i_axis.size() - 1;
  return SpectralAxis::centered(0.5 * (s_axis.front() + i_axis.front() + s_axis.back() + i_axis.back()),
                                0.5 * (s_axis.back() + i_axis.back() - s_axis.front() - i_axis.front()), n);
}

/// Pointwise PEF(ws + wi) * PMF(ws, wi), unit-normalized. PMFs are scaled to
/// unit peak first so only relative spectra matter.
inline JointSpectralAmplitude assemble_jsa(const PumpEnvelope& pef, const Eigen::MatrixXcd& pmf,
                                           const SpectralAxis& s_axis, const SpectralAxis& i_axis) {
  detail::require(pmf.rows() == static_cast<Eigen::Index>(s_axis.size()) &&
                      pmf.cols() == static_cast<Eigen::Index>(i_axis.size()),
                  "assemble_jsa: PMF grid does not match the signal/idler axes");
  if (!pmf.allFinite()) throw ValidationError("assemble_jsa: PMF contains non-finite entries");
  const double pmf_peak = pmf.cwiseAbs().maxCoeff();
  if (!(pmf_peak > 0.0)) throw DegenerateStateError("assemble_jsa: PMF vanishes on the grid");

  JointSpectralAmplitude f;
  f.s_axis = s_axis;
  f.i_axis = i_axis;
  f.values.resize(pmf.rows(), pmf.cols());
  parallel_for(i_axis.size(), [&](std::size_t b) {
    for (std::size_t a = 0; a < s_axis.size(); ++a)
      f.values(a, b) = pef.at(s_axis[a] + i_axis[b]) * (pmf(a, b) / pmf_peak);
  });
  if (!(f.values.squaredNorm() > 0.0))
    throw DegenerateStateError("assemble_jsa: pump and phase-matching supports do not overlap (all-zero JSA)");
  f.normalize();
  for (std::size_t k = 0; k < pef.params.size(); ++k) {
    const auto& c = pef.params[k];
    f.metadata["pump_" + std::to_string(k)] =
        detail::concat("center=", c.center, " sigma=", c.sigma, " weight=", c.weight, " phase=", c.phase);
  }
  return f;
}

// --- Gaussian-model designs -----------------------------------------------------

enum class PumpShape { FourBin, DoubleHalf, TripleHalf };

inline const char* to_string(PumpShape p) {
  switch (p) {
    case PumpShape::FourBin: return "four-bin";
    case PumpShape::DoubleHalf: return "double-half";
    case PumpShape::TripleHalf: return "triple-half";
  }
  return "?";
}

/// Two-photon frequency-bin design: pump Gaussians of width sigma around
/// 2 w0, PMF lobes at ws - wi = +/- delta.
struct GaussianModel {
  double omega0 = wavelength_to_omega(1582.0);  ///< degenerate single-photon frequency
  double sigma = 0.8;
  double delta = 6.4;
  PmfPhase phase = PmfPhase::Pi;
  PumpShape pump = PumpShape::FourBin;
  std::size_t n_points = 512;

  void validate() const {
    detail::require(sigma > 0.0, "sigma_rad_per_ps must be positive");
    detail::require(delta > 0.0, "delta_rad_per_ps must be positive");
    detail::require(n_points >= 16, "grid_points must be at least 16");
  }

  /// Sum-frequency offsets of the pump components.
  std::vector<double> pump_offsets() const {
    switch (pump) {
      case PumpShape::FourBin: return {-delta, delta};
      case PumpShape::DoubleHalf: return {-0.5 * delta, 0.5 * delta};
      case PumpShape::TripleHalf: return {-delta, 0.0, delta};
    }
    return {};
  }

  std::vector<GaussianComponent> pump_components() const {
    std::vector<GaussianComponent> c;
    for (double off : pump_offsets()) c.push_back({2.0 * omega0 + off, sigma, 1.0, 0.0});
    return c;
  }

  /// Single-photon axis: all bins (offsets within +/- delta) plus 6 sigma.
  SpectralAxis axis() const { return SpectralAxis::centered(omega0, delta + 6.0 * sigma, n_points); }
};

inline JointSpectralAmplitude gaussian_model_jsa(const GaussianModel& m) {
  m.validate();
  const auto ax = m.axis();
  const auto pef = multi_gaussian_pef(sum_axis(ax, ax), m.pump_components());
  auto f = assemble_jsa(pef, double_gaussian_pmf(ax, ax, m.sigma, m.delta, m.phase), ax, ax);
  f.metadata["model"] = to_string(m.pump);
  f.metadata["pmf_phase"] = to_string(m.phase);
  f.metadata["sigma_rad_per_ps"] = detail::concat(m.sigma);
  f.metadata["delta_rad_per_ps"] = detail::concat(m.delta);
  return f;
}

/// Pump of `m` on its own axis combined with an externally computed PMF grid
/// (e.g. a dispersive crystal from crystal_pmf_grid / target_pmf_grid).
inline JointSpectralAmplitude model_pump_jsa(const GaussianModel& m, const Eigen::MatrixXcd& pmf) {
  m.validate();
  const auto ax = m.axis();
  auto f = assemble_jsa(multi_gaussian_pef(sum_axis(ax, ax), m.pump_components()), pmf, ax, ax);
  f.metadata["model"] = to_string(m.pump);
  f.metadata["pmf"] = "external";
  return f;
}

// --- Schmidt decomposition -------------------------------------------------------

struct SchmidtResult {
  std::vector<double> singular_values;  ///< of f * sqrt(dws dwi), descending
  std::vector<double> lambda;           ///< normalized Schmidt weights
  double K = 1.0;
  double purity = 1.0;
  Eigen::MatrixXcd signal_modes;  ///< columns orthonormal under sum |u|^2 dws = 1
  Eigen::MatrixXcd idler_modes;

  std::size_t rank(double threshold = 1e-12) const {
    return static_cast<std::size_t>(std::count_if(lambda.begin(), lambda.end(), [&](double l) { return l > threshold; }));
  }
};

namespace detail {

inline SchmidtResult schmidt_of_matrix(const Eigen::MatrixXcd& m, double ds, double di, std::size_t n_modes) {
  if (!m.allFinite()) throw ValidationError("Schmidt decomposition: matrix has non-finite entries");
  const double total = m.squaredNorm();
  if (!(total > 0.0)) throw DegenerateStateError("Schmidt decomposition of an all-zero matrix");
  SchmidtResult r;
  const unsigned opts = n_modes > 0 ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : 0u;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, opts);
  const auto& s = svd.singularValues();
  double sum2 = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) sum2 += s(k) * s(k);
  r.singular_values.assign(s.data(), s.data() + s.size());
  r.lambda.resize(s.size());
  double p = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    r.lambda[k] = s(k) * s(k) / sum2;
    p += r.lambda[k] * r.lambda[k];
  }
  r.purity = p;
  r.K = 1.0 / p;
  if (n_modes > 0) {
    const Eigen::Index n = std::min<Eigen::Index>(static_cast<Eigen::Index>(n_modes), s.size());
    r.signal_modes = svd.matrixU().leftCols(n) / std::sqrt(ds);
    r.idler_modes = svd.matrixV().leftCols(n).conjugate() / std::sqrt(di);
  }
  return r;
}

}  // namespace detail

/// SVD of the grid-weighted amplitude f * sqrt(dws dwi). `n_modes` leading
/// mode functions are returned (0 skips the singular vectors).
inline SchmidtResult schmidt_decompose(const JointSpectralAmplitude& f, std::size_t n_modes = 0) {
  f.check_shape();
  f.check_finite();
  return detail::schmidt_of_matrix(f.values * std::sqrt(f.cell()), f.s_axis.step(), f.i_axis.step(), n_modes);
}

/// Schmidt analysis of a measured intensity through its square root.
inline SchmidtResult schmidt_of_intensity(const JointSpectralIntensity& jsi, std::size_t n_modes = 0) {
  jsi.validate();
  return detail::schmidt_of_matrix(jsi.values.cwiseSqrt().cast<cplx>(), jsi.s_axis.step(), jsi.i_axis.step(), n_modes);
}

// --- phase masks -----------------------------------------------------------------------

struct PhaseMask {
  enum class Kind { PiAboveDiagonal, Zero, Custom };
  Kind kind = Kind::Zero;
  Eigen::MatrixXd theta;  ///< used by Custom

  static PhaseMask pi_above_diagonal() { return {Kind::PiAboveDiagonal, {}}; }
  static PhaseMask zero() { return {Kind::Zero, {}}; }
  static PhaseMask custom(Eigen::MatrixXd theta) { return {Kind::Custom, std::move(theta)}; }
};

/// f = e^{i theta} sqrt(JSI), normalized. The pi-above-diagonal mask puts
/// theta = pi where ws > wi, the sign structure of the pi PMF design.
inline JointSpectralAmplitude jsa_from_jsi(const JointSpectralIntensity& jsi, const PhaseMask& mask) {
  jsi.validate();
  if (mask.kind == PhaseMask::Kind::Custom)
    detail::require(mask.theta.rows() == jsi.values.rows() && mask.theta.cols() == jsi.values.cols(),
                    "custom phase mask does not match the JSI shape");
  JointSpectralAmplitude f;
  f.s_axis = jsi.s_axis;
  f.i_axis = jsi.i_axis;
  f.values.resize(jsi.values.rows(), jsi.values.cols());
  for (Eigen::Index b = 0; b < jsi.values.cols(); ++b)
    for (Eigen::Index a = 0; a < jsi.values.rows(); ++a) {
      const double amp = std::sqrt(jsi.values(a, b));
      double theta = 0.0;
      if (mask.kind == PhaseMask::Kind::PiAboveDiagonal)
        theta = jsi.s_axis[a] > jsi.i_axis[b] ? kPi : 0.0;
      else if (mask.kind == PhaseMask::Kind::Custom)
        theta = mask.theta(a, b);
      if (theta == 0.0)
        f.values(a, b) = amp;
      else if (theta == kPi)
        f.values(a, b) = -amp;
      else
        f.values(a, b) = std::polar(amp, theta);
    }
  f.normalize();
  f.metadata["phase_mask"] = mask.kind == PhaseMask::Kind::PiAboveDiagonal ? "pi-above-diagonal"
                             : mask.kind == PhaseMask::Kind::Zero          ? "zero"
                                                                           : "custom";
  return f;
}

// --- denoising -----------------------------------------------------------------------------

struct DenoiseResult {
  JointSpectralIntensity jsi;
  std::size_t rank_used = 0;
  bool rank_capped = false;  ///< requested rank exceeded the matrix dimension
};

/// Keeps the leading `rank` singular triplets of sqrt(JSI), clips negative
/// amplitudes, squares and renormalizes to unit sum.
inline DenoiseResult denoise_lowrank(const JointSpectralIntensity& jsi, std::size_t rank = 4) {
  jsi.validate();
  detail::require(rank >= 1, "denoise_lowrank: rank must be >= 1");
  DenoiseResult out;
  const auto dim = static_cast<std::size_t>(std::min(jsi.values.rows(), jsi.values.cols()));
  out.rank_used = std::min(rank, dim);
  out.rank_capped = rank > dim;
  const Eigen::MatrixXd amp = jsi.values.cwiseSqrt();
  if (!(amp.squaredNorm() > 0.0)) throw DegenerateStateError("denoise_lowrank: JSI is all zero");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(amp, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto r = static_cast<Eigen::Index>(out.rank_used);
  Eigen::MatrixXd low = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() *
                        svd.matrixV().leftCols(r).transpose();
  low = low.cwiseMax(0.0);
  Eigen::MatrixXd inten = low.cwiseAbs2();
  const double total = inten.sum();
  if (!(total > 0.0)) throw DegenerateStateError("denoise_lowrank: reconstruction is all zero");
  out.jsi = {jsi.s_axis, jsi.i_axis, inten / total};
  return out;
}

// --- marginals ------------------------------------------------------------------------------

struct Marginals {
  std::vector<double> signal;  ///< probability per signal bin, sums to 1
  std::vector<double> idler;
};

inline Marginals marginals(const JointSpectralAmplitude& f) {
  f.check_shape();
  const Eigen::MatrixXd p = f.cell_probabilities();
  const double total = p.sum();
  if (!(total > 0.0)) throw DegenerateStateError("marginals of a zero JSA");
  Marginals m;
  m.signal.resize(p.rows());
  m.idler.resize(p.cols());
  for (Eigen::Index a = 0; a < p.rows(); ++a) m.signal[a] = p.row(a).sum() / total;
  for (Eigen::Index b = 0; b < p.cols(); ++b) m.idler[b] = p.col(b).sum() / total;
  return m;
}

}  // namespace biphoton
