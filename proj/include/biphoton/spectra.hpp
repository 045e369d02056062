#pragma once

// Frequency grids, multi-Gaussian pump envelopes and the pixelated
// pulse-shaper model.
//
// All frequencies are angular frequencies in rad/ps.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include "biphoton/core.hpp"

namespace biphoton {

/// Uniformly spaced angular-frequency grid.
class SpectralAxis {
 public:
  SpectralAxis() = default;

  static SpectralAxis uniform(double first, double step, std::size_t n) {
    detail::require(n >= 2, "SpectralAxis needs at least 2 points");
    detail::require(step > 0.0 && std::isfinite(step), "SpectralAxis spacing must be positive");
    SpectralAxis ax;
    ax.values_.resize(n);
    for (std::size_t i = 0; i < n; ++i) ax.values_[i] = first + step * static_cast<double>(i);
    ax.step_ = step;
    return ax;
  }

  static SpectralAxis centered(double center, double half_span, std::size_t n) {
    detail::require(half_span > 0.0, "SpectralAxis half span must be positive");
    detail::require(n >= 2, "SpectralAxis needs at least 2 points");
    return uniform(center - half_span, 2.0 * half_span / static_cast<double>(n - 1), n);
  }

  /// Adopts explicit values; they must be uniformly spaced to 1e-12 relative.
  static SpectralAxis from_values(std::vector<double> values) {
    detail::require(values.size() >= 2, "SpectralAxis needs at least 2 points");
    const double step = (values.back() - values.front()) / static_cast<double>(values.size() - 1);
    detail::require(step > 0.0, "SpectralAxis values must be increasing");
    for (std::size_t i = 1; i < values.size(); ++i) {
      const double d = values[i] - values[i - 1];
      // Relative 1e-12 of the spacing plus the rounding of the stored values.
      const double slack = 1e-12 * step + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(values[i]);
      if (std::abs(d - step) > slack)
        throw ValidationError(detail::concat("SpectralAxis spacing not uniform at index ", i));
    }
    SpectralAxis ax;
    ax.values_ = std::move(values);
    ax.step_ = step;
    return ax;
  }

  std::size_t size() const { return values_.size(); }
  double step() const { return step_; }
  double front() const { return values_.front(); }
  double back() const { return values_.back(); }
  double center() const { return 0.5 * (values_.front() + values_.back()); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

  bool contains(double w) const { return w >= front() && w <= back(); }
  std::size_t nearest_index(double w) const {
    const double x = std::round((w - front()) / step_);
    return static_cast<std::size_t>(std::clamp(x, 0.0, static_cast<double>(size() - 1)));
  }

  friend bool operator==(const SpectralAxis& a, const SpectralAxis& b) { return a.values_ == b.values_; }

 private:
  std::vector<double> values_;
  double step_ = 0.0;
};

/// One term of a multi-Gaussian envelope: weight * e^{i phase} * exp(-(w-center)^2 / (2 sigma^2)).
struct GaussianComponent {
  double center = 0.0;
  double sigma = 1.0;
  double weight = 1.0;
  double phase = 0.0;
};

/// Pump envelope function over the sum frequency ws + wi, normalized to unit
/// peak magnitude on its grid. `at()` evaluates the same normalized function
/// anywhere, so JSA assembly depends on (ws + wi) only.
struct PumpEnvelope {
  SpectralAxis axis;
  std::vector<cplx> amplitude;
  std::vector<GaussianComponent> params;
  double peak = 1.0;  ///< unnormalized maximum on the grid

  static cplx raw(const std::vector<GaussianComponent>& comps, double w) {
    cplx acc{0.0, 0.0};
    for (const auto& c : comps) {
      const double x = (w - c.center) / c.sigma;
      acc += c.weight * std::polar(1.0, c.phase) * std::exp(-0.5 * x * x);
    }
    return acc;
  }

  cplx at(double sum_frequency) const { return raw(params, sum_frequency) / peak; }
};

/// Samples the multi-Gaussian pump envelope on `axis`. The axis must cover
/// every component's center +/- 5 sigma.
inline PumpEnvelope multi_gaussian_pef(const SpectralAxis& axis, const std::vector<GaussianComponent>& components) {
  detail::require(!components.empty(), "multi_gaussian_pef needs at least one component");
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto& c = components[k];
    if (!(c.sigma > 0.0)) throw DomainError(detail::concat("pump component ", k, ": sigma must be positive"));
    if (c.center - 5.0 * c.sigma < axis.front() || c.center + 5.0 * c.sigma > axis.back())
      throw DomainError(detail::concat("pump component ", k, " (center ", c.center, ", sigma ", c.sigma,
                                       ") is clipped by the axis [", axis.front(), ", ", axis.back(), "]"));
  }
  PumpEnvelope pef;
  pef.axis = axis;
  pef.params = components;
  pef.amplitude.resize(axis.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < axis.size(); ++i) {
    pef.amplitude[i] = PumpEnvelope::raw(components, axis[i]);
    peak = std::max(peak, std::abs(pef.amplitude[i]));
  }
  if (!(peak > 0.0)) throw DomainError("pump envelope vanishes on the whole axis");
  pef.peak = peak;
  for (auto& a : pef.amplitude) a /= peak;
  return pef;
}

// --- pulse shaper ----------------------------------------------------------

/// Liquid-crystal pixel array in the Fourier plane of a 4f shaper followed by
/// a polariser. Frequencies outside [pixel_edges.front(), pixel_edges.back())
/// miss the modulator and pass unchanged.
struct ShaperConfig {
  SpectralAxis frequencies;           ///< grid of the input/target spectra
  std::vector<double> input_spectrum;  ///< intensity per frequency
  std::vector<double> pixel_edges;     ///< n_pixels + 1 increasing boundaries
  std::vector<double> pixel_angles;    ///< rotation per pixel, rad in [0, pi/2]

  std::size_t n_pixels() const { return pixel_angles.size(); }

  void validate() const {
    detail::require(!pixel_angles.empty(), "shaper needs at least one pixel");
    detail::require(pixel_edges.size() == pixel_angles.size() + 1, "shaper: pixel_edges must have n_pixels + 1 entries");
    for (std::size_t i = 1; i < pixel_edges.size(); ++i)
      detail::require(pixel_edges[i] > pixel_edges[i - 1], "shaper: pixel_edges must be strictly increasing");
    for (double a : pixel_angles)
      detail::require(a >= 0.0 && a <= kPi / 2.0, "shaper: pixel angles must lie in [0, pi/2]");
    detail::require(input_spectrum.size() == frequencies.size(), "shaper: input spectrum does not match the frequency grid");
    for (double v : input_spectrum) detail::require(v >= 0.0 && std::isfinite(v), "shaper: input spectrum must be non-negative");
  }

  /// Pixel index covering frequency w, or npos when w misses the array.
  std::size_t pixel_of(double w) const {
    if (w < pixel_edges.front() || w >= pixel_edges.back()) return npos;
    const auto it = std::upper_bound(pixel_edges.begin(), pixel_edges.end(), w);
    return static_cast<std::size_t>(it - pixel_edges.begin()) - 1;
  }

  /// Equal-width pixels spanning [lo, hi), all angles zero.
  static ShaperConfig uniform(SpectralAxis freqs, std::vector<double> input, double lo, double hi,
                              std::size_t n_pixels = 128) {
    ShaperConfig cfg;
    cfg.frequencies = std::move(freqs);
    cfg.input_spectrum = std::move(input);
    cfg.pixel_edges = linspace(lo, hi, n_pixels + 1);
    cfg.pixel_angles.assign(n_pixels, 0.0);
    cfg.validate();
    return cfg;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Amplitude transmission |cos(2 theta)| of the pixel under each frequency.
inline std::vector<double> shaper_transmission(const ShaperConfig& cfg) {
  cfg.validate();
  std::vector<double> t(cfg.frequencies.size(), 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::size_t p = cfg.pixel_of(cfg.frequencies[i]);
    if (p != ShaperConfig::npos) t[i] = std::abs(std::cos(2.0 * cfg.pixel_angles[p]));
  }
  return t;
}

/// Output intensity: input * t^2.
inline std::vector<double> shaped_spectrum(const ShaperConfig& cfg) {
  auto t = shaper_transmission(cfg);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = cfg.input_spectrum[i] * t[i] * t[i];
  return t;
}

struct ShaperResult {
  ShaperConfig config;
  double residual = 0.0;                ///< RMS(shaped - target) / max(target)
  std::vector<double> residual_history;  ///< one entry per pass, starting with the initial config
  int iterations = 0;
  bool converged = false;
  bool infeasible = false;  ///< target exceeds the input somewhere (would need gain)
};

inline double shaper_residual(const ShaperConfig& cfg, const std::vector<double>& target) {
  const auto out = shaped_spectrum(cfg);
  double acc = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    acc += detail::sqr(out[i] - target[i]);
    peak = std::max(peak, target[i]);
  }
  const double rms = std::sqrt(acc / static_cast<double>(out.size()));
  return peak > 0.0 ? rms / peak : rms;
}

/// Closed-loop pixel optimisation. Each pass sets every pixel to its exact
/// least-squares transmission (pixels do not interact in the L2 objective);
/// passes repeat until the residual changes by less than `tol`.
inline ShaperResult optimize_shaper(const std::vector<double>& target, const ShaperConfig& cfg, int max_iter = 50,
                                    double tol = 1e-9) {
  cfg.validate();
  detail::require(target.size() == cfg.frequencies.size(), "optimize_shaper: target does not match the frequency grid");
  for (double v : target) detail::require(v >= 0.0 && std::isfinite(v), "optimize_shaper: target must be non-negative");
  detail::require(max_iter >= 1, "optimize_shaper: max_iter must be >= 1");

  ShaperResult res;
  res.config = cfg;
  const double in_peak = *std::max_element(cfg.input_spectrum.begin(), cfg.input_spectrum.end());
  for (std::size_t i = 0; i < target.size(); ++i)
    if (target[i] > cfg.input_spectrum[i] + 1e-9 * in_peak) res.infeasible = true;

  // Per-pixel sums for T* = sum(in*tg) / sum(in^2).
  const std::size_t np = cfg.n_pixels();
  std::vector<double> s_it(np, 0.0), s_ii(np, 0.0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const std::size_t p = cfg.pixel_of(cfg.frequencies[i]);
    if (p == ShaperConfig::npos) continue;
    s_it[p] += cfg.input_spectrum[i] * target[i];
    s_ii[p] += cfg.input_spectrum[i] * cfg.input_spectrum[i];
  }

  res.residual = shaper_residual(res.config, target);
  res.residual_history.push_back(res.residual);
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t p = 0; p < np; ++p) {
      if (s_ii[p] <= 0.0) continue;
      const double cur = detail::sqr(std::cos(2.0 * res.config.pixel_angles[p]));
      const double best = std::clamp(s_it[p] / s_ii[p], 0.0, 1.0);
      // Exact coordinate minimum; only move when it strictly helps.
      const double cost_cur = s_ii[p] * cur * cur - 2.0 * s_it[p] * cur;
      const double cost_best = s_ii[p] * best * best - 2.0 * s_it[p] * best;
      if (cost_best < cost_cur) res.config.pixel_angles[p] = 0.5 * std::acos(std::sqrt(best));
    }
    const double r = shaper_residual(res.config, target);
    res.iterations = it + 1;
    const double change = res.residual - r;
    res.residual = r;
    res.residual_history.push_back(r);
    if (std::abs(change) < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace biphoton
