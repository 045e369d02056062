#pragma once

// Time-of-flight spectrometry: dispersive wavelength-to-time mapping,
// Poissonian pair generation with detector jitter, JSI reconstruction from
// the coincidence histogram, trigger-window cropping and bin integration.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/core.hpp"
#include "biphoton/jsa.hpp"

namespace biphoton {

/// Combined detector jitter quoted as a FWHM, converted to a Gaussian sigma.
inline constexpr double kJitterFwhmPs = 37.0;
inline constexpr double kFwhmPerSigma = 2.355;
inline constexpr double kRepetitionPeriodPs = 1e6 / 76.0;

struct DispersionSpec {
  double D_ps_per_nm = -1350.0;
  double lambda_ref_nm = 1582.0;
  double jitter_sigma_ps = kJitterFwhmPs / kFwhmPerSigma;
  double bin_width_ps = 100.0;

  void validate() const {
    detail::require(std::abs(D_ps_per_nm) > 0.0 && std::isfinite(D_ps_per_nm), "dispersion D must be nonzero");
    detail::require(bin_width_ps > 0.0, "histogram bin width must be positive");
    detail::require(jitter_sigma_ps >= 0.0, "jitter sigma must be non-negative");
    detail::require(lambda_ref_nm > 0.0, "reference wavelength must be positive");
  }
};

/// t = D (lambda - lambda_ref); t(lambda_ref) = 0.
inline double wavelength_to_time(double lambda_nm, const DispersionSpec& spec) {
  return spec.D_ps_per_nm * (lambda_nm - spec.lambda_ref_nm);
}

inline double time_to_wavelength(double t_ps, const DispersionSpec& spec) {
  return spec.lambda_ref_nm + t_ps / spec.D_ps_per_nm;
}

inline double omega_to_time(double omega, const DispersionSpec& spec) {
  return wavelength_to_time(omega_to_wavelength(omega), spec);
}

/// Uniform histogram bins: bin i covers [start + i w, start + (i + 1) w).
struct TimeAxis {
  double start = 0.0;
  double width = 100.0;
  std::size_t n = 0;

  double center(std::size_t i) const { return start + (static_cast<double>(i) + 0.5) * width; }
  double end() const { return start + static_cast<double>(n) * width; }
  bool contains(double t) const { return t >= start && t < end(); }
  /// Bin index of t, or -1 outside.
  long long index_of(double t) const {
    if (!contains(t)) return -1;
    return std::min(static_cast<long long>(n) - 1, static_cast<long long>(std::floor((t - start) / width)));
  }
  bool operator==(const TimeAxis& o) const { return start == o.start && width == o.width && n == o.n; }

  /// Bins of width w centred on multiples of w, covering [lo, hi].
  static TimeAxis covering(double lo, double hi, double w) {
    TimeAxis ax;
    ax.width = w;
    ax.start = (std::floor(lo / w + 0.5) - 0.5) * w;
    ax.n = static_cast<std::size_t>(std::ceil((hi - ax.start) / w));
    if (ax.n == 0) ax.n = 1;
    return ax;
  }
};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct CoincidenceHistogram {
  TimeAxis t_s_axis;
  TimeAxis t_i_axis;
  CountMatrix counts;  ///< rows = signal time bins
  double integration_time_s = 1.0;
  std::uint64_t seed = 0;
  std::int64_t dropped = 0;  ///< jittered events that fell outside the axes

  std::int64_t total() const { return counts.sum(); }
  bool degenerate() const { return total() == 0; }

  void validate() const {
    detail::require(counts.rows() == static_cast<Eigen::Index>(t_s_axis.n) &&
                        counts.cols() == static_cast<Eigen::Index>(t_i_axis.n),
                    "histogram counts do not match the time axes");
    detail::require(t_s_axis.width > 0.0 && t_i_axis.width > 0.0, "histogram bin widths must be positive");
    detail::require((counts.array() >= 0).all(), "histogram counts must be non-negative");
  }
};

struct TofsOptions {
  std::optional<TimeAxis> signal_axis;  ///< default: covers the mapped JSI with margin
  std::optional<TimeAxis> idler_axis;
  bool dither = true;          ///< spread each pair uniformly over its JSI cell
  double ghost_fraction = 0.0;  ///< replicas displaced by +/- one repetition period
  double repetition_period_ps = kRepetitionPeriodPs;
  double integration_time_s = 1.0;
};

/// Draws Poisson(n_pairs * JSI_cell) pairs per cell, maps both photons through
/// the dispersion with Gaussian jitter and histograms their arrival times.
/// Each signal row uses its own RNG stream seeded from (seed, row).
inline CoincidenceHistogram simulate_tofs(const JointSpectralIntensity& jsi, const DispersionSpec& spec, double n_pairs,
                                          std::uint64_t seed, const TofsOptions& opts = {}) {
  jsi.validate();
  spec.validate();
  detail::require(n_pairs >= 1.0, "simulate_tofs: n_pairs must be >= 1");
  detail::require(opts.ghost_fraction >= 0.0, "simulate_tofs: ghost fraction must be non-negative");
  const double total = jsi.values.sum();
  if (!(total > 0.0)) throw DegenerateStateError("simulate_tofs: JSI is all zero");
  const Eigen::MatrixXd P = jsi.values / total;
  const auto ns = jsi.s_axis.size(), ni = jsi.i_axis.size();
  const double hs = 0.5 * jsi.s_axis.step(), hi = 0.5 * jsi.i_axis.step();

  std::vector<double> shifts{0.0};
  if (opts.ghost_fraction > 0.0) shifts = {0.0, -opts.repetition_period_ps, opts.repetition_period_ps};

  // deterministic time span of the occupied cells
  double s_lo = 1e300, s_hi = -1e300, i_lo = 1e300, i_hi = -1e300;
  for (std::size_t a = 0; a < ns; ++a)
    for (std::size_t b = 0; b < ni; ++b) {
      if (P(a, b) <= 0.0) continue;
      for (double dw : {-hs, hs}) {
        const double t = omega_to_time(jsi.s_axis[a] + dw, spec);
        s_lo = std::min(s_lo, t);
        s_hi = std::max(s_hi, t);
      }
      for (double dw : {-hi, hi}) {
        const double t = omega_to_time(jsi.i_axis[b] + dw, spec);
        i_lo = std::min(i_lo, t);
        i_hi = std::max(i_hi, t);
      }
    }
  const double sh_lo = *std::min_element(shifts.begin(), shifts.end());
  const double sh_hi = *std::max_element(shifts.begin(), shifts.end());
  const double margin = 6.0 * spec.jitter_sigma_ps + spec.bin_width_ps;

  CoincidenceHistogram h;
  h.seed = seed;
  h.integration_time_s = opts.integration_time_s;
  h.t_s_axis = opts.signal_axis ? *opts.signal_axis
                                : TimeAxis::covering(s_lo + sh_lo - margin, s_hi + sh_hi + margin, spec.bin_width_ps);
  h.t_i_axis = opts.idler_axis ? *opts.idler_axis
                               : TimeAxis::covering(i_lo + sh_lo - margin, i_hi + sh_hi + margin, spec.bin_width_ps);
  auto check = [](const TimeAxis& ax, double lo, double hi, const char* which) {
    if (lo < ax.start || hi > ax.end())
      throw DomainError(detail::concat(which, " arrival times [", lo, ", ", hi, "] ps overflow the histogram range [",
                                       ax.start, ", ", ax.end(), "] ps"));
  };
  check(h.t_s_axis, s_lo + sh_lo, s_hi + sh_hi, "signal");
  check(h.t_i_axis, i_lo + sh_lo, i_hi + sh_hi, "idler");

  struct Event {
    std::int32_t s, i;
  };
  std::vector<std::vector<Event>> rows(ns);
  std::vector<std::int64_t> dropped(ns, 0);
  parallel_for(ns, [&](std::size_t a) {
    std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(a)};
    std::mt19937_64 rng(ss);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    std::normal_distribution<double> jitter(0.0, 1.0);
    auto& ev = rows[a];
    for (std::size_t b = 0; b < ni; ++b) {
      if (P(a, b) <= 0.0) continue;
      for (std::size_t g = 0; g < shifts.size(); ++g) {
        const double mean = n_pairs * P(a, b) * (g == 0 ? 1.0 : opts.ghost_fraction);
        std::poisson_distribution<long long> pois(mean);
        const long long k = pois(rng);
        for (long long e = 0; e < k; ++e) {
          double ws = jsi.s_axis[a], wi = jsi.i_axis[b];
          if (opts.dither) {
            ws += 2.0 * hs * uni(rng);
            wi += 2.0 * hi * uni(rng);
          }
          double ts = omega_to_time(ws, spec) + shifts[g];
          double ti = omega_to_time(wi, spec) + shifts[g];
          if (spec.jitter_sigma_ps > 0.0) {
            ts += spec.jitter_sigma_ps * jitter(rng);
            ti += spec.jitter_sigma_ps * jitter(rng);
          }
          const long long js = h.t_s_axis.index_of(ts), ji = h.t_i_axis.index_of(ti);
          if (js < 0 || ji < 0) {
            ++dropped[a];
            continue;
          }
          ev.push_back({static_cast<std::int32_t>(js), static_cast<std::int32_t>(ji)});
        }
      }
    }
  });
  h.counts = CountMatrix::Zero(static_cast<Eigen::Index>(h.t_s_axis.n), static_cast<Eigen::Index>(h.t_i_axis.n));
  for (std::size_t a = 0; a < ns; ++a) {
    for (const auto& e : rows[a]) ++h.counts(e.s, e.i);
    h.dropped += dropped[a];
  }
  return h;
}

/// Histogram reinterpreted as a JSI over wavelength: bin centres mapped back
/// through the dispersion (step = bin width / |D|).
struct ReconstructedJsi {
  std::vector<double> signal_wavelength_nm;  ///< per histogram row
  std::vector<double> idler_wavelength_nm;   ///< per histogram column
  Eigen::MatrixXd values;                    ///< unit sum, or all zero when degenerate
  bool degenerate = false;

  /// The same matrix on frequency axes (increasing frequency), linearized
  /// about the centre of each wavelength range.
  JointSpectralIntensity as_intensity() const {
    auto axis_of = [](const std::vector<double>& lam, bool& reversed) {
      reversed = lam.front() < lam.back();  // increasing wavelength = decreasing frequency
      const double w_first = wavelength_to_omega(reversed ? lam.back() : lam.front());
      const double w_last = wavelength_to_omega(reversed ? lam.front() : lam.back());
      return SpectralAxis::centered(0.5 * (w_first + w_last), 0.5 * std::abs(w_last - w_first), lam.size());
    };
    bool rs = false, ri = false;
    JointSpectralIntensity out;
    out.s_axis = axis_of(signal_wavelength_nm, rs);
    out.i_axis = axis_of(idler_wavelength_nm, ri);
    out.values = values;
    if (rs) out.values = out.values.colwise().reverse().eval();
    if (ri) out.values = out.values.rowwise().reverse().eval();
    return out;
  }
};

inline ReconstructedJsi reconstruct_jsi(const CoincidenceHistogram& hist, const DispersionSpec& spec) {
  hist.validate();
  spec.validate();
  ReconstructedJsi r;
  for (std::size_t i = 0; i < hist.t_s_axis.n; ++i)
    r.signal_wavelength_nm.push_back(time_to_wavelength(hist.t_s_axis.center(i), spec));
  for (std::size_t j = 0; j < hist.t_i_axis.n; ++j)
    r.idler_wavelength_nm.push_back(time_to_wavelength(hist.t_i_axis.center(j), spec));
  r.values = hist.counts.cast<double>();
  const double total = r.values.sum();
  r.degenerate = !(total > 0.0);
  if (!r.degenerate) r.values /= total;
  return r;
}

struct TimeWindow {
  double ts_lo, ts_hi, ti_lo, ti_hi;

  bool contains(double ts, double ti) const { return ts >= ts_lo && ts <= ts_hi && ti >= ti_lo && ti <= ti_hi; }
};

/// Zeroes every bin whose centre lies outside the window.
inline CoincidenceHistogram crop_trigger_window(const CoincidenceHistogram& hist, const TimeWindow& w) {
  hist.validate();
  if (!(w.ts_hi > w.ts_lo) || !(w.ti_hi > w.ti_lo))
    throw ValidationError(detail::concat("trigger window is empty: signal [", w.ts_lo, ", ", w.ts_hi, "], idler [",
                                         w.ti_lo, ", ", w.ti_hi, "] ps"));
  if (w.ts_hi < hist.t_s_axis.start || w.ts_lo > hist.t_s_axis.end() || w.ti_hi < hist.t_i_axis.start ||
      w.ti_lo > hist.t_i_axis.end())
    throw ValidationError("trigger window lies outside the histogram range");
  CoincidenceHistogram out = hist;
  for (std::size_t i = 0; i < hist.t_s_axis.n; ++i)
    for (std::size_t j = 0; j < hist.t_i_axis.n; ++j)
      if (!w.contains(hist.t_s_axis.center(i), hist.t_i_axis.center(j))) out.counts(i, j) = 0;
  return out;
}

struct BinRegion {
  double ts_center, ti_center, half_width;
  TimeWindow window() const {
    return {ts_center - half_width, ts_center + half_width, ti_center - half_width, ti_center + half_width};
  }
};

struct BinCounts {
  std::vector<std::int64_t> totals;
  std::vector<BinRegion> regions;
};

/// Integrates counts over square regions of +/- half_width around each centre.
inline BinCounts extract_bins(const CoincidenceHistogram& hist, const std::vector<std::pair<double, double>>& centers,
                              double half_width = 3500.0) {
  hist.validate();
  detail::require(!centers.empty(), "extract_bins: no regions given");
  detail::require(half_width > 0.0, "extract_bins: half width must be positive");
  BinCounts out;
  for (const auto& [ts, ti] : centers) {
    BinRegion r{ts, ti, half_width};
    const auto w = r.window();
    if (w.ts_lo < hist.t_s_axis.start || w.ts_hi > hist.t_s_axis.end() || w.ti_lo < hist.t_i_axis.start ||
        w.ti_hi > hist.t_i_axis.end())
      throw ValidationError(detail::concat("extract_bins: region around (", ts, ", ", ti, ") ps leaves the histogram"));
    out.regions.push_back(r);
  }
  for (std::size_t k = 0; k < centers.size(); ++k)
    for (std::size_t m = k + 1; m < centers.size(); ++m)
      if (std::abs(centers[k].first - centers[m].first) < 2.0 * half_width &&
          std::abs(centers[k].second - centers[m].second) < 2.0 * half_width)
        throw ValidationError(detail::concat("extract_bins: regions ", k, " and ", m, " overlap"));
  out.totals.assign(centers.size(), 0);
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const auto w = out.regions[k].window();
    for (std::size_t i = 0; i < hist.t_s_axis.n; ++i) {
      const double ts = hist.t_s_axis.center(i);
      if (ts < w.ts_lo || ts > w.ts_hi) continue;
      for (std::size_t j = 0; j < hist.t_i_axis.n; ++j)
        if (w.contains(ts, hist.t_i_axis.center(j))) out.totals[k] += hist.counts(i, j);
    }
  }
  return out;
}

/// Arrival-time centres of frequency bins given as (ws, wi) pairs.
inline std::vector<std::pair<double, double>> bin_time_centers(const std::vector<std::pair<double, double>>& omegas,
                                                               const DispersionSpec& spec) {
  std::vector<std::pair<double, double>> out;
  for (const auto& [ws, wi] : omegas) out.emplace_back(omega_to_time(ws, spec), omega_to_time(wi, spec));
  return out;
}

}  // namespace biphoton
