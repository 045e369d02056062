#pragma once

// Nonlinearity-profile design for aperiodically poled crystals: the target
// profile g(z), its double-Gaussian phase-matching function, sub-coherence
// domain synthesis and exact PMF evaluation of a poling pattern.
//
// Units: z in mm, wavevector mismatch in 1/mm, frequencies in rad/ps.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "biphoton/core.hpp"
#include "biphoton/spectra.hpp"

namespace biphoton {

/// Sampled nonlinearity profile g(z) on a uniform grid centred on the crystal
/// (z from -L/2 to +L/2). The double-Gaussian parameters are kept when the
/// profile came from `target_nonlinearity`.
struct NonlinearityTarget {
  double length_mm = 0.0;
  double dk0 = 0.0;  ///< design phase mismatch, 1/mm
  double epsilon = 0.0;
  double xi = 0.0;
  std::vector<double> z_mm;
  std::vector<cplx> g;

  bool analytic() const { return xi > 0.0; }
  double dz() const { return z_mm[1] - z_mm[0]; }

  /// g(z) e^{-i k z}: the slowly varying envelope relative to carrier k.
  cplx envelope(std::size_t i, double carrier) const { return g[i] * std::polar(1.0, -carrier * z_mm[i]); }

  /// Half width of the wavevector window that holds the main PMF lobes.
  double pmf_half_window() const {
    if (analytic()) return 0.5 * epsilon + 6.0 * xi;
    return 40.0 * kPi / length_mm;
  }

  /// Profile from an arbitrary envelope; g(z) = envelope(z) e^{i dk0 z}.
  static NonlinearityTarget from_envelope(double length_mm, double dk0, std::size_t n_z,
                                          const std::function<cplx(double)>& envelope) {
    detail::require(length_mm > 0.0, "crystal length must be positive");
    detail::require(n_z >= 2, "nonlinearity target needs at least 2 samples");
    NonlinearityTarget t;
    t.length_mm = length_mm;
    t.dk0 = dk0;
    t.z_mm = linspace(-0.5 * length_mm, 0.5 * length_mm, n_z);
    t.g.resize(n_z);
    for (std::size_t i = 0; i < n_z; ++i) t.g[i] = envelope(t.z_mm[i]) * std::polar(1.0, dk0 * t.z_mm[i]);
    return t;
  }
};

/// g(z) = i sqrt(2/pi) sin(eps z / 2) exp(i dk0 z - xi^2 z^2 / 2), z centred.
inline NonlinearityTarget target_nonlinearity(double length_mm, double dk0, double epsilon, double xi,
                                              std::size_t n_z = 4001) {
  detail::require(length_mm > 0.0 && epsilon > 0.0 && xi > 0.0, "target_nonlinearity: L, epsilon and xi must be positive");
  detail::require(n_z >= 1000, "target_nonlinearity: n_z must be at least 1000");
  const double pref = std::sqrt(2.0 / kPi);
  auto t = NonlinearityTarget::from_envelope(length_mm, dk0, n_z, [&](double z) {
    return kI * pref * std::sin(0.5 * epsilon * z) * std::exp(-0.5 * xi * xi * z * z);
  });
  t.epsilon = epsilon;
  t.xi = xi;
  return t;
}

/// Double-Gaussian PMF with opposite-sign lobes at dk0 +/- eps/2:
/// (G(dk - dk0 - eps/2) - G(dk - dk0 + eps/2)) / (sqrt(2 pi) xi).
inline double pmf_analytic(double dk, double dk0, double epsilon, double xi) {
  detail::require(xi > 0.0, "pmf_analytic: xi must be positive");
  const double a = (dk - dk0 - 0.5 * epsilon) / xi;
  const double b = (dk - dk0 + 0.5 * epsilon) / xi;
  return (std::exp(-0.5 * a * a) - std::exp(-0.5 * b * b)) / (std::sqrt(kTwoPi) * xi);
}

inline std::vector<cplx> pmf_analytic(std::span<const double> dk, double dk0, double epsilon, double xi) {
  std::vector<cplx> out(dk.size());
  for (std::size_t i = 0; i < dk.size(); ++i) out[i] = pmf_analytic(dk[i], dk0, epsilon, xi);
  return out;
}

/// PMF of a sampled profile: (1/sqrt(2 pi)) * integral g(z) e^{-i dk z} dz
/// over the crystal (trapezoid rule on the target grid).
inline std::vector<cplx> pmf_from_target(const NonlinearityTarget& target, std::span<const double> dk) {
  std::vector<cplx> out(dk.size());
  const double h = target.dz();
  const std::size_t n = target.g.size();
  parallel_for(dk.size(), [&](std::size_t j) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
      acc += w * target.g[i] * std::polar(1.0, -dk[j] * target.z_mm[i]);
    }
    out[j] = acc * h / std::sqrt(kTwoPi);
  });
  return out;
}

/// |<a|b>|^2 / (<a|a><b|b>) on a common grid.
inline double pmf_fidelity(std::span<const cplx> a, std::span<const cplx> b) {
  detail::require(a.size() == b.size(), "pmf_fidelity: size mismatch");
  cplx ab{0.0, 0.0};
  double aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += std::conj(a[i]) * b[i];
    aa += std::norm(a[i]);
    bb += std::norm(b[i]);
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::norm(ab) / (aa * bb);
}

// --- poling ----------------------------------------------------------------

/// Ferroelectric domain structure: boundaries from 0 to L (mm) and one sign
/// per domain.
struct PolingPattern {
  std::vector<double> boundaries;
  std::vector<int> signs;

  std::size_t n_domains() const { return signs.size(); }
  double length() const { return boundaries.back() - boundaries.front(); }

  std::vector<double> domain_widths() const {
    std::vector<double> w(signs.size());
    for (std::size_t j = 0; j < signs.size(); ++j) w[j] = boundaries[j + 1] - boundaries[j];
    return w;
  }

  /// Widths after merging neighbours of equal sign.
  std::vector<double> merged_widths() const {
    std::vector<double> w;
    for (std::size_t j = 0; j < signs.size(); ++j) {
      const double wj = boundaries[j + 1] - boundaries[j];
      if (j > 0 && signs[j] == signs[j - 1])
        w.back() += wj;
      else
        w.push_back(wj);
    }
    return w;
  }

  double min_domain() const {
    const auto w = merged_widths();
    return *std::min_element(w.begin(), w.end());
  }
  double max_domain() const {
    const auto w = merged_widths();
    return *std::max_element(w.begin(), w.end());
  }

  void validate() const {
    detail::require(!signs.empty(), "poling pattern has no domains");
    detail::require(boundaries.size() == signs.size() + 1, "poling pattern: need one more boundary than domains");
    detail::require(boundaries.front() >= 0.0, "poling pattern must start at z >= 0");
    for (std::size_t j = 1; j < boundaries.size(); ++j)
      detail::require(boundaries[j] > boundaries[j - 1], "poling boundaries must be strictly increasing");
    for (int s : signs) detail::require(s == 1 || s == -1, "poling signs must be +1 or -1");
  }

  static PolingPattern periodic(double length_mm, double period_mm) {
    PolingPattern p;
    const double half = 0.5 * period_mm;
    const auto n = static_cast<std::size_t>(std::floor(length_mm / half + 1e-9));
    p.boundaries.push_back(0.0);
    int s = 1;
    for (std::size_t j = 0; j < n; ++j) {
      p.boundaries.push_back(std::min(length_mm, (j + 1) * half));
      p.signs.push_back(s);
      s = -s;
    }
    if (p.boundaries.back() < length_mm - 1e-12) {
      p.boundaries.push_back(length_mm);
      p.signs.push_back(s);
    }
    return p;
  }
};

/// Exact PMF of a poling pattern with the phase referenced to the crystal
/// centre: sum_j s_j * integral_{u_j}^{u_{j+1}} e^{i dk u} du, u = z - L/2.
/// A single domain of length L gives L sinc(dk L / 2).
inline cplx pmf_from_poling(const PolingPattern& pattern, double dk) {
  const double mid_ref = 0.5 * (pattern.boundaries.front() + pattern.boundaries.back());
  cplx acc{0.0, 0.0};
  for (std::size_t j = 0; j < pattern.signs.size(); ++j) {
    const double u0 = pattern.boundaries[j] - mid_ref;
    const double u1 = pattern.boundaries[j + 1] - mid_ref;
    const double w = u1 - u0;
    const double x = 0.5 * dk * w;
    const double sinc = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
    acc += static_cast<double>(pattern.signs[j]) * w * sinc * std::polar(1.0, dk * 0.5 * (u0 + u1));
  }
  return acc;
}

inline std::vector<cplx> pmf_from_poling(const PolingPattern& pattern, std::span<const double> dk) {
  pattern.validate();
  std::vector<cplx> out(dk.size());
  parallel_for(dk.size(), [&](std::size_t j) { out[j] = pmf_from_poling(pattern, dk[j]); });
  return out;
}

/// Thrown when a pattern cannot reproduce the target; carries the fidelity
/// that was reached.
class SynthesisError : public std::runtime_error {
 public:
  SynthesisError(const std::string& what, double fidelity) : std::runtime_error(what), fidelity_(fidelity) {}
  double achieved_fidelity() const { return fidelity_; }

 private:
  double fidelity_;
};

struct PolingOptions {
  double resolution_mm = 0.5e-3;  ///< spacing of candidate domain boundaries
  double min_fidelity = 0.9;      ///< below this the synthesis is reported as failed
};

/// Wavevector grid covering the main PMF lobes of `target`.
inline std::vector<double> pmf_window(const NonlinearityTarget& target, std::size_t n = 801) {
  const double hw = target.pmf_half_window();
  return linspace(target.dk0 - hw, target.dk0 + hw, n);
}

/// Realized-vs-target PMF fidelity on the main-lobe window. The target PMF is
/// the double-Gaussian closed form for analytic targets and the numerical
/// transform otherwise.
inline double poling_fidelity(const PolingPattern& pattern, const NonlinearityTarget& target) {
  const auto dk = pmf_window(target);
  const auto realized = pmf_from_poling(pattern, dk);
  const auto ideal = target.analytic() ? pmf_analytic(dk, target.dk0, target.epsilon, target.xi)
                                       : pmf_from_target(target, dk);
  return pmf_fidelity(ideal, realized);
}

/// Sub-coherence-length domain engineering by greedy amplitude tracking.
///
/// Walks the crystal on a grid of `resolution_mm` candidate boundaries. The
/// realized amplitude A(z) = integral s(z') e^{-iKz'} dz' (K = 2 pi / base_period)
/// is steered towards the scaled target amplitude integral g_env(z') dz'.
/// Once the current domain is at least `min_domain` long, the sign is flipped
/// if that brings A closer to the target one min_domain ahead. A short final
/// domain is merged into its neighbour, so every domain is >= min_domain.
inline PolingPattern synthesize_poling(const NonlinearityTarget& target, double min_domain, double base_period,
                                       const PolingOptions& opts = {}) {
  detail::require(target.g.size() >= 2, "synthesize_poling: empty target");
  detail::require(min_domain > 0.0 && base_period > 0.0, "synthesize_poling: lengths must be positive");
  detail::require(opts.resolution_mm > 0.0 && opts.resolution_mm <= min_domain,
                  "synthesize_poling: resolution must be positive and not exceed min_domain");
  const double L = target.length_mm;
  const double K = kTwoPi / base_period;
  const std::size_t nz = target.g.size();

  std::vector<cplx> env(nz);
  double env_max = 0.0;
  for (std::size_t i = 0; i < nz; ++i) {
    env[i] = target.envelope(i, K);
    env_max = std::max(env_max, std::abs(env[i]));
  }
  if (env_max == 0.0) {
    PolingPattern single;
    single.boundaries = {0.0, L};
    single.signs = {1};
    return single;
  }

  // Cumulative target amplitude, scaled so the steepest part of the profile
  // needs the full first-order QPM growth rate 2/pi.
  const double scale = (2.0 / kPi) / env_max;
  const double hz = target.dz();
  std::vector<cplx> cum(nz, cplx{0.0, 0.0});
  for (std::size_t i = 1; i < nz; ++i) cum[i] = cum[i - 1] + 0.5 * hz * scale * (env[i] + env[i - 1]);
  auto target_at = [&](double z) {
    const double x = std::clamp((z - 0.5 * L - target.z_mm.front()) / hz, 0.0, static_cast<double>(nz - 1));
    const auto i = std::min(static_cast<std::size_t>(x), nz - 2);
    const double f = x - static_cast<double>(i);
    return cum[i] * (1.0 - f) + cum[i + 1] * f;
  };

  const auto n = static_cast<std::size_t>(std::max(1.0, std::round(L / opts.resolution_mm)));
  const double h = L / static_cast<double>(n);
  const auto lock = static_cast<std::size_t>(std::ceil(min_domain / h - 1e-9));
  // carrier[k] = e^{-iK u_k}; segment integral is (carrier[k1]-carrier[k0])/(-iK)
  std::vector<cplx> carrier(n + 1);
  for (std::size_t k = 0; k <= n; ++k) carrier[k] = std::polar(1.0, -K * (static_cast<double>(k) * h - 0.5 * L));
  const cplx inv = 1.0 / (-kI * K);

  std::vector<int> step_sign(n);
  cplx A{0.0, 0.0};
  int s = 1;
  std::size_t run = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (run >= lock) {
      const std::size_t k2 = std::min(n, k + lock);
      const cplx seg = (carrier[k2] - carrier[k]) * inv;
      const cplx goal = target_at(static_cast<double>(k2) * h);
      if (std::abs(A - static_cast<double>(s) * seg - goal) < std::abs(A + static_cast<double>(s) * seg - goal)) {
        s = -s;
        run = 0;
      }
    }
    A += static_cast<double>(s) * (carrier[k + 1] - carrier[k]) * inv;
    step_sign[k] = s;
    ++run;
  }
  if (run < lock) {
    // trailing stub shorter than min_domain: extend the previous domain
    for (std::size_t k = n - run; k < n; ++k) step_sign[k] = -s;
  }

  PolingPattern p;
  p.boundaries.push_back(0.0);
  for (std::size_t k = 1; k < n; ++k) {
    if (step_sign[k] != step_sign[k - 1]) {
      p.boundaries.push_back(static_cast<double>(k) * h);
      p.signs.push_back(step_sign[k - 1]);
    }
  }
  p.boundaries.push_back(L);
  p.signs.push_back(step_sign[n - 1]);

  const double fid = poling_fidelity(p, target);
  if (2.0 * min_domain >= base_period || fid < opts.min_fidelity)
    throw SynthesisError(detail::concat("min_domain ", min_domain, " mm cannot track the target profile with period ",
                                        base_period, " mm; best PMF fidelity ", fid),
                         fid);
  return p;
}

/// arg phi(dk0 + eps/2) - arg phi(dk0 - eps/2), wrapped to [0, 2 pi).
inline double antinode_phase_difference(const PolingPattern& pattern, const NonlinearityTarget& target) {
  const double d = std::arg(pmf_from_poling(pattern, target.dk0 + 0.5 * target.epsilon)) -
                   std::arg(pmf_from_poling(pattern, target.dk0 - 0.5 * target.epsilon));
  return d - kTwoPi * std::floor(d / kTwoPi);
}

struct PolingReport {
  double fidelity = 0.0;
  std::size_t n_domains = 0;
  double min_domain_mm = 0.0;
  double max_domain_mm = 0.0;
  double antinode_phase = 0.0;  ///< only meaningful for analytic targets
};

inline PolingReport poling_report(const PolingPattern& pattern, const NonlinearityTarget& target) {
  PolingReport r;
  r.fidelity = poling_fidelity(pattern, target);
  r.n_domains = pattern.merged_widths().size();
  r.min_domain_mm = pattern.min_domain();
  r.max_domain_mm = pattern.max_domain();
  if (target.analytic()) r.antinode_phase = antinode_phase_difference(pattern, target);
  return r;
}

// --- dispersion --------------------------------------------------------------

/// Refractive index polynomial n(lambda) = sum_j c_j lambda^j, lambda in um,
/// valid on [lambda_min_um, lambda_max_um].
struct IndexPolynomial {
  std::vector<double> coeffs;
  double lambda_min_um = 0.0;
  double lambda_max_um = std::numeric_limits<double>::infinity();

  double n(double lambda_um) const {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * lambda_um + *it;
    return acc;
  }
  /// Wavenumber in 1/mm at angular frequency w (rad/ps).
  double k(double omega, const char* which) const {
    const double lambda_um = omega_to_wavelength(omega) * 1e-3;
    if (!(lambda_um >= lambda_min_um && lambda_um <= lambda_max_um))
      throw DomainError(detail::concat(which, " wavelength ", lambda_um * 1e3, " nm outside index table range [",
                                       lambda_min_um * 1e3, ", ", lambda_max_um * 1e3, "] nm"));
    return kTwoPi * n(lambda_um) / (lambda_um * 1e-3);
  }
};

struct DispersionModel {
  enum class Kind { LinearizedGvm, SellmeierTable };

  Kind kind = Kind::LinearizedGvm;
  double degenerate_wavelength_nm = 1582.0;
  // linearized: dk = dk0 + slope * ((ws - w0) - (wi - w0))
  double dk0 = 0.0;
  double gvm_slope = 0.0;  ///< d(dk)/d(ws), mm^-1 per rad/ps
  double max_detuning = std::numeric_limits<double>::infinity();  ///< rad/ps validity half-range
  // table: dk = k_p(ws + wi) - k_s(ws) - k_i(wi) - 2 pi / period
  IndexPolynomial pump, signal, idler;
  double poling_period_mm = 0.0;

  double omega_degenerate() const { return wavelength_to_omega(degenerate_wavelength_nm); }

  /// Mismatch compensated by the poling: dk0 for the linearized model, 0 for
  /// tables (which already subtract 2 pi / period).
  double qpm_offset() const { return kind == Kind::LinearizedGvm ? dk0 : 0.0; }

  static DispersionModel linearized(double dk0, double gvm_slope, double degenerate_nm = 1582.0) {
    DispersionModel m;
    m.kind = Kind::LinearizedGvm;
    m.dk0 = dk0;
    m.gvm_slope = gvm_slope;
    m.degenerate_wavelength_nm = degenerate_nm;
    return m;
  }
};

/// Wavevector mismatch (1/mm) at signal/idler frequencies (rad/ps).
inline double phase_mismatch(double ws, double wi, const DispersionModel& m) {
  if (m.kind == DispersionModel::Kind::LinearizedGvm) {
    const double w0 = m.omega_degenerate();
    const double ds = ws - w0, di = wi - w0;
    if (std::abs(ds) > m.max_detuning || std::abs(di) > m.max_detuning)
      throw DomainError(detail::concat("frequency outside linearized dispersion range (|w - w0| <= ", m.max_detuning,
                                       " rad/ps)"));
    return m.dk0 + m.gvm_slope * (ds - di);
  }
  return m.pump.k(ws + wi, "pump") - m.signal.k(ws, "signal") - m.idler.k(wi, "idler") -
         kTwoPi / m.poling_period_mm;
}

/// PMF over a signal x idler grid: pmf(residual mismatch), residual = dk - qpm_offset.
inline Eigen::MatrixXcd pmf_grid(const SpectralAxis& s_axis, const SpectralAxis& i_axis, const DispersionModel& m,
                                 const std::function<cplx(double)>& pmf_of_residual) {
  Eigen::MatrixXcd out(s_axis.size(), i_axis.size());
  parallel_for(s_axis.size(), [&](std::size_t a) {
    for (std::size_t b = 0; b < i_axis.size(); ++b)
      out(a, b) = pmf_of_residual(phase_mismatch(s_axis[a], i_axis[b], m) - m.qpm_offset());
  });
  return out;
}

/// Double-Gaussian crystal PMF (closed form) on a grid, via the dispersion model.
inline Eigen::MatrixXcd crystal_pmf_grid(const SpectralAxis& s_axis, const SpectralAxis& i_axis,
                                         const DispersionModel& m, double epsilon, double xi) {
  return pmf_grid(s_axis, i_axis, m, [&](double r) { return cplx{pmf_analytic(r, 0.0, epsilon, xi), 0.0}; });
}

/// Finite-crystal PMF of a sampled target on a grid. The transform is
/// tabulated on a fine 1D residual grid and interpolated.
inline Eigen::MatrixXcd target_pmf_grid(const SpectralAxis& s_axis, const SpectralAxis& i_axis,
                                        const DispersionModel& m, const NonlinearityTarget& target,
                                        std::size_t table_points = 8001) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double ws : {s_axis.front(), s_axis.back()})
    for (double wi : {i_axis.front(), i_axis.back()}) {
      const double r = phase_mismatch(ws, wi, m) - m.qpm_offset();
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  // the table model can be curved: pad the corner range
  const double pad = 0.05 * (hi - lo) + 1e-9;
  const auto grid = linspace(lo - pad, hi + pad, table_points);
  std::vector<double> dk(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) dk[j] = grid[j] + target.dk0;
  const auto table = pmf_from_target(target, dk);
  const double step = grid[1] - grid[0];
  return pmf_grid(s_axis, i_axis, m, [&](double r) {
    const double x = std::clamp((r - grid.front()) / step, 0.0, static_cast<double>(grid.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(x), grid.size() - 2);
    const double f = x - static_cast<double>(i);
    return table[i] * (1.0 - f) + table[i + 1] * f;
  });
}

}  // namespace biphoton
