#pragma once

// Polarisation-resolved HOM interference of a polarisation Bell state times
// a frequency-bin state at a balanced beam splitter, with polarisation
// analysis in the H/V or D/A basis behind each output port.
//
// Detectors are labelled by output port (1, 2) and polarisation outcome
// T (H or D) / R (V or A).

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "biphoton/core.hpp"
#include "biphoton/hom.hpp"
#include "biphoton/jsa.hpp"

namespace biphoton {

enum class PolBasis { HV, DA };

enum class PortPair {
  CrossPolSamePort,   ///< T1R1 and T2R2
  CrossPolCrossPort,  ///< T1R2 and R1T2
  SamePolCrossPort,   ///< T1T2 and R1R2
};

inline const char* to_string(PolBasis b) { return b == PolBasis::HV ? "HV" : "DA"; }

inline const char* to_string(PortPair p) {
  switch (p) {
    case PortPair::CrossPolSamePort: return "cross-pol-same-port";
    case PortPair::CrossPolCrossPort: return "cross-pol-cross-port";
    case PortPair::SamePolCrossPort: return "same-pol-cross-port";
  }
  return "?";
}

inline constexpr std::array<PortPair, 3> kPortPairs{PortPair::CrossPolSamePort, PortPair::CrossPolCrossPort,
                                                    PortPair::SamePolCrossPort};

/// (|HV> + e^{i phi} |VH>) / sqrt 2 times a frequency state f(ws, wi); the
/// first photon enters beam-splitter input 1, the second input 2.
struct HyperState {
  double phi = 0.0;
  JointSpectralAmplitude jsa;
  std::string label;

  /// Polarisation coefficients c(p, q) in the H/V basis.
  Eigen::Matrix2cd polarisation() const {
    Eigen::Matrix2cd c = Eigen::Matrix2cd::Zero();
    c(0, 1) = 1.0 / std::sqrt(2.0);
    c(1, 0) = std::polar(1.0 / std::sqrt(2.0), phi);
    return c;
  }
};

/// Rotates two-photon polarisation coefficients between H/V and D/A, with
/// D = (H + V)/sqrt 2 and A = (H - V)/sqrt 2. The rotation is its own inverse.
inline Eigen::Matrix2cd basis_change(const Eigen::Matrix2cd& c) {
  Eigen::Matrix2cd B;
  B << 1.0, 1.0, 1.0, -1.0;
  B /= std::sqrt(2.0);
  return B * c * B.transpose();
}

inline Eigen::Matrix2cd polarisation_in(const HyperState& s, PolBasis basis) {
  return basis == PolBasis::HV ? s.polarisation() : basis_change(s.polarisation());
}

/// Balanced splitter, U(out, in).
inline double bs_element(int out, int in) { return (out == 1 && in == 1) ? -1.0 / std::sqrt(2.0) : 1.0 / std::sqrt(2.0); }

struct Detector {
  int port;  ///< 0 or 1
  int pol;   ///< 0 = T (H or D), 1 = R (V or A)
  std::string name() const { return std::string(pol == 0 ? "T" : "R") + std::to_string(port + 1); }
};

/// Symmetrized two-photon output amplitudes at one delay. For detectors d1,
/// d2 the matrix amp(d1, d2)(a, b) is the amplitude for one photon at d1
/// with frequency w_a and one at d2 with w_b, grid weights included, such
/// that the probabilities sum to 1 over all ordered (d1, a; d2, b).
struct AmplitudeTable {
  SpectralAxis axis;
  std::array<std::array<Eigen::MatrixXcd, 4>, 4> amp;  ///< index = 2 * port + pol

  /// Probability that detectors d1 and d2 click together (d1 != d2), or
  /// that both photons reach d1 (d1 == d2).
  double probability(int d1, int d2) const {
    const double s = amp[d1][d2].squaredNorm();
    return d1 == d2 ? s : 2.0 * s;
  }
  double total() const {
    double t = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) t += amp[i][j].squaredNorm();
    return t;
  }
};

/// Mode-by-mode expansion of the state through the beam splitter. The delay
/// adds e^{i ws tau} to the photon in input 1.
inline AmplitudeTable beam_splitter_amplitudes(const HyperState& state, PolBasis basis, double tau) {
  const auto& f = state.jsa;
  f.check_shape();
  detail::require(f.square(), "beam_splitter_amplitudes needs identical signal and idler axes");
  const auto n = static_cast<Eigen::Index>(f.s_axis.size());
  const double c0 = f.s_axis.center();
  Eigen::MatrixXcd ft = f.values * std::sqrt(f.cell());
  for (Eigen::Index a = 0; a < n; ++a) ft.row(a) *= std::polar(1.0, (f.s_axis[a] - c0) * tau);
  const Eigen::Matrix2cd c = polarisation_in(state, basis);

  // raw(m1; m2) = c(p, q) U(y1, in1) U(y2, in2) f(w1, w2)
  AmplitudeTable t;
  t.axis = f.s_axis;
  for (int d1 = 0; d1 < 4; ++d1)
    for (int d2 = 0; d2 < 4; ++d2) {
      const int y1 = d1 / 2, p1 = d1 % 2, y2 = d2 / 2, p2 = d2 % 2;
      const cplx fwd = c(p1, p2) * bs_element(y1, 0) * bs_element(y2, 1);
      const cplx rev = c(p2, p1) * bs_element(y2, 0) * bs_element(y1, 1);
      t.amp[d1][d2] = (fwd * ft + rev * ft.transpose()) / std::sqrt(2.0);
    }
  return t;
}

namespace detail {

inline std::vector<std::pair<int, int>> detector_pairs(PortPair p) {
  // detector index = 2 * port + pol, T = 0, R = 1
  switch (p) {
    case PortPair::CrossPolSamePort: return {{0, 1}, {2, 3}};
    case PortPair::CrossPolCrossPort: return {{0, 3}, {1, 2}};
    case PortPair::SamePolCrossPort: return {{0, 2}, {1, 3}};
  }
  return {};
}

// P(d1, d2) = |alpha|^2 + |beta|^2 + 2 V Re(conj(alpha) beta S) for distinct
// detectors, with alpha / beta the direct / exchanged amplitude factors.
inline double pair_probability(const Eigen::Matrix2cd& c, int d1, int d2, cplx S, double V) {
  const int y1 = d1 / 2, p1 = d1 % 2, y2 = d2 / 2, p2 = d2 % 2;
  const cplx alpha = c(p1, p2) * bs_element(y1, 0) * bs_element(y2, 1);
  const cplx beta = c(p2, p1) * bs_element(y2, 0) * bs_element(y1, 1);
  return std::norm(alpha) + std::norm(beta) + 2.0 * V * (std::conj(alpha) * beta * S).real();
}

}  // namespace detail

/// Coincidence probability of a detector-pair category from the brute-force
/// amplitude table.
inline double category_probability(const AmplitudeTable& t, PortPair p) {
  double s = 0.0;
  for (auto [d1, d2] : detail::detector_pairs(p)) s += t.probability(d1, d2);
  return s;
}

/// Both photons at the same detector (no coincidence without number resolution).
inline double no_coincidence_probability(const AmplitudeTable& t) {
  double s = 0.0;
  for (int d = 0; d < 4; ++d) s += t.probability(d, d);
  return s;
}

struct PortPairTrace {
  PolBasis basis = PolBasis::HV;
  PortPair pair = PortPair::CrossPolSamePort;
  std::vector<double> delays;
  std::vector<double> probability;
};

/// Category trace from the exchange overlap S(tau); `visibility` scales the
/// interference term for comparison with imperfect data.
inline PortPairTrace polarised_hom_trace(const HyperState& state, PolBasis basis, PortPair pair,
                                         const std::vector<double>& delays, double visibility = 1.0) {
  detail::require(visibility >= 0.0 && visibility <= 1.0, "visibility must lie in [0, 1]");
  const auto S = exchange_overlaps(state.jsa, delays);
  const Eigen::Matrix2cd c = polarisation_in(state, basis);
  PortPairTrace tr;
  tr.basis = basis;
  tr.pair = pair;
  tr.delays = delays;
  tr.probability.resize(delays.size());
  for (std::size_t t = 0; t < delays.size(); ++t) {
    double p = 0.0;
    for (auto [d1, d2] : detail::detector_pairs(pair)) p += detail::pair_probability(c, d1, d2, S[t], visibility);
    tr.probability[t] = detail::clamp_overshoot(p);
  }
  return tr;
}

/// All three categories plus the no-coincidence remainder at each delay.
struct HyperTraces {
  std::array<PortPairTrace, 3> traces;
  std::vector<double> no_coincidence;
};

inline HyperTraces polarised_hom_traces(const HyperState& state, PolBasis basis, const std::vector<double>& delays,
                                        double visibility = 1.0) {
  HyperTraces out;
  for (std::size_t k = 0; k < 3; ++k) out.traces[k] = polarised_hom_trace(state, basis, kPortPairs[k], delays, visibility);
  out.no_coincidence.resize(delays.size());
  for (std::size_t t = 0; t < delays.size(); ++t) {
    double s = 0.0;
    for (const auto& tr : out.traces) s += tr.probability[t];
    out.no_coincidence[t] = 1.0 - s;
  }
  return out;
}

}  // namespace biphoton
