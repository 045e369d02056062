#pragma once

// CSV and JSON serialization for spectra, JSAs, poling patterns, traces,
// histograms, projection sets and density matrices.
//
// Numbers are written with 17 significant digits so files round-trip and
// reruns are byte-identical.

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/core.hpp"
#include "biphoton/crystal.hpp"
#include "biphoton/hom.hpp"
#include "biphoton/hyperhom.hpp"
#include "biphoton/jsa.hpp"
#include "biphoton/tofs.hpp"
#include "biphoton/tomo.hpp"

namespace biphoton::io {

using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double to_double(const std::string& s, const std::filesystem::path& p, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(biphoton::detail::concat(p.string(), ":", line, ": not a number: '", s, "'"));
  }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> read_lines(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string() + " (file not found)");
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.emplace_back(n, line);
  }
  return out;
}

template <typename Row>
void write_row(std::ostream& os, const std::string& tag, std::size_t n, Row&& value) {
  os << tag;
  for (std::size_t j = 0; j < n; ++j) os << ',' << num(value(j));
  os << '\n';
}

}  // namespace detail

// --- 1D data -------------------------------------------------------------------------

/// Columns of equal length under a header row.
inline void write_columns(const std::filesystem::path& p, const std::vector<std::string>& header,
                          const std::vector<std::vector<double>>& cols,
                          const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  biphoton::detail::require(header.size() == cols.size() && !cols.empty(), "write_columns: header/column mismatch");
  for (const auto& c : cols) biphoton::detail::require(c.size() == cols[0].size(), "write_columns: ragged columns");
  auto os = detail::open_out(p);
  for (const auto& [k, v] : meta) os << "# " << k << ": " << v << '\n';
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (std::size_t i = 0; i < cols[0].size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) os << (j ? "," : "") << num(cols[j][i]);
    os << '\n';
  }
}

/// Reads a header row plus numeric columns; '#' lines are skipped.
inline std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_columns(const std::filesystem::path& p) {
  const auto lines = detail::read_lines(p);
  if (lines.empty()) throw IoError(p.string() + ": empty file");
  auto header = detail::split(lines[0].second);
  std::vector<std::vector<double>> cols(header.size());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = detail::split(lines[i].second);
    if (cells.size() != header.size())
      throw IoError(biphoton::detail::concat(p.string(), ":", lines[i].first, ": expected ", header.size(), " columns"));
    for (std::size_t j = 0; j < cells.size(); ++j) cols[j].push_back(detail::to_double(cells[j], p, lines[i].first));
  }
  return {header, cols};
}

/// Two-column spectrum: frequency (rad/ps), value.
inline void write_spectrum_csv(const std::filesystem::path& p, const SpectralAxis& axis, const std::vector<double>& v,
                               const std::string& value_name = "value") {
  write_columns(p, {"omega_rad_per_ps", value_name}, {axis.values(), v});
}

// --- matrices with axis headers ------------------------------------------------------------

/// axis,signal_rad_per_ps,... / axis,idler_rad_per_ps,... then one tagged row
/// per signal frequency for each part (real/imag or value).
inline void write_jsa_csv(const std::filesystem::path& p, const JointSpectralAmplitude& f) {
  auto os = detail::open_out(p);
  for (const auto& [k, v] : f.metadata) os << "# " << k << ": " << v << '\n';
  detail::write_row(os, "axis,signal_rad_per_ps", f.s_axis.size(), [&](std::size_t j) { return f.s_axis[j]; });
  detail::write_row(os, "axis,idler_rad_per_ps", f.i_axis.size(), [&](std::size_t j) { return f.i_axis[j]; });
  for (Eigen::Index a = 0; a < f.values.rows(); ++a)
    detail::write_row(os, "real", f.i_axis.size(), [&](std::size_t j) { return f.values(a, j).real(); });
  for (Eigen::Index a = 0; a < f.values.rows(); ++a)
    detail::write_row(os, "imag", f.i_axis.size(), [&](std::size_t j) { return f.values(a, j).imag(); });
}

inline void write_jsi_csv(const std::filesystem::path& p, const JointSpectralIntensity& jsi) {
  auto os = detail::open_out(p);
  detail::write_row(os, "axis,signal_rad_per_ps", jsi.s_axis.size(), [&](std::size_t j) { return jsi.s_axis[j]; });
  detail::write_row(os, "axis,idler_rad_per_ps", jsi.i_axis.size(), [&](std::size_t j) { return jsi.i_axis[j]; });
  for (Eigen::Index a = 0; a < jsi.values.rows(); ++a)
    detail::write_row(os, "value", jsi.i_axis.size(), [&](std::size_t j) { return jsi.values(a, j); });
}

namespace detail {

struct TaggedMatrix {
  std::vector<double> s_axis, i_axis;
  std::map<std::string, std::vector<std::vector<double>>> rows;
};

inline TaggedMatrix read_tagged(const std::filesystem::path& p) {
  TaggedMatrix t;
  for (const auto& [ln, line] : read_lines(p)) {
    auto cells = split(line);
    if (cells.empty()) continue;
    if (cells[0] == "axis") {
      if (cells.size() < 4) throw IoError(biphoton::detail::concat(p.string(), ":", ln, ": axis row too short"));
      std::vector<double> v;
      for (std::size_t j = 2; j < cells.size(); ++j) v.push_back(to_double(cells[j], p, ln));
      if (cells[1].rfind("signal", 0) == 0 || cells[1].rfind("t_signal", 0) == 0)
        t.s_axis = v;
      else
        t.i_axis = v;
      continue;
    }
    std::vector<double> v;
    for (std::size_t j = 1; j < cells.size(); ++j) v.push_back(to_double(cells[j], p, ln));
    if (!t.i_axis.empty() && v.size() != t.i_axis.size())
      throw IoError(biphoton::detail::concat(p.string(), ":", ln, ": row has ", v.size(), " values, expected ",
                                             t.i_axis.size()));
    t.rows[cells[0]].push_back(std::move(v));
  }
  if (t.s_axis.empty() || t.i_axis.empty()) throw IoError(p.string() + ": missing axis header rows");
  return t;
}

inline Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, std::size_t ns, std::size_t ni,
                                 const std::filesystem::path& p, const char* tag) {
  if (rows.size() != ns)
    throw IoError(biphoton::detail::concat(p.string(), ": expected ", ns, " '", tag, "' rows, found ", rows.size()));
  Eigen::MatrixXd m(ns, ni);
  for (std::size_t a = 0; a < ns; ++a)
    for (std::size_t b = 0; b < ni; ++b) m(a, b) = rows[a][b];
  return m;
}

}  // namespace detail

inline JointSpectralAmplitude read_jsa_csv(const std::filesystem::path& p) {
  const auto t = detail::read_tagged(p);
  JointSpectralAmplitude f;
  f.s_axis = SpectralAxis::from_values(t.s_axis);
  f.i_axis = SpectralAxis::from_values(t.i_axis);
  const auto re = detail::to_matrix(t.rows.count("real") ? t.rows.at("real") : decltype(t.rows)::mapped_type{},
                                    t.s_axis.size(), t.i_axis.size(), p, "real");
  Eigen::MatrixXd im = Eigen::MatrixXd::Zero(re.rows(), re.cols());
  if (t.rows.count("imag")) im = detail::to_matrix(t.rows.at("imag"), t.s_axis.size(), t.i_axis.size(), p, "imag");
  f.values.resize(re.rows(), re.cols());
  f.values.real() = re;
  f.values.imag() = im;
  f.normalize();
  return f;
}

inline JointSpectralIntensity read_jsi_csv(const std::filesystem::path& p) {
  const auto t = detail::read_tagged(p);
  JointSpectralIntensity jsi;
  jsi.s_axis = SpectralAxis::from_values(t.s_axis);
  jsi.i_axis = SpectralAxis::from_values(t.i_axis);
  jsi.values = detail::to_matrix(t.rows.count("value") ? t.rows.at("value") : decltype(t.rows)::mapped_type{},
                                 t.s_axis.size(), t.i_axis.size(), p, "value");
  jsi.validate();
  return jsi;
}

inline void write_histogram_csv(const std::filesystem::path& p, const CoincidenceHistogram& h) {
  auto os = detail::open_out(p);
  os << "# seed: " << h.seed << '\n' << "# integration_time_s: " << num(h.integration_time_s) << '\n';
  detail::write_row(os, "axis,t_signal_ps", h.t_s_axis.n, [&](std::size_t j) { return h.t_s_axis.center(j); });
  detail::write_row(os, "axis,t_idler_ps", h.t_i_axis.n, [&](std::size_t j) { return h.t_i_axis.center(j); });
  for (Eigen::Index a = 0; a < h.counts.rows(); ++a) {
    os << "counts";
    for (Eigen::Index b = 0; b < h.counts.cols(); ++b) os << ',' << h.counts(a, b);
    os << '\n';
  }
}

inline CoincidenceHistogram read_histogram_csv(const std::filesystem::path& p) {
  const auto t = detail::read_tagged(p);
  auto axis_of = [&](const std::vector<double>& c) {
    TimeAxis ax;
    ax.n = c.size();
    ax.width = c.size() > 1 ? (c.back() - c.front()) / static_cast<double>(c.size() - 1) : 1.0;
    ax.start = c.front() - 0.5 * ax.width;
    return ax;
  };
  CoincidenceHistogram h;
  h.t_s_axis = axis_of(t.s_axis);
  h.t_i_axis = axis_of(t.i_axis);
  const auto m = detail::to_matrix(t.rows.count("counts") ? t.rows.at("counts") : decltype(t.rows)::mapped_type{},
                                   t.s_axis.size(), t.i_axis.size(), p, "counts");
  h.counts = m.array().round().cast<std::int64_t>().matrix();
  h.validate();
  return h;
}

// --- poling ---------------------------------------------------------------------------------

/// One row per domain (left boundary, sign) plus a closing row (L, 0).
inline void write_poling_csv(const std::filesystem::path& p, const PolingPattern& pat) {
  auto os = detail::open_out(p);
  os << "boundary_mm,sign\n";
  for (std::size_t j = 0; j < pat.signs.size(); ++j) os << num(pat.boundaries[j]) << ',' << pat.signs[j] << '\n';
  os << num(pat.boundaries.back()) << ",0\n";
}

inline PolingPattern read_poling_csv(const std::filesystem::path& p) {
  const auto [header, cols] = read_columns(p);
  if (header.size() != 2 || header[0] != "boundary_mm" || header[1] != "sign")
    throw IoError(p.string() + ": expected header 'boundary_mm,sign'");
  PolingPattern pat;
  pat.boundaries = cols[0];
  for (std::size_t j = 0; j + 1 < cols[1].size(); ++j) pat.signs.push_back(static_cast<int>(cols[1][j]));
  pat.validate();
  return pat;
}

// --- traces --------------------------------------------------------------------------------

inline void write_trace_csv(const std::filesystem::path& p, const HomTrace& tr) {
  std::vector<std::pair<std::string, std::string>> meta{
      {"kind", tr.kind == TraceKind::Intra ? "intra" : "inter-heralded"}};
  if (tr.has_counts())
    write_columns(p, {"delay_ps", "probability", "counts"}, {tr.delays, tr.probability, tr.counts}, meta);
  else
    write_columns(p, {"delay_ps", "probability"}, {tr.delays, tr.probability}, meta);
}

inline HomTrace read_trace_csv(const std::filesystem::path& p) {
  const auto [header, cols] = read_columns(p);
  HomTrace tr;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "delay_ps") tr.delays = cols[j];
    if (header[j] == "probability") tr.probability = cols[j];
    if (header[j] == "counts") tr.counts = cols[j];
  }
  if (tr.delays.empty()) throw IoError(p.string() + ": missing delay_ps column");
  if (tr.probability.empty() && tr.counts.empty()) throw IoError(p.string() + ": need a probability or counts column");
  if (tr.probability.empty()) tr.probability.assign(tr.delays.size(), 0.0);
  return tr;
}

inline void write_port_pair_csv(const std::filesystem::path& p, const PortPairTrace& tr) {
  write_columns(p, {"delay_ps", "probability"}, {tr.delays, tr.probability},
                {{"basis", to_string(tr.basis)}, {"pair", to_string(tr.pair)}});
}

// --- tomography ---------------------------------------------------------------------------

inline void write_projection_csv(const std::filesystem::path& p, const ProjectionSet& set) {
  auto os = detail::open_out(p);
  os << "setting_a,setting_b,counts\n";
  for (std::size_t k = 0; k < set.settings.size(); ++k)
    os << to_char(set.settings[k].a) << ',' << to_char(set.settings[k].b) << ',' << num(set.counts[k]) << '\n';
}

inline ProjectionSet read_projection_csv(const std::filesystem::path& p) {
  const auto lines = detail::read_lines(p);
  if (lines.empty() || detail::split(lines[0].second) != std::vector<std::string>{"setting_a", "setting_b", "counts"})
    throw IoError(p.string() + ": expected header 'setting_a,setting_b,counts'");
  ProjectionSet set;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = detail::split(lines[i].second);
    if (c.size() != 3) throw IoError(biphoton::detail::concat(p.string(), ":", lines[i].first, ": expected 3 columns"));
    set.settings.push_back({parse_pol(c[0]), parse_pol(c[1])});
    set.counts.push_back(detail::to_double(c[2], p, lines[i].first));
  }
  set.validate();
  return set;
}

/// Real block then imaginary block, 4 x 4 each.
inline void write_density_csv(const std::filesystem::path& p, const DensityMatrix& rho) {
  auto os = detail::open_out(p);
  os << "# basis: HH,HV,VH,VV\n# real\n";
  for (int i = 0; i < 4; ++i) detail::write_row(os, "re", 4, [&](std::size_t j) { return rho(i, j).real(); });
  os << "# imag\n";
  for (int i = 0; i < 4; ++i) detail::write_row(os, "im", 4, [&](std::size_t j) { return rho(i, j).imag(); });
}

// --- JSON ------------------------------------------------------------------------------------

inline void write_json(const std::filesystem::path& p, const json& j) {
  auto os = detail::open_out(p);
  os << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string() + " (file not found)");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

inline json schmidt_summary(const SchmidtResult& s, std::size_t top = 8) {
  json l = json::array();
  for (std::size_t k = 0; k < std::min(top, s.lambda.size()); ++k) l.push_back(s.lambda[k]);
  return {{"schmidt_number", s.K}, {"purity", s.purity}, {"lambda", l}};
}

inline json fit_summary(const FitOutcome& f) {
  json cov = json::array();
  for (int i = 0; i < 4; ++i) {
    json row = json::array();
    for (int j = 0; j < 4; ++j) row.push_back(f.covariance(i, j));
    cov.push_back(row);
  }
  return {{"model", to_string(f.model)},
          {"sigma_rad_per_ps", f.sigma},
          {"delta_rad_per_ps", f.delta},
          {"visibility", f.V},
          {"baseline", f.baseline},
          {"stderr", {{"sigma", f.stderr_sigma()}, {"delta", f.stderr_delta()}, {"visibility", f.stderr_V()}, {"baseline", f.stderr_baseline()}}},
          {"covariance", cov},
          {"residual_norm", f.residual_norm},
          {"iterations", f.iterations}};
}

}  // namespace biphoton::io
