#pragma once

// Config-driven experiments: every CLI subcommand maps to one function that
// reads its parameter blocks, runs the modules and writes CSV/JSON artifacts
// plus a manifest into the output directory.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "biphoton/core.hpp"
#include "biphoton/crystal.hpp"
#include "biphoton/hom.hpp"
#include "biphoton/hyperhom.hpp"
#include "biphoton/io.hpp"
#include "biphoton/jsa.hpp"
#include "biphoton/spectra.hpp"
#include "biphoton/tofs.hpp"
#include "biphoton/tomo.hpp"

namespace biphoton::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"design-crystal", "shape-pump", "simulate-jsa", "schmidt",   "hom-intra",
                                          "hom-inter",      "hom-hyper",  "tofs-roundtrip", "tomo-fit", "figure-repro"};
  return k;
}

inline const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> f{"fig1b", "fig1c", "fig3", "fig4a", "fig4b", "fig5", "fig6", "figA2"};
  return f;
}

/// Raised by run(); the message names the failing module and the config file.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  json raw = json::object();
  fs::path source;  ///< config file, empty when built in code
  std::string experiment;
  fs::path output_dir = "out";
  std::optional<std::uint64_t> seed;

  // json literals built in code store 5 as a signed integer
  static bool is_seed(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  static ExperimentConfig from_json(json j, fs::path source = {}) {
    ExperimentConfig c;
    c.raw = std::move(j);
    c.source = std::move(source);
    if (c.raw.is_object()) {
      if (c.raw.contains("experiment") && c.raw["experiment"].is_string()) c.experiment = c.raw["experiment"];
      if (c.raw.contains("output_dir") && c.raw["output_dir"].is_string())
        c.output_dir = c.raw["output_dir"].get<std::string>();
      if (c.raw.contains("seed") && is_seed(c.raw["seed"])) c.seed = c.raw["seed"].get<std::uint64_t>();
    }
    return c;
  }

  static ExperimentConfig load(const fs::path& p) { return from_json(io::read_json(p), p); }

  /// Relative input paths are resolved against the config file's directory.
  fs::path resolve(const std::string& p) const {
    fs::path q(p);
    if (q.is_absolute() || source.empty()) return q;
    return source.parent_path() / q;
  }
};

namespace detail {

using Diagnostics = std::vector<std::string>;

/// Typed view of one JSON object that records problems instead of throwing
/// and remembers the resolved value of every key it was asked for.
class Block {
 public:
  enum class Check { Any, Positive, NonNegative, Unit };

  Block(const json* j, std::string prefix, Diagnostics* diag) : j_(j), prefix_(std::move(prefix)), diag_(diag) {
    if (j_ && !j_->is_object()) {
      diag_->push_back(prefix_ + ": expected an object");
      j_ = nullptr;
    }
  }

  bool present() const { return j_ != nullptr; }
  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  double number(const std::string& key, double def, Check check = Check::Any) {
    used_.insert(key);
    double v = def;
    if (j_ && j_->contains(key)) {
      const auto& x = (*j_)[key];
      if (!x.is_number()) {
        diag_->push_back(path(key) + ": expected a number");
        return def;
      }
      v = x.get<double>();
    }
    if (!std::isfinite(v)) diag_->push_back(path(key) + ": must be finite");
    switch (check) {
      case Check::Positive:
        if (!(v > 0.0)) diag_->push_back(path(key) + ": must be positive (got " + io::num(v) + ")");
        break;
      case Check::NonNegative:
        if (!(v >= 0.0)) diag_->push_back(path(key) + ": must be non-negative (got " + io::num(v) + ")");
        break;
      case Check::Unit:
        if (!(v >= 0.0 && v <= 1.0)) diag_->push_back(path(key) + ": must lie in [0, 1] (got " + io::num(v) + ")");
        break;
      case Check::Any: break;
    }
    resolved_[key] = v;
    return v;
  }

  std::size_t count(const std::string& key, std::size_t def, std::size_t min_value) {
    used_.insert(key);
    std::size_t v = def;
    if (j_ && j_->contains(key)) {
      const auto& x = (*j_)[key];
      if (!x.is_number_integer() || x.get<long long>() < 0) {
        diag_->push_back(path(key) + ": expected a non-negative integer");
        return def;
      }
      v = x.get<std::size_t>();
    }
    if (v < min_value) diag_->push_back(path(key) + ": must be at least " + std::to_string(min_value));
    resolved_[key] = v;
    return v;
  }

  std::string choice(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
    used_.insert(key);
    std::string v = def;
    if (j_ && j_->contains(key)) {
      if (!(*j_)[key].is_string()) {
        diag_->push_back(path(key) + ": expected a string");
        return def;
      }
      v = (*j_)[key].get<std::string>();
    }
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
      diag_->push_back(path(key) + ": '" + v + "' is not one of {" + opts + "}");
    }
    resolved_[key] = v;
    return v;
  }

  std::optional<std::string> text(const std::string& key) {
    used_.insert(key);
    if (!j_ || !j_->contains(key)) return std::nullopt;
    if (!(*j_)[key].is_string()) {
      diag_->push_back(path(key) + ": expected a string");
      return std::nullopt;
    }
    resolved_[key] = (*j_)[key];
    return (*j_)[key].get<std::string>();
  }

  bool flag(const std::string& key, bool def) {
    used_.insert(key);
    bool v = def;
    if (j_ && j_->contains(key)) {
      if (!(*j_)[key].is_boolean())
        diag_->push_back(path(key) + ": expected true or false");
      else
        v = (*j_)[key].get<bool>();
    }
    resolved_[key] = v;
    return v;
  }

  const json* raw(const std::string& key) {
    used_.insert(key);
    return (j_ && j_->contains(key)) ? &(*j_)[key] : nullptr;
  }

  /// Flags keys that were never read (typos, wrong units).
  void finish() {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!used_.count(it.key())) diag_->push_back(path(it.key()) + ": unknown key");
  }

  const json& resolved() const { return resolved_; }

 private:
  const json* j_;
  std::string prefix_;
  Diagnostics* diag_;
  std::set<std::string> used_;
  json resolved_ = json::object();
};

inline const json* sub(const json& root, const char* key) {
  return (root.is_object() && root.contains(key)) ? &root[key] : nullptr;
}

// --- parameter blocks ------------------------------------------------------------------

struct ModelParams {
  GaussianModel model;
  json resolved;
};

inline ModelParams parse_model(const json& root, Diagnostics& d) {
  Block b(sub(root, "model"), "model", &d);
  ModelParams p;
  const double lambda = b.number("center_wavelength_nm", 1582.0, Block::Check::Positive);
  p.model.omega0 = lambda > 0.0 ? wavelength_to_omega(lambda) : 1.0;
  p.model.sigma = b.number("sigma_rad_per_ps", 0.8, Block::Check::Positive);
  p.model.delta = b.number("delta_rad_per_ps", 6.4, Block::Check::Positive);
  p.model.phase = b.choice("pmf_phase", "pi", {"pi", "zero"}) == "zero" ? PmfPhase::Zero : PmfPhase::Pi;
  const auto pump = b.choice("pump", "four-bin", {"four-bin", "double-half", "triple-half"});
  p.model.pump = pump == "double-half" ? PumpShape::DoubleHalf : pump == "triple-half" ? PumpShape::TripleHalf : PumpShape::FourBin;
  p.model.n_points = b.count("grid_points", 512, 16);
  b.finish();
  p.resolved = b.resolved();
  return p;
}

struct JsaSource {
  std::string source = "model";
  fs::path path;
  std::string phase_mask = "pi-above-diagonal";
  json resolved;
};

inline std::optional<JsaSource> parse_jsa_source(const ExperimentConfig& cfg, Diagnostics& d, bool required) {
  const json* j = sub(cfg.raw, "jsa");
  if (!j) {
    if (required) d.push_back("missing jsa input: add a 'jsa' block with source 'model', 'jsa_csv' or 'jsi_csv'");
    return std::nullopt;
  }
  Block b(j, "jsa", &d);
  JsaSource s;
  s.source = b.choice("source", "model", {"model", "jsa_csv", "jsi_csv"});
  const auto path = b.text("path");
  s.phase_mask = b.choice("phase_mask", "pi-above-diagonal", {"pi-above-diagonal", "zero"});
  if (s.source != "model") {
    if (!path)
      d.push_back("jsa.path: required for source '" + s.source + "'");
    else {
      s.path = cfg.resolve(*path);
      if (!fs::exists(s.path)) d.push_back("jsa.path: file not found: " + s.path.string());
    }
  }
  b.finish();
  s.resolved = b.resolved();
  return s;
}

struct CrystalParams {
  double length_mm, period_mm, epsilon, xi, min_domain_mm, resolution_mm;
  std::size_t z_points, pmf_points;
  json resolved;
};

inline CrystalParams parse_crystal(const json& root, Diagnostics& d) {
  Block b(sub(root, "crystal"), "crystal", &d);
  CrystalParams c{};
  c.length_mm = b.number("length_mm", 30.0, Block::Check::Positive);
  c.period_mm = b.number("poling_period_um", 23.0, Block::Check::Positive) * 1e-3;
  c.epsilon = b.number("epsilon_per_mm", 1.331, Block::Check::Positive);
  c.xi = b.number("xi_per_mm", c.length_mm > 0.0 ? 4.0 / c.length_mm : 1.0, Block::Check::Positive);
  c.min_domain_mm = b.number("min_domain_um", 9.0, Block::Check::Positive) * 1e-3;
  c.resolution_mm = b.number("resolution_um", 0.5, Block::Check::Positive) * 1e-3;
  c.z_points = b.count("z_points", 4001, 1000);
  c.pmf_points = b.count("pmf_points", 801, 16);
  if (c.resolution_mm > c.min_domain_mm) d.push_back("crystal.resolution_um: must not exceed crystal.min_domain_um");
  if (2.0 * c.min_domain_mm >= c.period_mm)
    d.push_back("crystal.min_domain_um: must be less than half of crystal.poling_period_um");
  b.finish();
  c.resolved = b.resolved();
  return c;
}

struct ShaperParams {
  double center_nm, input_sigma, half_span;
  std::size_t grid_points, n_pixels;
  int max_iter;
  double tol;
  std::vector<GaussianComponent> target;  ///< offsets relative to the centre
  json resolved;
};

inline ShaperParams parse_shaper(const json& root, const GaussianModel& m, Diagnostics& d) {
  Block b(sub(root, "shaper"), "shaper", &d);
  ShaperParams s{};
  s.center_nm = b.number("center_wavelength_nm", omega_to_wavelength(2.0 * m.omega0), Block::Check::Positive);
  s.input_sigma = b.number("input_sigma_rad_per_ps", 15.0, Block::Check::Positive);
  s.half_span = b.number("half_span_rad_per_ps", 40.0, Block::Check::Positive);
  s.grid_points = b.count("grid_points", 1024, 16);
  s.n_pixels = b.count("n_pixels", 128, 1);
  s.max_iter = static_cast<int>(b.count("max_iter", 50, 1));
  s.tol = b.number("tol", 1e-9, Block::Check::Positive);
  if (const json* t = b.raw("target")) {
    if (!t->is_array() || t->empty())
      d.push_back("shaper.target: expected a non-empty array of components");
    else
      for (std::size_t k = 0; k < t->size(); ++k) {
        Block c(&(*t)[k], "shaper.target[" + std::to_string(k) + "]", &d);
        GaussianComponent g;
        g.center = c.number("offset_rad_per_ps", 0.0);
        g.sigma = c.number("sigma_rad_per_ps", m.sigma > 0.0 ? m.sigma : 1.0, Block::Check::Positive);
        g.weight = c.number("weight", 1.0, Block::Check::NonNegative);
        c.finish();
        s.target.push_back(g);
      }
  } else {
    for (double off : m.pump_offsets()) s.target.push_back({off, m.sigma, 1.0, 0.0});
  }
  b.finish();
  s.resolved = b.resolved();
  json tj = json::array();
  for (const auto& g : s.target)
    tj.push_back({{"offset_rad_per_ps", g.center}, {"sigma_rad_per_ps", g.sigma}, {"weight", g.weight}});
  s.resolved["target"] = tj;
  return s;
}

struct HomParams {
  std::size_t delay_points;
  double delay_span_ps;
  bool fit;
  json resolved;
};

inline HomParams parse_hom(const json& root, const GaussianModel& m, Diagnostics& d) {
  Block b(sub(root, "hom"), "hom", &d);
  HomParams h{};
  h.delay_points = b.count("delay_points", 201, 10);
  h.delay_span_ps = b.number("delay_span_ps", m.sigma > 0.0 ? 10.0 / m.sigma : 1.0, Block::Check::Positive);
  h.fit = b.flag("fit", true);
  b.finish();
  h.resolved = b.resolved();
  return h;
}

struct HyperParams {
  double phi;
  std::vector<PolBasis> bases;
  double visibility;
  json resolved;
};

inline HyperParams parse_hyper(const json& root, Diagnostics& d) {
  Block b(sub(root, "hyper"), "hyper", &d);
  HyperParams h{};
  h.phi = b.number("phi_rad", 0.0);
  const auto basis = b.choice("basis", "both", {"HV", "DA", "both"});
  if (basis == "HV") h.bases = {PolBasis::HV};
  else if (basis == "DA") h.bases = {PolBasis::DA};
  else h.bases = {PolBasis::HV, PolBasis::DA};
  h.visibility = b.number("visibility", 1.0, Block::Check::Unit);
  b.finish();
  h.resolved = b.resolved();
  return h;
}

struct TofsParams {
  DispersionSpec spec;
  double n_pairs, ghost_fraction, bin_half_width_ps, crop_half_width_ps;
  bool crop;
  std::size_t denoise_rank;
  json resolved;
};

inline TofsParams parse_tofs(const json& root, const GaussianModel& m, Diagnostics& d) {
  Block b(sub(root, "tofs"), "tofs", &d);
  TofsParams t{};
  t.spec.D_ps_per_nm = b.number("dispersion_ps_per_nm", -1350.0);
  if (t.spec.D_ps_per_nm == 0.0) d.push_back("tofs.dispersion_ps_per_nm: must be nonzero");
  t.spec.lambda_ref_nm = b.number("reference_wavelength_nm", omega_to_wavelength(m.omega0), Block::Check::Positive);
  t.spec.jitter_sigma_ps = b.number("jitter_fwhm_ps", kJitterFwhmPs, Block::Check::NonNegative) / kFwhmPerSigma;
  t.spec.bin_width_ps = b.number("bin_width_ps", 100.0, Block::Check::Positive);
  t.n_pairs = b.number("n_pairs", 1e6, Block::Check::Positive);
  if (t.n_pairs < 1.0) d.push_back("tofs.n_pairs: must be at least 1");
  t.ghost_fraction = b.number("ghost_fraction", 0.0, Block::Check::NonNegative);
  // off by default: the four-bin footprint is wider than one laser period
  t.crop = b.flag("crop_trigger_window", false);
  t.crop_half_width_ps = b.number("crop_half_width_ps", 0.5 * kRepetitionPeriodPs, Block::Check::Positive);
  t.bin_half_width_ps = b.number("bin_half_width_ps", 3500.0, Block::Check::Positive);
  t.denoise_rank = b.count("denoise_rank", 4, 1);
  b.finish();
  t.resolved = b.resolved();
  return t;
}

inline const std::vector<std::string>& bell_names() {
  static const std::vector<std::string> n{"phi+", "phi-", "psi+", "psi-"};
  return n;
}

inline TwoQubitState bell_state(const std::string& name) {
  if (name == "phi-") return phi_minus();
  if (name == "psi+") return psi_plus();
  if (name == "psi-") return psi_minus();
  return phi_plus();
}

struct TomoParams {
  std::optional<fs::path> counts_csv;
  std::string state, target;
  double n_per_basis, visibility;
  bool poisson;
  std::size_t mc_trials;
  json resolved;
};

inline TomoParams parse_tomo(const ExperimentConfig& cfg, Diagnostics& d) {
  Block b(sub(cfg.raw, "tomo"), "tomo", &d);
  TomoParams t{};
  if (const auto p = b.text("counts_csv")) {
    t.counts_csv = cfg.resolve(*p);
    if (!fs::exists(*t.counts_csv)) d.push_back("tomo.counts_csv: file not found: " + t.counts_csv->string());
  }
  t.state = b.choice("state", "phi+", bell_names());
  t.target = b.choice("target", t.state, bell_names());
  t.n_per_basis = b.number("n_per_basis", 1e4, Block::Check::Positive);
  t.visibility = b.number("state_visibility", 1.0, Block::Check::Unit);
  t.poisson = b.flag("poisson", true);
  t.mc_trials = b.count("mc_trials", 100, 0);
  if (t.mc_trials > 0 && t.mc_trials < 50) d.push_back("tomo.mc_trials: use 0 or at least 50");
  b.finish();
  t.resolved = b.resolved();
  return t;
}

// --- execution helpers ---------------------------------------------------------------------

struct Outputs {
  fs::path root;
  std::string prefix;
  std::vector<std::string>* files;

  fs::path file(const std::string& name) const {
    const std::string rel = prefix.empty() ? name : prefix + "/" + name;
    files->push_back(rel);
    return root / rel;
  }
  Outputs sub(const std::string& dir) const { return {root, prefix.empty() ? dir : prefix + "/" + dir, files}; }
};

struct Context {
  const ExperimentConfig* cfg;
  std::uint64_t seed = 0;
};

template <typename Fn>
auto stage(const Context& ctx, const char* module, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    const std::string where = ctx.cfg->source.empty() ? "<built-in defaults>" : ctx.cfg->source.string();
    throw PipelineError(std::string(module) + ": " + e.what() + " (config: " + where + ")");
  }
}

inline JointSpectralAmplitude load_jsa(const Context& ctx, const JsaSource& src, const GaussianModel& m) {
  return stage(ctx, "jsa", [&] {
    if (src.source == "jsa_csv") return io::read_jsa_csv(src.path);
    if (src.source == "jsi_csv")
      return jsa_from_jsi(io::read_jsi_csv(src.path),
                          src.phase_mask == "zero" ? PhaseMask::zero() : PhaseMask::pi_above_diagonal());
    return gaussian_model_jsa(m);
  });
}

inline std::vector<double> delays_of(const HomParams& h) {
  return linspace(-h.delay_span_ps, h.delay_span_ps, h.delay_points);
}

// --- experiments -----------------------------------------------------------------------------

inline json run_design_crystal(const Context& ctx, const CrystalParams& c, const Outputs& out) {
  const auto target = stage(ctx, "crystal", [&] {
    return target_nonlinearity(c.length_mm, kTwoPi / c.period_mm, c.epsilon, c.xi, c.z_points);
  });
  const auto pattern = stage(ctx, "crystal", [&] {
    PolingOptions o;
    o.resolution_mm = c.resolution_mm;
    return synthesize_poling(target, c.min_domain_mm, c.period_mm, o);
  });
  const auto rep = poling_report(pattern, target);
  io::write_poling_csv(out.file("poling.csv"), pattern);
  std::vector<double> re, im;
  for (const auto& g : target.g) re.push_back(g.real()), im.push_back(g.imag());
  io::write_columns(out.file("target_profile.csv"), {"z_mm", "g_real", "g_imag"}, {target.z_mm, re, im});
  const auto dk = pmf_window(target, c.pmf_points);
  const auto realized = pmf_from_poling(pattern, dk);
  const auto ideal = pmf_analytic(dk, target.dk0, target.epsilon, target.xi);
  // realized PMF scaled onto the analytic one for plotting
  cplx num{0.0, 0.0};
  double den = 0.0;
  for (std::size_t i = 0; i < dk.size(); ++i) num += std::conj(realized[i]) * ideal[i], den += std::norm(realized[i]);
  const cplx scale = den > 0.0 ? num / den : cplx{1.0, 0.0};
  std::vector<double> rr, ri, ia;
  for (std::size_t i = 0; i < dk.size(); ++i) {
    const cplx v = realized[i] * scale;
    rr.push_back(v.real()), ri.push_back(v.imag()), ia.push_back(ideal[i].real());
  }
  io::write_columns(out.file("pmf.csv"), {"dk_per_mm", "target", "realized_real", "realized_imag"}, {dk, ia, rr, ri});
  json s = {{"fidelity", rep.fidelity},
            {"domains", rep.n_domains},
            {"min_domain_um", rep.min_domain_mm * 1e3},
            {"max_domain_um", rep.max_domain_mm * 1e3},
            {"antinode_phase_difference_rad", rep.antinode_phase},
            {"design_mismatch_per_mm", target.dk0}};
  io::write_json(out.file("summary.json"), s);
  return s;
}

inline json run_shape_pump(const Context& ctx, const ShaperParams& s, const Outputs& out) {
  return stage(ctx, "spectra", [&] {
    const double wc = wavelength_to_omega(s.center_nm);
    const auto axis = SpectralAxis::centered(wc, s.half_span, s.grid_points);
    std::vector<double> input(axis.size()), target(axis.size());
    std::vector<GaussianComponent> comps = s.target;
    for (auto& g : comps) g.center += wc;
    for (std::size_t i = 0; i < axis.size(); ++i) {
      input[i] = std::exp(-0.5 * biphoton::detail::sqr((axis[i] - wc) / s.input_sigma));
      target[i] = std::norm(PumpEnvelope::raw(comps, axis[i]));
    }
    // scale the target so the largest required transmission is 1
    double ratio = 0.0;
    for (std::size_t i = 0; i < axis.size(); ++i)
      if (input[i] > 0.0) ratio = std::max(ratio, target[i] / input[i]);
    if (ratio > 0.0)
      for (auto& v : target) v /= ratio;
    auto cfg = ShaperConfig::uniform(axis, input, axis.front(), axis.back() + 1e-9 * s.half_span, s.n_pixels);
    const auto res = optimize_shaper(target, cfg, s.max_iter, s.tol);
    io::write_columns(out.file("spectra.csv"), {"omega_rad_per_ps", "input", "target", "shaped"},
                      {axis.values(), input, target, shaped_spectrum(res.config)});
    std::vector<double> lo, hi, idx;
    for (std::size_t p = 0; p < res.config.n_pixels(); ++p) {
      idx.push_back(static_cast<double>(p));
      lo.push_back(res.config.pixel_edges[p]);
      hi.push_back(res.config.pixel_edges[p + 1]);
    }
    io::write_columns(out.file("pixels.csv"), {"pixel", "edge_lo_rad_per_ps", "edge_hi_rad_per_ps", "angle_rad"},
                      {idx, lo, hi, res.config.pixel_angles});
    json j = {{"residual", res.residual},   {"iterations", res.iterations}, {"converged", res.converged},
              {"infeasible", res.infeasible}, {"residual_history", res.residual_history}};
    io::write_json(out.file("summary.json"), j);
    return j;
  });
}

inline json jsa_products(const Context& ctx, const JointSpectralAmplitude& f, const Outputs& out, bool write_jsa) {
  return stage(ctx, "jsa", [&] {
    if (write_jsa) io::write_jsa_csv(out.file("jsa.csv"), f);
    const auto mg = marginals(f);
    io::write_columns(out.file("marginals.csv"), {"omega_rad_per_ps", "signal", "idler"},
                      {f.s_axis.values(), mg.signal, mg.idler});
    const auto s = schmidt_decompose(f, 4);
    std::vector<std::vector<double>> cols{f.s_axis.values()};
    std::vector<std::string> hdr{"omega_rad_per_ps"};
    for (Eigen::Index k = 0; k < s.signal_modes.cols(); ++k) {
      std::vector<double> v(f.s_axis.size());
      for (std::size_t a = 0; a < v.size(); ++a) v[a] = std::norm(s.signal_modes(a, k));
      cols.push_back(v);
      hdr.push_back("signal_mode_" + std::to_string(k) + "_abs2");
    }
    io::write_columns(out.file("schmidt_modes.csv"), hdr, cols);
    auto j = io::schmidt_summary(s);
    io::write_json(out.file("schmidt.json"), j);
    return j;
  });
}

inline json run_intra(const Context& ctx, const JointSpectralAmplitude& f, const GaussianModel& m, const HomParams& h,
                      const Outputs& out, PmfPhase phase) {
  return stage(ctx, "hom", [&] {
    const auto delays = delays_of(h);
    auto tr = intra_pair_trace(f, delays);
    std::vector<double> model(delays.size());
    double maxdev = 0.0;
    for (std::size_t t = 0; t < delays.size(); ++t) {
      model[t] = intra_fit_model(delays[t], m.sigma, m.delta, 1.0, phase);
      maxdev = std::max(maxdev, std::abs(model[t] - tr.probability[t]));
    }
    io::write_columns(out.file("intra_trace.csv"), {"delay_ps", "probability", "closed_form"},
                      {delays, tr.probability, model}, {{"kind", "intra"}, {"pmf_phase", to_string(phase)}});
    json j = {{"p_zero_delay", 0.5 - 0.5 * exchange_overlap(f, 0.0).real()}, {"max_closed_form_deviation", maxdev}};
    if (h.fit) {
      try {
        const auto fit = fit_trace(tr, phase == PmfPhase::Pi ? FitModel::IntraPi : FitModel::IntraZero,
                                   {m.sigma, m.delta, 0.9, 0.5});
        j["fit"] = io::fit_summary(fit);
      } catch (const FitError& e) {
        j["fit"] = io::fit_summary(e.best_so_far());
        j["fit"]["error"] = e.what();
      }
    }
    io::write_json(out.file("intra_summary.json"), j);
    return j;
  });
}

inline json run_inter(const Context& ctx, const JointSpectralAmplitude& f, const GaussianModel& m, const HomParams& h,
                      const Outputs& out) {
  return stage(ctx, "hom", [&] {
    const auto delays = delays_of(h);
    const auto rho = heralded_density(f);
    const auto tr = inter_pair_trace(rho, delays);
    std::vector<double> model(delays.size());
    for (std::size_t t = 0; t < delays.size(); ++t) model[t] = inter_fit_model(delays[t], m.sigma, m.delta, 1.0);
    io::write_columns(out.file("inter_trace.csv"), {"delay_ps", "probability", "closed_form"},
                      {delays, tr.probability, model}, {{"kind", "inter-heralded"}});
    const double p0 = inter_pair_trace(rho, {0.0}).probability[0];
    json j = {{"heralded_purity", rho.purity()}, {"p_zero_delay", p0}, {"visibility", 1.0 - 2.0 * p0}};
    if (h.fit) {
      try {
        j["fit"] = io::fit_summary(fit_trace(tr, FitModel::Inter, {m.sigma, m.delta, 0.5, 0.5}));
      } catch (const FitError& e) {
        j["fit"] = io::fit_summary(e.best_so_far());
        j["fit"]["error"] = e.what();
      }
    }
    io::write_json(out.file("inter_summary.json"), j);
    return j;
  });
}

inline json run_hyper(const Context& ctx, const JointSpectralAmplitude& f, const HyperParams& hp, const HomParams& h,
                      const Outputs& out) {
  return stage(ctx, "hyperhom", [&] {
    const HyperState state{hp.phi, f, ""};
    const auto delays = delays_of(h);
    json j = json::object();
    for (PolBasis b : hp.bases) {
      const auto all = polarised_hom_traces(state, b, delays, hp.visibility);
      json jb = json::object();
      for (const auto& tr : all.traces) {
        io::write_port_pair_csv(out.file(std::string("hyper_") + to_string(b) + "_" + to_string(tr.pair) + ".csv"), tr);
        jb[to_string(tr.pair)] = polarised_hom_trace(state, b, tr.pair, {0.0}, hp.visibility).probability[0];
      }
      j[to_string(b)] = {{"zero_delay", jb}};
    }
    j["phi_rad"] = hp.phi;
    io::write_json(out.file("hyper_summary.json"), j);
    return j;
  });
}

inline json run_tofs(const Context& ctx, const JointSpectralAmplitude& f, const GaussianModel& m, const TofsParams& t,
                     const Outputs& out) {
  const auto jsi = JointSpectralIntensity::of(f);
  TofsOptions opts;
  opts.ghost_fraction = t.ghost_fraction;
  auto hist = stage(ctx, "tofs", [&] { return simulate_tofs(jsi, t.spec, t.n_pairs, ctx.seed, opts); });
  io::write_histogram_csv(out.file("histogram.csv"), hist);
  return stage(ctx, "tofs", [&] {
    if (t.crop) {
      const double h = t.crop_half_width_ps;
      hist = crop_trigger_window(hist, {-h, h, -h, h});
    }
    const auto rec = reconstruct_jsi(hist, t.spec);
    json j = {{"total_counts", hist.total()}, {"dropped_events", hist.dropped}, {"degenerate", rec.degenerate}};
    j["schmidt_number_noiseless"] = schmidt_of_intensity(jsi).K;
    if (!rec.degenerate) {
      const auto ri = rec.as_intensity();
      io::write_jsi_csv(out.file("reconstructed_jsi.csv"), ri);
      j["schmidt_number_reconstructed"] = schmidt_of_intensity(ri).K;
      const auto dn = denoise_lowrank(ri, t.denoise_rank);
      j["schmidt_number_denoised"] = schmidt_of_intensity(dn.jsi).K;
      j["denoise_rank"] = dn.rank_used;
    }
    // the frequency bins of the design: (ws, wi) offsets from the pump model
    std::vector<std::pair<double, double>> bins;
    const double w0 = m.omega0;
    for (double s_off : m.pump_offsets())
      for (double d_off : {-m.delta, m.delta}) bins.emplace_back(w0 + 0.5 * (s_off + d_off), w0 + 0.5 * (s_off - d_off));
    try {
      const auto bc = extract_bins(hist, bin_time_centers(bins, t.spec), t.bin_half_width_ps);
      std::vector<double> ts, ti, tot;
      for (std::size_t k = 0; k < bc.totals.size(); ++k) {
        ts.push_back(bc.regions[k].ts_center);
        ti.push_back(bc.regions[k].ti_center);
        tot.push_back(static_cast<double>(bc.totals[k]));
      }
      io::write_columns(out.file("bin_counts.csv"), {"t_signal_ps", "t_idler_ps", "counts"}, {ts, ti, tot},
                        {{"half_width_ps", io::num(t.bin_half_width_ps)}});
      j["bin_counts"] = tot;
    } catch (const ValidationError& e) {
      j["bin_counts_error"] = e.what();
    }
    io::write_json(out.file("tofs_summary.json"), j);
    return j;
  });
}

inline json run_tomo(const Context& ctx, const TomoParams& t, const Outputs& out) {
  return stage(ctx, "tomo", [&] {
    ProjectionSet set;
    if (t.counts_csv) {
      set = io::read_projection_csv(*t.counts_csv);
    } else {
      set = ProjectionSet::standard();
      const DensityMatrix rho = t.visibility * pure_density(bell_state(t.state)) +
                                (1.0 - t.visibility) * DensityMatrix::Identity() / 4.0;
      set.counts = predicted_counts(rho, set, t.n_per_basis);
      if (t.poisson) set = poisson_resample(set, ctx.seed);
      io::write_projection_csv(out.file("counts.csv"), set);
    }
    const auto r = mle_reconstruct(set);
    io::write_density_csv(out.file("density_matrix.csv"), r.rho);
    const auto target = bell_state(t.target);
    json j = {{"fidelity", fidelity(r.rho, target)},
              {"concurrence", concurrence(r.rho)},
              {"purity", purity(r.rho)},
              {"converged", r.converged},
              {"gradient_norm", r.gradient_norm},
              {"iterations", r.iterations}};
    if (t.mc_trials > 0) {
      const auto mf = monte_carlo_uncertainty(set, static_cast<int>(t.mc_trials), ctx.seed + 1,
                                              [&](const DensityMatrix& d) { return fidelity(d, target); });
      const auto mcc = monte_carlo_uncertainty(set, static_cast<int>(t.mc_trials), ctx.seed + 1,
                                               [](const DensityMatrix& d) { return concurrence(d); });
      j["fidelity_std"] = mf.stddev;
      j["concurrence_std"] = mcc.stddev;
      j["mc_failures"] = mf.failures;
    }
    io::write_json(out.file("tomo_summary.json"), j);
    return j;
  });
}

inline bool is_stochastic(const std::string& experiment, const std::string& figure) {
  return experiment == "tofs-roundtrip" || experiment == "tomo-fit" ||
         (experiment == "figure-repro" && figure == "fig5");
}

/// Parses everything the experiment needs; `plan` receives the resolved parameters.
struct Plan {
  std::string experiment, figure;
  ModelParams model;
  std::optional<JsaSource> jsa;
  CrystalParams crystal{};
  ShaperParams shaper{};
  HomParams hom{};
  HyperParams hyper{};
  TofsParams tofs{};
  TomoParams tomo{};
  json parameters = json::object();
};

inline Plan make_plan(const ExperimentConfig& cfg, Diagnostics& d) {
  Plan p;
  if (!cfg.raw.is_object()) {
    d.push_back("config: expected a JSON object at the top level");
    return p;
  }
  static const std::set<std::string> top{"experiment", "output_dir", "seed",  "figure", "model", "jsa",
                                         "crystal",    "shaper",     "hom",   "hyper",  "tofs",  "tomo"};
  for (auto it = cfg.raw.begin(); it != cfg.raw.end(); ++it)
    if (!top.count(it.key())) d.push_back(it.key() + ": unknown key");
  if (cfg.raw.contains("seed") && !ExperimentConfig::is_seed(cfg.raw["seed"])) d.push_back("seed: expected a non-negative integer");
  if (cfg.raw.contains("output_dir") && !cfg.raw["output_dir"].is_string()) d.push_back("output_dir: expected a string");

  p.experiment = cfg.experiment;
  const auto& kinds = experiment_kinds();
  if (p.experiment.empty()) {
    d.push_back("experiment: missing experiment kind");
    return p;
  }
  if (std::find(kinds.begin(), kinds.end(), p.experiment) == kinds.end()) {
    d.push_back("experiment: unknown kind '" + p.experiment + "'");
    return p;
  }
  if (p.experiment == "figure-repro") {
    if (!cfg.raw.contains("figure") || !cfg.raw["figure"].is_string())
      d.push_back("figure: figure-repro needs a figure name");
    else {
      p.figure = cfg.raw["figure"];
      const auto& f = figure_names();
      if (std::find(f.begin(), f.end(), p.figure) == f.end()) d.push_back("figure: unknown figure '" + p.figure + "'");
    }
  }
  const std::string& e = p.experiment;
  const std::string& fig = p.figure;
  auto uses = [&](std::initializer_list<const char*> exps, std::initializer_list<const char*> figs) {
    for (const char* x : exps)
      if (e == x) return true;
    if (e == "figure-repro")
      for (const char* x : figs)
        if (fig == x) return true;
    return false;
  };

  p.model = parse_model(cfg.raw, d);
  p.parameters["model"] = p.model.resolved;
  const bool needs_jsa = uses({"schmidt", "hom-intra", "hom-inter", "hom-hyper", "tofs-roundtrip"}, {});
  p.jsa = parse_jsa_source(cfg, d, needs_jsa);
  if (p.jsa) p.parameters["jsa"] = p.jsa->resolved;
  if (uses({"design-crystal"}, {"fig1b"})) {
    p.crystal = parse_crystal(cfg.raw, d);
    p.parameters["crystal"] = p.crystal.resolved;
  }
  if (uses({"shape-pump"}, {})) {
    p.shaper = parse_shaper(cfg.raw, p.model.model, d);
    p.parameters["shaper"] = p.shaper.resolved;
  }
  if (uses({"hom-intra", "hom-inter", "hom-hyper"}, {"fig3", "fig6", "figA2"})) {
    p.hom = parse_hom(cfg.raw, p.model.model, d);
    p.parameters["hom"] = p.hom.resolved;
  }
  if (uses({"hom-hyper"}, {})) {
    p.hyper = parse_hyper(cfg.raw, d);
    p.parameters["hyper"] = p.hyper.resolved;
  }
  if (uses({"tofs-roundtrip"}, {"fig5"})) {
    p.tofs = parse_tofs(cfg.raw, p.model.model, d);
    p.parameters["tofs"] = p.tofs.resolved;
  }
  if (uses({"tomo-fit"}, {"fig5"})) {
    p.tomo = parse_tomo(cfg, d);
    p.parameters["tomo"] = p.tomo.resolved;
  }
  const bool needs_seed = is_stochastic(e, fig) && !(e == "tomo-fit" && p.tomo.counts_csv && p.tomo.mc_trials == 0);
  if (needs_seed && !cfg.seed) d.push_back("seed: missing seed for a stochastic experiment (set 'seed' or pass --seed)");
  return p;
}


}  // namespace detail

/// Schema and cross-field checks without running anything. Empty when valid.
inline std::vector<std::string> validate(const ExperimentConfig& cfg) {
  detail::Diagnostics d;
  detail::make_plan(cfg, d);
  return d;
}

struct RunResult {
  std::vector<std::string> files;  ///< relative to the output directory, manifest last
  json manifest;
  json summary;
};

/// Runs the configured experiment and writes its artifacts and manifest.json.
/// Throws PipelineError naming the module and config file on failure.
inline RunResult run(const ExperimentConfig& cfg) {
  detail::Diagnostics diag;
  const auto plan = detail::make_plan(cfg, diag);
  if (!diag.empty()) {
    std::string msg = "invalid config";
    if (!cfg.source.empty()) msg += " " + cfg.source.string();
    for (const auto& s : diag) msg += "\n  " + s;
    throw PipelineError(msg);
  }
  RunResult res;
  detail::Context ctx{&cfg, cfg.seed.value_or(0)};
  const detail::Outputs out{cfg.output_dir, "", &res.files};
  try {
    fs::create_directories(cfg.output_dir);
  } catch (const std::exception& e) {
    throw PipelineError("pipeline-cli: cannot create output directory " + cfg.output_dir.string() + ": " + e.what());
  }
  const auto& m = plan.model.model;
  auto jsa = [&] { return detail::load_jsa(ctx, plan.jsa ? *plan.jsa : detail::JsaSource{}, m); };
  auto model_jsa = [&](PumpShape pump, PmfPhase phase) {
    GaussianModel g = m;
    g.pump = pump;
    g.phase = phase;
    return detail::stage(ctx, "jsa", [&] { return gaussian_model_jsa(g); });
  };

  json summary = json::object();
  const std::string& e = plan.experiment;
  if (e == "design-crystal") {
    summary = detail::run_design_crystal(ctx, plan.crystal, out);
  } else if (e == "shape-pump") {
    summary = detail::run_shape_pump(ctx, plan.shaper, out);
  } else if (e == "simulate-jsa") {
    summary = detail::jsa_products(ctx, detail::stage(ctx, "jsa", [&] { return gaussian_model_jsa(m); }), out, true);
  } else if (e == "schmidt") {
    summary = detail::jsa_products(ctx, jsa(), out, false);
  } else if (e == "hom-intra") {
    summary = detail::run_intra(ctx, jsa(), m, plan.hom, out, m.phase);
  } else if (e == "hom-inter") {
    summary = detail::run_inter(ctx, jsa(), m, plan.hom, out);
  } else if (e == "hom-hyper") {
    summary = detail::run_hyper(ctx, jsa(), plan.hyper, plan.hom, out);
  } else if (e == "tofs-roundtrip") {
    summary = detail::run_tofs(ctx, jsa(), m, plan.tofs, out);
  } else if (e == "tomo-fit") {
    summary = detail::run_tomo(ctx, plan.tomo, out);
  } else if (e == "figure-repro") {
    const std::string& f = plan.figure;
    if (f == "fig1b") {
      summary = detail::run_design_crystal(ctx, plan.crystal, out);
    } else if (f == "fig1c") {
      summary = detail::jsa_products(ctx, model_jsa(PumpShape::FourBin, PmfPhase::Pi), out, true);
    } else if (f == "fig3") {
      const auto fj = model_jsa(PumpShape::FourBin, PmfPhase::Pi);
      summary["intra"] = detail::run_intra(ctx, fj, m, plan.hom, out, PmfPhase::Pi);
      summary["inter"] = detail::run_inter(ctx, fj, m, plan.hom, out);
    } else if (f == "fig4a") {
      summary = detail::jsa_products(ctx, model_jsa(PumpShape::DoubleHalf, m.phase), out, true);
    } else if (f == "fig4b") {
      summary = detail::jsa_products(ctx, model_jsa(PumpShape::TripleHalf, m.phase), out, true);
    } else if (f == "fig5") {
      summary["tofs"] = detail::run_tofs(ctx, model_jsa(PumpShape::FourBin, PmfPhase::Pi), m, plan.tofs, out);
      summary["tomo"] = detail::run_tomo(ctx, plan.tomo, out);
    } else if (f == "fig6") {
      const auto fj = model_jsa(PumpShape::FourBin, PmfPhase::Pi);
      for (double phi : {0.0, kPi}) {
        detail::HyperParams hp{phi, {PolBasis::HV, PolBasis::DA}, 1.0, {}};
        const std::string name = phi == 0.0 ? "psi_plus" : "psi_minus";
        summary[name] = detail::run_hyper(ctx, fj, hp, plan.hom, out.sub(name));
      }
    } else if (f == "figA2") {
      summary["pi"] = detail::run_intra(ctx, model_jsa(PumpShape::FourBin, PmfPhase::Pi), m, plan.hom, out.sub("pi"),
                                        PmfPhase::Pi);
      summary["zero"] = detail::run_intra(ctx, model_jsa(PumpShape::FourBin, PmfPhase::Zero), m, plan.hom,
                                          out.sub("zero"), PmfPhase::Zero);
    }
  }

  res.summary = summary;
  res.files.push_back("manifest.json");
  json manifest = {{"library_version", kVersion}, {"experiment", e}, {"parameters", plan.parameters}, {"files", res.files}};
  if (!plan.figure.empty()) manifest["figure"] = plan.figure;
  if (cfg.seed) manifest["seed"] = *cfg.seed;
  else manifest["seed"] = nullptr;
  io::write_json(cfg.output_dir / "manifest.json", manifest);
  res.manifest = manifest;
  return res;
}

}  // namespace biphoton::pipeline
