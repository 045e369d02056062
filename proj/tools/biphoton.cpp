#include <CLI11.hpp>

#include <iostream>

#include "biphoton/pipeline.hpp"

namespace bp = biphoton::pipeline;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string figure;
  bool validate_only = false;
};

int execute(const std::string& experiment, const Options& o) {
  bp::ExperimentConfig cfg;
  try {
    cfg = o.config.empty() ? bp::ExperimentConfig::from_json(nlohmann::json::object())
                           : bp::ExperimentConfig::load(o.config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  if (!cfg.raw.is_object()) {
    std::cerr << "error: " << o.config << ": expected a JSON object\n";
    return 2;
  }
  if (experiment != "validate") {
    if (!cfg.experiment.empty() && cfg.experiment != experiment) {
      std::cerr << "error: " << o.config << " describes experiment '" << cfg.experiment << "' but '" << experiment
                << "' was requested\n";
      return 2;
    }
    cfg.raw["experiment"] = experiment;
    cfg.experiment = experiment;
  }
  if (!o.figure.empty()) cfg.raw["figure"] = o.figure;
  if (o.seed) {
    cfg.raw["seed"] = *o.seed;
    cfg.seed = o.seed;
  }
  if (!o.out.empty()) {
    cfg.raw["output_dir"] = o.out;
    cfg.output_dir = o.out;
  }

  const auto problems = bp::validate(cfg);
  if (!problems.empty()) {
    std::cerr << "invalid config" << (o.config.empty() ? "" : " " + o.config) << ":\n";
    for (const auto& p : problems) std::cerr << "  " << p << '\n';
    return 2;
  }
  if (o.validate_only || experiment == "validate") {
    std::cout << "config ok\n";
    return 0;
  }
  try {
    const auto r = bp::run(cfg);
    std::cout << r.summary.dump(2) << '\n';
    std::cout << "wrote " << r.files.size() << " files to " << cfg.output_dir.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Engineered biphoton simulation and analysis (threads: BIPHOTON_THREADS)"};
  app.set_version_flag("--version", std::string(biphoton::kVersion));
  app.require_subcommand(1);

  Options opts;
  std::string chosen;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opts.config, "JSON experiment config");
    sub->add_option("-o,--out", opts.out, "output directory (overrides output_dir)");
    sub->add_option("-s,--seed", opts.seed, "RNG seed (overrides seed)");
    sub->add_flag("--validate-only", opts.validate_only, "check the config and exit");
    sub->callback([&chosen, name] { chosen = name; });
    return sub;
  };
  add("design-crystal", "synthesize a poling pattern for the two-peak nonlinearity");
  add("shape-pump", "optimize pulse-shaper pixel angles for a target pump spectrum");
  add("simulate-jsa", "build the Gaussian-model JSA with its Schmidt decomposition");
  add("schmidt", "Schmidt decomposition of a JSA from the model or a file");
  add("hom-intra", "HOM interference between the two photons of one pair");
  add("hom-inter", "HOM interference between heralded photons of two pairs");
  add("hom-hyper", "polarisation-resolved HOM of the hyperentangled state");
  add("tofs-roundtrip", "time-of-flight spectrometer simulation and JSI reconstruction");
  add("tomo-fit", "maximum-likelihood polarisation tomography");
  auto* fig = add("figure-repro", "regenerate the data behind a figure");
  fig->add_option("figure", opts.figure, "figure name")->check(CLI::IsMember(bp::figure_names()));
  add("validate", "check a config file without running it");

  CLI11_PARSE(app, argc, argv);
  return execute(chosen, opts);
}
