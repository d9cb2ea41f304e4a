#pragma once

#include "hedonic/hedonic.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <sstream>

#ifndef HEDONIC_VERSION
#define HEDONIC_VERSION "0.1.0"
#endif

namespace hedonic::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::string data_dir;
  std::string manifest;
  std::string output_dir;
  std::uint64_t seed = 0;
  int k = 5;
  std::string methods = "all";
  std::string combos = "all";
  std::string inputs = "attributes+images";
  std::string split = "0.476,0.262,0.262";
  int jobs = default_jobs();
  int nn_epochs = TrainConfig{}.epochs;
  double nn_lr = TrainConfig{}.learning_rate;
  int nn_patience = TrainConfig{}.patience;
  bool oracle_p_tilde = false;

  std::filesystem::path manifest_path() const {
    return manifest.empty() ? std::filesystem::path(data_dir) / "manifest.json" : std::filesystem::path(manifest);
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.epochs = nn_epochs;
    cfg.learning_rate = nn_lr;
    cfg.patience = nn_patience;
    return cfg;
  }
};

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<Method> parse_methods(const std::string& text) {
  if (text == "all") return {Method::penalized_ols, Method::neural_network, Method::convoluted};
  std::vector<Method> out;
  for (const auto& m : split_list(text)) out.push_back(parse_method(m));
  if (out.empty()) throw ArgumentError("no methods selected");
  return out;
}

inline std::vector<EncoderCombo> select_combos(const std::string& text, const std::vector<std::string>& encoders) {
  if (text == "all") return enumerate_combos(encoders);
  std::vector<EncoderCombo> out;
  for (const auto& label : split_list(text)) out.push_back(parse_combo(label, encoders));
  if (out.empty()) throw ArgumentError("no combos selected");
  return out;
}

inline SplitFractions parse_split(const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 3) throw ArgumentError("--split needs three comma-separated fractions");
  return {csv::parse_double(parts[0]), csv::parse_double(parts[1]), csv::parse_double(parts[2])};
}

inline Json meta_json(const std::string& command, const RunConfig& cfg) {
  Json j;
  j["tool"] = "hedonic";
  j["version"] = HEDONIC_VERSION;
  j["command"] = command;
  j["data_dir"] = cfg.data_dir;
  j["manifest"] = cfg.manifest_path().string();
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["k"] = cfg.k;
  j["methods"] = cfg.methods;
  j["combos"] = cfg.combos;
  j["inputs"] = cfg.inputs;
  j["split"] = cfg.split;
  j["jobs"] = cfg.jobs;
  const auto nn = cfg.train_config();
  j["nn"] = {{"epochs", nn.epochs},
             {"batch_size", nn.batch_size},
             {"learning_rate", nn.learning_rate},
             {"optimizer", "adam"},
             {"beta1", nn.beta1},
             {"beta2", nn.beta2},
             {"patience", nn.patience},
             {"validation_fraction", nn.validation_fraction}};
  const LambdaSearchOptions lasso;
  j["lasso"] = {{"grid_size", lasso.grid_size},
                {"folds", lasso.folds},
                {"min_ratio", lasso.min_ratio},
                {"tol", lasso.lasso.tol},
                {"max_cycles", lasso.lasso.max_cycles}};
  return j;
}

inline LoadResult load(const RunConfig& cfg, std::ostream& err) {
  auto loaded = load_dataset(cfg.manifest_path(), cfg.data_dir);
  err << "loaded " << loaded.dataset.size() << " properties, " << loaded.dataset.blocks.size() << " encoders\n";
  for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
  return loaded;
}

inline int cmd_synth(const GenConfig& gen, const std::string& out_dir, std::ostream& err) {
  const auto data = generate(gen);
  write_synthetic(out_dir, data);
  err << "wrote " << data.dataset.size() << " properties to " << out_dir << '\n';
  return kExitOk;
}

inline int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto loaded = load(cfg, err);
  const auto& ds = loaded.dataset;
  const auto combos = select_combos(cfg.combos, ds.encoders());
  const auto specs = build_spec_grid(combos, parse_methods(cfg.methods), parse_input_selection(cfg.inputs), cfg.seed);
  KFoldOptions opts;
  opts.k = cfg.k;
  opts.seed = cfg.seed;
  opts.jobs = cfg.jobs;
  opts.models.nn = cfg.train_config();
  err << "evaluating " << specs.size() << " specs over " << cfg.k << " folds\n";
  const auto report = kfold_evaluate(ds, specs, opts);

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  write_json(dir / "report.json", to_json(report));
  write_table2_csv(dir / "table2.csv", report);
  const auto table = summary_table(report);
  {
    std::ofstream md(dir / "table2.md", std::ios::binary);
    md << table;
  }
  write_json(dir / "run_meta.json", meta_json("evaluate", cfg));

  std::size_t failures = 0;
  for (const auto& r : report.per_spec)
    if (!r.ok()) {
      ++failures;
      err << "failed: " << r.spec.key() << ": " << *r.error << '\n';
    }
  out << table;
  return failures == report.per_spec.size() ? kExitFailure : kExitOk;
}

inline int cmd_panels(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto loaded = load(cfg, err);
  const auto& ds = loaded.dataset;
  const auto combos = select_combos(cfg.combos, ds.encoders());
  PanelRunOptions opts;
  opts.fractions = parse_split(cfg.split);
  opts.seed = cfg.seed;
  opts.jobs = cfg.jobs;
  opts.nn = cfg.train_config();
  if (cfg.oracle_p_tilde)
    opts.p_tilde_override = [](const Dataset& d, const EncoderCombo&, bool, const RowIndices& rows) {
      return d.log_prices(rows);
    };
  const auto run = run_panels(ds, combos, opts);
  if (!run.split.balanced)
    err << "warning: split not balanced on mean log price after " << run.split.draws << " draws\n";
  for (const auto& e : run.errors) err << "failed: " << e << '\n';

  EvaluationReport report;
  report.seed = cfg.seed;
  report.panels = run.results;
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  write_json(dir / "report.json", to_json(report));
  write_table1_csv(dir / "table1.csv", run.results);
  const auto table = table1_markdown(run.results);
  {
    std::ofstream md(dir / "table1.md", std::ios::binary);
    md << table;
  }
  Json splits;
  splits["train"] = ds.ids(run.split.train);
  splits["ols_half"] = ds.ids(run.split.ols_half);
  splits["eval_half"] = ds.ids(run.split.eval_half);
  splits["draws"] = run.split.draws;
  splits["balanced"] = run.split.balanced;
  write_json(dir / "splits.json", splits);
  write_json(dir / "run_meta.json", meta_json("panels", cfg));
  out << table;
  return run.results.empty() ? kExitFailure : kExitOk;
}

inline int cmd_inspect(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto loaded = load(cfg, err);
  const auto& ds = loaded.dataset;
  const auto y = ds.log_prices(iota_rows(ds.size()));
  std::set<std::string> clusters;
  for (const auto& r : ds.records) clusters.insert(r.cluster);
  out << "| Item | Value |\n|---|---|\n";
  out << "| properties | " << ds.size() << " |\n";
  out << "| attribute rows | " << loaded.join.attribute_rows << " |\n";
  out << "| ids dropped by join | " << loaded.join.dropped << " |\n";
  out << "| clusters | " << clusters.size() << " |\n";
  out << "| mean log price | " << fixed(y.mean()) << " |\n";
  out << "| attributes | " << ds.attribute_count() << " |\n";
  for (const auto& [name, block] : ds.blocks) out << "| " << name << " columns | " << block.width() << " |\n";
  out << "| combos | " << enumerate_combos(ds.encoders()).size() << " |\n";
  return kExitOk;
}

/// Entry point shared by the binary and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Hedonic house-price pipeline with image encoder features"};
  app.require_subcommand(1);

  GenConfig gen;
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  int classifier_width = 64;
  int panoptic_width = 32;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--n", gen.n, "Number of properties")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Random seed")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--signal", gen.signal_strength, "Share of price variance carried by image factors")
      ->check(CLI::Range(0.0, 0.999));
  synth->add_option("--noise-sd", gen.noise_sd, "Idiosyncratic log-price noise")->check(CLI::NonNegativeNumber);
  synth->add_option("--attributes", gen.attributes, "Number of listing attributes")->check(CLI::PositiveNumber);
  synth->add_option("--clusters", gen.n_clusters, "Number of location clusters")->check(CLI::Range(2, 100000));
  synth->add_option("--classifier-width", classifier_width, "Categories per classifier encoder")
      ->check(CLI::Range(2, 100000));
  synth->add_option("--panoptic-width", panoptic_width, "Categories per panoptic encoder")
      ->check(CLI::Range(2, 100000));

  RunConfig cfg;
  const auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--data", cfg.data_dir, "Dataset directory")->required();
    sub->add_option("--manifest", cfg.manifest, "Manifest path (default: <data>/manifest.json)");
    if (needs_out) {
      sub->add_option("--out", cfg.output_dir, "Output directory")->required();
      sub->add_option("--seed", cfg.seed, "Random seed")->required();
      sub->add_option("--combos", cfg.combos, "'all' or comma-separated combo labels (e.g. resnet50,resnet50+vgg16,tout)");
      sub->add_option("--jobs", cfg.jobs, "Worker threads")->check(CLI::PositiveNumber);
      sub->add_option("--nn-epochs", cfg.nn_epochs, "Maximum network epochs")->check(CLI::PositiveNumber);
      sub->add_option("--nn-lr", cfg.nn_lr, "Network learning rate")->check(CLI::PositiveNumber);
      sub->add_option("--nn-patience", cfg.nn_patience, "Early-stopping patience")->check(CLI::PositiveNumber);
    }
  };
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated MSE comparison");
  add_common(evaluate, true);
  evaluate->add_option("--k", cfg.k, "Number of folds")->check(CLI::Range(2, 1000));
  evaluate->add_option("--methods", cfg.methods, "'all' or comma-separated: pols, nn, conv");
  evaluate->add_option("--inputs", cfg.inputs, "images, attributes+images or both")
      ->check(CLI::IsMember({"images", "attributes+images", "both"}));
  auto* panels = app.add_subcommand("panels", "In-sample regressions of price on predicted price");
  add_common(panels, true);
  panels->add_option("--split", cfg.split, "Train, OLS and evaluation fractions");
  panels->add_flag("--oracle-p-tilde", cfg.oracle_p_tilde, "Use the true price as p~ (testing)")->group("");
  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset");
  add_common(inspect, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) {
      gen.seed = synth_seed;
      gen.encoders = default_synthetic_encoders(classifier_width, panoptic_width);
      return cmd_synth(gen, synth_out, err);
    }
    if (*evaluate) return cmd_evaluate(cfg, out, err);
    if (*panels) return cmd_panels(cfg, out, err);
    if (*inspect) return cmd_inspect(cfg, out, err);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace hedonic::cli
