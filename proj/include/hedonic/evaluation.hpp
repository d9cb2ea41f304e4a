#pragma once

#include "hedonic/convoluted.hpp"
#include "hedonic/feature_store.hpp"
#include "hedonic/linear_models.hpp"
#include "hedonic/mlp.hpp"
#include "hedonic/parallel.hpp"
#include "hedonic/random.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <functional>
#include <set>

namespace hedonic {

/// (1/N) Σ (actual − predicted)².
inline double mse(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted) {
  if (actual.size() != predicted.size())
    throw ArgumentError("mse: length mismatch (" + std::to_string(actual.size()) + " vs " +
                        std::to_string(predicted.size()) + ")");
  if (actual.size() == 0) throw ArgumentError("mse: empty vectors");
  return (actual - predicted).squaredNorm() / static_cast<double>(actual.size());
}

struct FoldPartition {
  int k = 0;
  std::vector<RowIndices> folds;

  RowIndices training_rows(int fold) const {
    RowIndices rows;
    for (int f = 0; f < k; ++f)
      if (f != fold) rows.insert(rows.end(), folds[static_cast<std::size_t>(f)].begin(), folds[static_cast<std::size_t>(f)].end());
    std::sort(rows.begin(), rows.end());
    return rows;
  }
};

/// Seeded uniform shuffle dealt round-robin into k folds.
inline FoldPartition make_folds(Index n, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("k must be >= 2");
  if (n < k) throw ArgumentError("fewer rows than folds");
  FoldPartition p;
  p.k = k;
  p.folds.resize(static_cast<std::size_t>(k));
  RowIndices order = iota_rows(n);
  Rng rng(seed);
  shuffle_rows(order, rng);
  for (std::size_t i = 0; i < order.size(); ++i) p.folds[i % static_cast<std::size_t>(k)].push_back(order[i]);
  for (auto& f : p.folds) std::sort(f.begin(), f.end());
  return p;
}

/// Settings shared by every model fit of an evaluation run.
struct ModelSettings {
  LambdaSearchOptions lasso;
  TrainConfig nn;
  /// Share of a fold's training rows given to the convoluted network; the
  /// rest fits the stage-2 OLS.
  double conv_nn_fraction = 0.7;
};

/// Fits `spec` on `train` rows and predicts log price for `test` rows.
using SpecFitter = std::function<Eigen::VectorXd(const Dataset&, const ModelSpec&, const RowIndices& train,
                                                 const RowIndices& test, std::uint64_t seed)>;

inline Eigen::VectorXd fit_and_predict(const Dataset& ds, const ModelSpec& spec, const RowIndices& train_rows,
                                       const RowIndices& test_rows, std::uint64_t seed, const ModelSettings& s) {
  spec.validate();
  switch (spec.method) {
    case Method::penalized_ols: {
      const auto dm = assemble_design_matrix(ds, spec.combo, spec.attributes_in_ols, true, train_rows);
      const auto fit = fit_penalized_ols(dm, s.lasso, seed);
      return predict(fit, extract_columns(ds, dm.column_names, test_rows));
    }
    case Method::neural_network: {
      const auto dm = assemble_design_matrix(ds, spec.combo, spec.attributes_in_nn, true, train_rows);
      TrainConfig cfg = s.nn;
      cfg.seed = mix_seed(seed, 1);
      const auto trained = train(init_network(dm.cols(), mix_seed(seed, 0)), dm, cfg);
      return forward(trained.network, transform_rows(ds, dm, test_rows));
    }
    case Method::convoluted: {
      const auto split = internal_split(train_rows, test_rows, s.conv_nn_fraction, mix_seed(seed, 2));
      ModelSpec seeded = spec;
      seeded.seed = seed;
      const auto model = fit_convoluted(ds, seeded, split, s.nn);
      return predict_convoluted(model, ds, test_rows);
    }
  }
  throw ArgumentError("unknown method");
}

enum class InputSelection { images, attributes_and_images, both };

inline InputSelection parse_input_selection(std::string_view text) {
  if (text == "images") return InputSelection::images;
  if (text == "attributes+images") return InputSelection::attributes_and_images;
  if (text == "both") return InputSelection::both;
  throw ArgumentError("inputs must be images, attributes+images or both");
}

/// Attribute-only baselines first, then for every combo: penalized OLS and
/// network once per input set, convoluted once per input set with and
/// without attributes in p̃.
inline std::vector<ModelSpec> build_spec_grid(const std::vector<EncoderCombo>& combos,
                                              const std::vector<Method>& methods, InputSelection inputs,
                                              std::uint64_t seed) {
  const auto has = [&](Method m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
  std::vector<bool> attribute_flags;
  if (inputs != InputSelection::attributes_and_images) attribute_flags.push_back(false);
  if (inputs != InputSelection::images) attribute_flags.push_back(true);

  std::vector<ModelSpec> specs;
  const auto add = [&](ModelSpec s) {
    s.seed = mix_seed(seed, stable_hash(s.key()));
    specs.push_back(std::move(s));
  };
  if (has(Method::penalized_ols)) add({Method::penalized_ols, std::nullopt, false, true, 0});
  if (has(Method::neural_network)) add({Method::neural_network, std::nullopt, true, false, 0});
  if (has(Method::convoluted)) add({Method::convoluted, std::nullopt, true, true, 0});
  for (const auto& combo : combos) {
    for (bool att : attribute_flags) {
      if (has(Method::penalized_ols)) add({Method::penalized_ols, combo, false, att, 0});
      if (has(Method::neural_network)) add({Method::neural_network, combo, att, false, 0});
      if (has(Method::convoluted)) {
        add({Method::convoluted, combo, false, att, 0});
        add({Method::convoluted, combo, true, att, 0});
      }
    }
  }
  return specs;
}

inline const std::vector<std::string>& method_columns() {
  static const std::vector<std::string> cols = {"penalized_ols", "neural_network", "convoluted_no_att_p",
                                                "convoluted_att_p"};
  return cols;
}

inline const std::vector<std::string>& input_sets() {
  static const std::vector<std::string> rows = {"attributes", "images", "attributes+images"};
  return rows;
}

/// Min/mean/max of fold-mean MSE per (method column, input set), over the
/// specs that fitted successfully.
inline std::vector<AggregateCell> aggregate_results(const std::vector<SpecResult>& results) {
  std::vector<AggregateCell> cells;
  for (const auto& column : method_columns()) {
    for (const auto& row : input_sets()) {
      AggregateCell cell;
      cell.method_column = column;
      cell.input_set = row;
      double sum = 0.0;
      for (const auto& r : results) {
        if (!r.ok() || method_column(r.spec) != column || input_set(r.spec) != row) continue;
        if (cell.n_specs == 0) cell.min = cell.max = r.mse;
        cell.min = std::min(cell.min, r.mse);
        cell.max = std::max(cell.max, r.mse);
        sum += r.mse;
        ++cell.n_specs;
        if (r.spec.combo && r.spec.combo->kind() == ComboKind::tout_ensemble) cell.tout = r.mse;
      }
      if (cell.n_specs == 0) continue;
      cell.mean = sum / cell.n_specs;
      cell.mean = std::clamp(cell.mean, cell.min, cell.max);
      cells.push_back(cell);
    }
  }
  return cells;
}

struct KFoldOptions {
  int k = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
  ModelSettings models;
};

/// Out-of-sample MSE of every spec over one fold partition shared by all
/// specs. A spec that fails on any fold is recorded with its error.
inline EvaluationReport kfold_evaluate(const Dataset& ds, const std::vector<ModelSpec>& specs,
                                       const KFoldOptions& opts, SpecFitter fitter = {}) {
  for (const auto& s : specs) s.validate();
  if (!fitter) {
    fitter = [settings = opts.models](const Dataset& d, const ModelSpec& s, const RowIndices& tr,
                                      const RowIndices& te, std::uint64_t seed) {
      return fit_and_predict(d, s, tr, te, seed, settings);
    };
  }
  const auto partition = make_folds(ds.size(), opts.k, opts.seed);
  std::vector<RowIndices> training(static_cast<std::size_t>(opts.k));
  std::vector<Eigen::VectorXd> actual(static_cast<std::size_t>(opts.k));
  for (int f = 0; f < opts.k; ++f) {
    training[static_cast<std::size_t>(f)] = partition.training_rows(f);
    actual[static_cast<std::size_t>(f)] = ds.log_prices(partition.folds[static_cast<std::size_t>(f)]);
  }

  const std::size_t k = static_cast<std::size_t>(opts.k);
  std::vector<double> fold_mse(specs.size() * k, 0.0);
  std::vector<std::optional<std::string>> fold_error(specs.size() * k);
  parallel_for(specs.size() * k, opts.jobs, [&](std::size_t task) {
    const std::size_t s = task / k;
    const std::size_t f = task % k;
    const auto seed = mix_seed(specs[s].seed, f);
    try {
      const auto pred = fitter(ds, specs[s], training[f], partition.folds[f], seed);
      fold_mse[task] = mse(actual[f], pred);
      if (!std::isfinite(fold_mse[task])) fold_error[task] = "non-finite MSE on fold " + std::to_string(f);
    } catch (const std::exception& e) {
      fold_error[task] = "fold " + std::to_string(f) + ": " + e.what();
    }
  });

  EvaluationReport report;
  report.k = opts.k;
  report.seed = opts.seed;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    SpecResult r;
    r.spec = specs[s];
    for (std::size_t f = 0; f < k; ++f) {
      if (fold_error[s * k + f] && !r.error) r.error = fold_error[s * k + f];
      r.fold_mses.push_back(fold_mse[s * k + f]);
    }
    if (r.ok()) {
      double sum = 0.0;
      for (double v : r.fold_mses) sum += v;
      r.mse = sum / static_cast<double>(k);
    }
    report.per_spec.push_back(std::move(r));
  }
  report.aggregates = aggregate_results(report.per_spec);
  return report;
}

struct PanelConfig {
  int panel = 1;
  bool attributes_in_regression = false;
  bool attributes_in_p_tilde = false;

  static PanelConfig number(int panel) {
    switch (panel) {
      case 1: return {1, false, false};
      case 2: return {2, false, true};
      case 3: return {3, true, false};
      case 4: return {4, true, true};
    }
    throw ArgumentError("panel must be 1..4");
  }
};

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double two_sided_p(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

/// OLS of log price on p̃ (and attributes for panels 3 and 4) over the
/// evaluation rows, with standard errors clustered on the property cluster.
inline PanelResult panel_regression(const Dataset& ds, const RowIndices& eval_rows, const Eigen::VectorXd& p_tilde,
                                    const PanelConfig& cfg, std::string combo = {}) {
  if (p_tilde.size() != static_cast<Index>(eval_rows.size()))
    throw ArgumentError("p_tilde length does not match evaluation rows");
  const Index n_att = cfg.attributes_in_regression ? ds.attribute_count() : 0;
  Eigen::MatrixXd X(p_tilde.size(), 1 + n_att);
  X.col(0) = p_tilde;
  std::vector<std::string> names{kPTildeColumn};
  if (n_att > 0) {
    X.rightCols(n_att) = ds.attribute_matrix(eval_rows);
    names.insert(names.end(), ds.attribute_names.begin(), ds.attribute_names.end());
  }
  const auto dm = make_design_matrix(ds, std::move(X), std::move(names), eval_rows);
  const auto fit = fit_ols(dm);
  const auto se = cluster_robust_se(dm, fit);

  PanelResult r;
  r.panel = cfg.panel;
  r.combo = std::move(combo);
  r.beta = fit.coefficients(0);
  r.se_clustered = se(1);
  r.n = dm.rows();
  const double sst = (dm.y.array() - dm.y.mean()).square().sum();
  const double ssr = residuals(dm, fit).squaredNorm();
  r.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 0.0;
  const auto clusters = std::set<std::string>(dm.clusters.begin(), dm.clusters.end()).size();
  if (r.se_clustered > 0.0)
    r.p_value = two_sided_p(r.beta / r.se_clustered, static_cast<double>(clusters) - 1.0);
  else
    r.p_value = r.beta != 0.0 ? 0.0 : 1.0;
  return r;
}

/// Supplies p̃ for the evaluation rows instead of fitting a network.
using PTildeOverride = std::function<Eigen::VectorXd(const Dataset&, const EncoderCombo&, bool attributes_in_p_tilde,
                                                     const RowIndices& eval_rows)>;

struct PanelRunOptions {
  SplitFractions fractions;
  std::uint64_t seed = 0;
  int jobs = 1;
  TrainConfig nn;
  PTildeOverride p_tilde_override;
};

struct PanelRun {
  DatasetSplit split;
  std::vector<PanelResult> results;  // ordered by panel, then combo
  std::vector<std::string> errors;
  /// Ids that entered any fitting step, across all combos.
  std::set<std::string> fitted_ids;
};

/// Fits one convoluted stage 1 per (combo, attributes in p̃) on the
/// training part and runs the four panel regressions on the evaluation part.
inline PanelRun run_panels(const Dataset& ds, const std::vector<EncoderCombo>& combos, const PanelRunOptions& opts) {
  PanelRun run;
  run.split = split_dataset(ds, opts.fractions, opts.seed);
  const std::size_t tasks = combos.size() * 2;
  std::vector<std::optional<Eigen::VectorXd>> p_tilde(tasks);
  std::vector<std::vector<std::string>> fitted(tasks);
  std::vector<std::string> errors(tasks);
  parallel_for(tasks, opts.jobs, [&](std::size_t t) {
    const auto& combo = combos[t / 2];
    const bool with_attributes = (t % 2) == 1;
    try {
      if (opts.p_tilde_override) {
        p_tilde[t] = opts.p_tilde_override(ds, combo, with_attributes, run.split.eval_half);
        return;
      }
      ModelSpec spec{Method::convoluted, combo, with_attributes, false, 0};
      spec.seed = mix_seed(opts.seed, stable_hash(spec.key()));
      const auto model = fit_convoluted(ds, spec, run.split, opts.nn);
      p_tilde[t] = stage1_predict(model, ds, run.split.eval_half);
      fitted[t] = model.fitted_ids;
    } catch (const std::exception& e) {
      errors[t] = combo.id() + (with_attributes ? " (attributes in p_tilde)" : "") + ": " + e.what();
    }
  });
  for (std::size_t t = 0; t < tasks; ++t) {
    if (!errors[t].empty()) run.errors.push_back(errors[t]);
    run.fitted_ids.insert(fitted[t].begin(), fitted[t].end());
  }
  for (int panel = 1; panel <= 4; ++panel) {
    const auto cfg = PanelConfig::number(panel);
    for (std::size_t c = 0; c < combos.size(); ++c) {
      const auto& pt = p_tilde[c * 2 + (cfg.attributes_in_p_tilde ? 1 : 0)];
      if (!pt) continue;
      try {
        run.results.push_back(panel_regression(ds, run.split.eval_half, *pt, cfg, combos[c].id()));
      } catch (const std::exception& e) {
        run.errors.push_back("panel " + std::to_string(panel) + " " + combos[c].id() + ": " + e.what());
      }
    }
  }
  return run;
}

}  // namespace hedonic
