#pragma once

#include "hedonic/feature_store.hpp"
#include "hedonic/linear_models.hpp"
#include "hedonic/mlp.hpp"
#include "hedonic/random.hpp"

#include <set>

namespace hedonic {

/// Fractions of the network-training, OLS and evaluation parts. The
/// defaults leave about 1,803 of 6,887 homes in the evaluation part.
struct SplitFractions {
  double train = 0.476;
  double ols = 0.262;
  double eval = 0.262;
};

struct DatasetSplit {
  RowIndices train;
  RowIndices ols_half;
  RowIndices eval_half;
  int draws = 1;
  bool balanced = true;
};

class LeakageError : public Error {
 public:
  using Error::Error;
};

struct SplitOptions {
  Index min_part_rows = 10;
  double balance_tolerance_sd = 0.05;
  int max_draws = 100;
};

namespace detail {

inline double mean_price(const Dataset& ds, const RowIndices& rows) {
  double sum = 0.0;
  for (auto r : rows) sum += ds.records[static_cast<std::size_t>(r)].log_price;
  return sum / static_cast<double>(rows.size());
}

}  // namespace detail

/// Seeded three-way split. The draw is repeated until the parts' mean log
/// prices lie within `balance_tolerance_sd` standard deviations of each
/// other; after `max_draws` attempts the last draw is kept with
/// `balanced = false`.
inline DatasetSplit split_dataset(const Dataset& ds, const SplitFractions& f, std::uint64_t seed,
                                  const SplitOptions& opts = {}) {
  if (f.train <= 0.0 || f.ols <= 0.0 || f.eval <= 0.0 || std::abs(f.train + f.ols + f.eval - 1.0) > 1e-9)
    throw ArgumentError("split fractions must be positive and sum to 1");
  const Index n = ds.size();
  const auto n_train = static_cast<Index>(std::llround(f.train * static_cast<double>(n)));
  const auto n_ols = static_cast<Index>(std::llround(f.ols * static_cast<double>(n)));
  const Index n_eval = n - n_train - n_ols;
  if (std::min({n_train, n_ols, n_eval}) < opts.min_part_rows)
    throw ArgumentError("dataset too small to split: " + std::to_string(n) + " rows");

  double sd = 0.0;
  {
    const RowIndices all = iota_rows(n);
    const double mean = detail::mean_price(ds, all);
    for (const auto& r : ds.records) sd += (r.log_price - mean) * (r.log_price - mean);
    sd = std::sqrt(sd / static_cast<double>(std::max<Index>(n - 1, 1)));
  }

  Rng rng(seed);
  DatasetSplit split;
  for (int draw = 1; draw <= opts.max_draws; ++draw) {
    RowIndices order = iota_rows(n);
    shuffle_rows(order, rng);
    split.train.assign(order.begin(), order.begin() + n_train);
    split.ols_half.assign(order.begin() + n_train, order.begin() + n_train + n_ols);
    split.eval_half.assign(order.begin() + n_train + n_ols, order.end());
    split.draws = draw;
    const double means[3] = {detail::mean_price(ds, split.train), detail::mean_price(ds, split.ols_half),
                             detail::mean_price(ds, split.eval_half)};
    const double spread = *std::max_element(means, means + 3) - *std::min_element(means, means + 3);
    split.balanced = spread < opts.balance_tolerance_sd * sd;
    if (split.balanced) break;
  }
  for (auto* part : {&split.train, &split.ols_half, &split.eval_half}) std::sort(part->begin(), part->end());
  return split;
}

/// Splits `rows` into a network-training part (`nn_fraction`) and an OLS
/// part; `held_out` becomes the evaluation part.
inline DatasetSplit internal_split(const RowIndices& rows, const RowIndices& held_out, double nn_fraction,
                                   std::uint64_t seed) {
  if (!(nn_fraction > 0.0 && nn_fraction < 1.0)) throw ArgumentError("network fraction must be in (0, 1)");
  RowIndices order = rows;
  Rng rng(seed);
  shuffle_rows(order, rng);
  const auto n_nn = static_cast<std::size_t>(std::llround(nn_fraction * static_cast<double>(order.size())));
  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_nn));
  split.ols_half.assign(order.begin() + static_cast<std::ptrdiff_t>(n_nn), order.end());
  split.eval_half = held_out;
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.ols_half.begin(), split.ols_half.end());
  return split;
}

inline constexpr const char* kPTildeColumn = "p_tilde";

/// Network input recipe: which columns, and how raw values are scaled.
struct StageOneInputs {
  std::optional<EncoderCombo> combo;
  bool attributes = false;
  std::vector<std::string> columns;
  Standardization scaling;
};

/// Network price prediction used as a regressor in a final OLS.
struct ConvolutedModel {
  ModelSpec spec;
  StageOneInputs stage1_inputs;
  Network stage1;
  TrainHistory stage1_history;
  LinearFit stage2;  // columns: p_tilde, then attributes when used
  std::vector<std::string> attribute_columns;
  std::vector<std::string> train_ids;
  std::vector<std::string> ols_ids;
  std::vector<std::string> eval_ids;
  /// Every id whose data entered a fitting step.
  std::vector<std::string> fitted_ids;
};

/// Stage-1 output p̃ for raw stage-1 input rows.
inline Eigen::VectorXd stage1_predict(const ConvolutedModel& model, const Eigen::MatrixXd& raw_inputs) {
  if (raw_inputs.cols() != static_cast<Index>(model.stage1_inputs.columns.size()))
    throw ArgumentError("stage-1 inputs: expected " + std::to_string(model.stage1_inputs.columns.size()) +
                        " columns, got " + std::to_string(raw_inputs.cols()));
  return forward(model.stage1, apply_standardization(model.stage1_inputs.scaling, raw_inputs));
}

inline Eigen::VectorXd stage1_predict(const ConvolutedModel& model, const Dataset& ds, const RowIndices& rows) {
  return stage1_predict(model, extract_columns(ds, model.stage1_inputs.columns, rows));
}

/// ŷ = α + β·p̃ (+ γ·attributes).
inline Eigen::VectorXd predict_convoluted(const ConvolutedModel& model, const Eigen::MatrixXd& raw_inputs,
                                          const Eigen::MatrixXd& attributes) {
  const Eigen::VectorXd p_tilde = stage1_predict(model, raw_inputs);
  const auto n_att = static_cast<Index>(model.attribute_columns.size());
  if (attributes.cols() != n_att)
    throw ArgumentError("stage-2 attributes: expected " + std::to_string(n_att) + " columns, got " +
                        std::to_string(attributes.cols()));
  if (n_att > 0 && attributes.rows() != p_tilde.size())
    throw ArgumentError("stage-2 attributes: row count does not match stage-1 inputs");
  Eigen::MatrixXd regressors(p_tilde.size(), 1 + n_att);
  regressors.col(0) = p_tilde;
  if (n_att > 0) regressors.rightCols(n_att) = attributes;
  return predict(model.stage2, regressors);
}

inline Eigen::VectorXd predict_convoluted(const ConvolutedModel& model, const Dataset& ds, const RowIndices& rows) {
  const Eigen::MatrixXd inputs = extract_columns(ds, model.stage1_inputs.columns, rows);
  const Eigen::MatrixXd attributes = model.attribute_columns.empty()
                                         ? Eigen::MatrixXd(static_cast<Index>(rows.size()), 0)
                                         : extract_columns(ds, model.attribute_columns, rows);
  return predict_convoluted(model, inputs, attributes);
}

namespace detail {

inline void check_disjoint(const DatasetSplit& split) {
  std::set<Index> seen;
  for (const auto* part : {&split.train, &split.ols_half, &split.eval_half})
    for (auto r : *part)
      if (!seen.insert(r).second) throw LeakageError("split parts overlap at row " + std::to_string(r));
}

}  // namespace detail

/// Stage 1 trains the network on `split.train`; stage 2 regresses log price
/// on p̃ (and attributes when `spec.attributes_in_ols`) over
/// `split.ols_half`. No `split.eval_half` row reaches either stage; this
/// is verified before returning.
inline ConvolutedModel fit_convoluted(const Dataset& ds, const ModelSpec& spec, const DatasetSplit& split,
                                      const TrainConfig& nn_config) {
  if (spec.method != Method::convoluted) throw ArgumentError("fit_convoluted needs a convoluted spec");
  spec.validate();
  detail::check_disjoint(split);

  ConvolutedModel model;
  model.spec = spec;
  model.train_ids = ds.ids(split.train);
  model.ols_ids = ds.ids(split.ols_half);
  model.eval_ids = ds.ids(split.eval_half);

  const DesignMatrix stage1_dm =
      assemble_design_matrix(ds, spec.combo, spec.attributes_in_nn, /*standardize=*/true, split.train);
  model.stage1_inputs = {spec.combo, spec.attributes_in_nn, stage1_dm.column_names, *stage1_dm.standardization};
  TrainConfig cfg = nn_config;
  cfg.seed = mix_seed(spec.seed, 1);
  auto trained = train(init_network(stage1_dm.cols(), mix_seed(spec.seed, 0)), stage1_dm, cfg);
  model.stage1 = std::move(trained.network);
  model.stage1_history = std::move(trained.history);

  const Eigen::VectorXd p_tilde = stage1_predict(model, ds, split.ols_half);
  if (spec.attributes_in_ols) model.attribute_columns = ds.attribute_names;
  const auto n_att = static_cast<Index>(model.attribute_columns.size());
  Eigen::MatrixXd regressors(p_tilde.size(), 1 + n_att);
  regressors.col(0) = p_tilde;
  if (n_att > 0) regressors.rightCols(n_att) = extract_columns(ds, model.attribute_columns, split.ols_half);
  std::vector<std::string> names{kPTildeColumn};
  names.insert(names.end(), model.attribute_columns.begin(), model.attribute_columns.end());
  const DesignMatrix stage2_dm = make_design_matrix(ds, std::move(regressors), std::move(names), split.ols_half);
  if (stage2_dm.X.col(0).maxCoeff() == stage2_dm.X.col(0).minCoeff())
    throw RankDeficientError("stage-1 predictions are constant; p_tilde has zero variance", {kPTildeColumn});
  model.stage2 = fit_ols(stage2_dm);

  model.fitted_ids = stage1_dm.ids;
  model.fitted_ids.insert(model.fitted_ids.end(), stage2_dm.ids.begin(), stage2_dm.ids.end());
  const std::set<std::string> eval(model.eval_ids.begin(), model.eval_ids.end());
  for (const auto& id : model.fitted_ids)
    if (eval.count(id)) throw LeakageError("evaluation id '" + id + "' entered a fitting step");
  return model;
}

}  // namespace hedonic
