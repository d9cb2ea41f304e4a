#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hedonic {

using Index = Eigen::Index;
using RowIndices = std::vector<Index>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A precondition on arguments was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// The six pretrained encoders used by default. The pipeline itself only
/// relies on the names listed in a dataset's manifest.
inline const std::vector<std::string>& default_encoders() {
  static const std::vector<std::string> names = {
      "ade20k_panoptic", "coco_panoptic", "inception",
      "mobilenet",       "resnet50",      "vgg16"};
  return names;
}

inline constexpr char kColumnSeparator = ':';

/// One home.
struct PropertyRecord {
  std::string id;
  double log_price = 0.0;
  std::vector<double> attributes;
  std::string cluster;

  bool operator==(const PropertyRecord&) const = default;
};

enum class ColumnKind { confidence, count, proportion };

inline std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::confidence: return "confidence";
    case ColumnKind::count: return "count";
    case ColumnKind::proportion: return "proportion";
  }
  return "confidence";
}

inline ColumnKind parse_column_kind(std::string_view text) {
  if (text == "confidence") return ColumnKind::confidence;
  if (text == "count") return ColumnKind::count;
  if (text == "proportion") return ColumnKind::proportion;
  throw DataError("unknown column kind '" + std::string(text) + "'");
}

/// One encoder's features for every property of a dataset. Rows are
/// aligned with `ids`.
struct FeatureBlock {
  std::string encoder_name;
  std::vector<std::string> columns;
  std::vector<ColumnKind> kinds;
  std::vector<std::string> ids;
  Eigen::MatrixXd values;

  Index width() const { return static_cast<Index>(columns.size()); }
};

enum class ComboKind { single, pair, tout_ensemble };

inline std::string_view to_string(ComboKind kind) {
  switch (kind) {
    case ComboKind::single: return "single";
    case ComboKind::pair: return "pair";
    case ComboKind::tout_ensemble: return "tout_ensemble";
  }
  return "single";
}

/// A set of encoders defining one model variant. Members are kept sorted so
/// that identity does not depend on construction order.
class EncoderCombo {
 public:
  EncoderCombo() = default;
  EncoderCombo(std::vector<std::string> members, ComboKind kind)
      : members_(std::move(members)), kind_(kind) {
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
    if (members_.empty()) throw ArgumentError("encoder combo needs at least one member");
    if (kind_ == ComboKind::single && members_.size() != 1)
      throw ArgumentError("single combo needs exactly one encoder");
    if (kind_ == ComboKind::pair && members_.size() != 2)
      throw ArgumentError("pair combo needs exactly two distinct encoders");
  }

  static EncoderCombo single(std::string name) { return {{std::move(name)}, ComboKind::single}; }
  static EncoderCombo pair(std::string a, std::string b) {
    return {{std::move(a), std::move(b)}, ComboKind::pair};
  }
  static EncoderCombo tout(std::vector<std::string> all) {
    return {std::move(all), ComboKind::tout_ensemble};
  }

  const std::vector<std::string>& members() const { return members_; }
  ComboKind kind() const { return kind_; }

  /// Stable label: "tout" for the full ensemble, otherwise members joined by '+'.
  std::string id() const {
    if (kind_ == ComboKind::tout_ensemble) return "tout";
    std::string out;
    for (const auto& m : members_) {
      if (!out.empty()) out += '+';
      out += m;
    }
    return out;
  }

  bool operator==(const EncoderCombo& other) const {
    return members_ == other.members_ && kind_ == other.kind_;
  }
  bool operator<(const EncoderCombo& other) const {
    if (kind_ != other.kind_) return kind_ < other.kind_;
    return members_ < other.members_;
  }

 private:
  std::vector<std::string> members_;
  ComboKind kind_ = ComboKind::single;
};

struct ColumnScaling {
  double mean = 0.0;
  double scale = 1.0;
  bool operator==(const ColumnScaling&) const = default;
};

using Standardization = std::vector<ColumnScaling>;

/// Applies per-column (x - mean) / scale.
inline Eigen::MatrixXd apply_standardization(const Standardization& s, const Eigen::MatrixXd& raw) {
  if (static_cast<Index>(s.size()) != raw.cols())
    throw ArgumentError("standardization width " + std::to_string(s.size()) +
                        " does not match matrix width " + std::to_string(raw.cols()));
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Index j = 0; j < raw.cols(); ++j) {
    const double mean = s[static_cast<std::size_t>(j)].mean;
    const double scale = s[static_cast<std::size_t>(j)].scale;
    for (Index i = 0; i < raw.rows(); ++i) out(i, j) = (raw(i, j) - mean) / scale;
  }
  return out;
}

/// Regressor matrix with aligned targets and row metadata.
struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<std::string> column_names;
  Eigen::VectorXd y;
  std::vector<std::string> ids;
  std::vector<std::string> clusters;
  std::optional<Standardization> standardization;
  std::vector<std::string> dropped_columns;

  Index rows() const { return X.rows(); }
  Index cols() const { return X.cols(); }

  /// Brings raw (original-unit) rows into this matrix's column space.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != X.cols())
      throw ArgumentError("expected " + std::to_string(X.cols()) + " columns, got " +
                          std::to_string(raw.cols()));
    if (!standardization) return raw;
    return apply_standardization(*standardization, raw);
  }
};

enum class Method { penalized_ols, neural_network, convoluted };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::penalized_ols: return "penalized_ols";
    case Method::neural_network: return "neural_network";
    case Method::convoluted: return "convoluted";
  }
  return "penalized_ols";
}

inline Method parse_method(std::string_view text) {
  if (text == "penalized_ols" || text == "pols") return Method::penalized_ols;
  if (text == "neural_network" || text == "nn") return Method::neural_network;
  if (text == "convoluted" || text == "conv") return Method::convoluted;
  throw ArgumentError("unknown method '" + std::string(text) + "'");
}

/// One model variant: method, encoder inputs, and where attributes enter.
struct ModelSpec {
  Method method = Method::penalized_ols;
  std::optional<EncoderCombo> combo;
  bool attributes_in_nn = false;
  bool attributes_in_ols = false;
  std::uint64_t seed = 0;

  bool operator==(const ModelSpec&) const = default;

  std::string combo_id() const { return combo ? combo->id() : std::string("attributes_only"); }

  std::string key() const {
    return std::string(to_string(method)) + "|" + combo_id() + "|nn_att=" +
           (attributes_in_nn ? "1" : "0") + "|ols_att=" + (attributes_in_ols ? "1" : "0");
  }

  void validate() const {
    switch (method) {
      case Method::penalized_ols:
        if (attributes_in_nn) throw ArgumentError("penalized OLS spec cannot set attributes_in_nn");
        if (!combo && !attributes_in_ols)
          throw ArgumentError("penalized OLS spec has no regressors");
        break;
      case Method::neural_network:
        if (attributes_in_ols)
          throw ArgumentError("neural network spec cannot set attributes_in_ols");
        if (!combo && !attributes_in_nn) throw ArgumentError("neural network spec has no inputs");
        break;
      case Method::convoluted:
        if (!combo && !attributes_in_nn)
          throw ArgumentError("convoluted spec needs image features or attributes in the network");
        break;
    }
  }
};

/// Summary-table column of a spec.
inline std::string method_column(const ModelSpec& spec) {
  if (spec.method != Method::convoluted) return std::string(to_string(spec.method));
  return spec.attributes_in_nn ? "convoluted_att_p" : "convoluted_no_att_p";
}

/// Summary-table row of a spec.
inline std::string input_set(const ModelSpec& spec) {
  if (!spec.combo) return "attributes";
  const bool with_attributes = spec.method == Method::neural_network ? spec.attributes_in_nn
                                                                     : spec.attributes_in_ols;
  return with_attributes ? "attributes+images" : "images";
}

struct SpecResult {
  ModelSpec spec;
  double mse = 0.0;
  std::vector<double> fold_mses;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

struct AggregateCell {
  std::string method_column;
  std::string input_set;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::optional<double> tout;
  int n_specs = 0;
};

struct PanelResult {
  int panel = 1;
  std::string combo;
  double beta = 0.0;
  double se_clustered = 0.0;
  double p_value = 1.0;
  double r_squared = 0.0;
  Index n = 0;
};

struct EvaluationReport {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<SpecResult> per_spec;
  std::vector<AggregateCell> aggregates;
  std::vector<PanelResult> panels;
};

}  // namespace hedonic
