#pragma once

#include "hedonic/feature_store.hpp"
#include "hedonic/random.hpp"
#include "hedonic/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace hedonic {

enum class EncoderFamily { classifier, panoptic };

struct SyntheticEncoder {
  std::string name;
  EncoderFamily family = EncoderFamily::classifier;
  int categories = 64;  // panoptic encoders emit a count and a proportion per category
};

inline std::vector<SyntheticEncoder> default_synthetic_encoders(int classifier_categories = 64,
                                                                int panoptic_categories = 32) {
  std::vector<SyntheticEncoder> out;
  for (const auto& name : default_encoders()) {
    const bool panoptic = name.find("panoptic") != std::string::npos;
    out.push_back({name, panoptic ? EncoderFamily::panoptic : EncoderFamily::classifier,
                   panoptic ? panoptic_categories : classifier_categories});
  }
  return out;
}

/// Generator settings. Log price is
///   14.07 + γᵀ(attributes − mean) + δᵀz + ε,
/// with z the latent visual factors that the encoders observe.
struct GenConfig {
  Index n = 6887;
  int attributes = 10;
  std::vector<SyntheticEncoder> encoders = default_synthetic_encoders();
  /// Share of log-price variance carried by z.
  double signal_strength = 0.15;
  double noise_sd = 0.19;
  double attribute_variance = 0.20;
  int n_clusters = 96;
  int latent_dim = 6;
  int distractors = 4;
  double feature_noise = 0.5;
  double mean_log_price = 14.07;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw ArgumentError("n must be >= 1");
    if (attributes < 1) throw ArgumentError("need at least one attribute");
    if (encoders.empty()) throw ArgumentError("need at least one encoder");
    for (const auto& e : encoders)
      if (e.categories < 2) throw ArgumentError("encoder " + e.name + " needs at least two categories");
    if (!(signal_strength >= 0.0 && signal_strength < 1.0)) throw ArgumentError("signal strength must be in [0, 1)");
    if (noise_sd < 0.0) throw ArgumentError("noise sd must be >= 0");
    if (n_clusters < 2) throw ArgumentError("need at least two clusters");
    if (latent_dim < 1 || distractors < 0) throw ArgumentError("invalid latent dimensions");
  }
};

struct SyntheticData {
  Dataset dataset;
  SchemaManifest manifest;
  Json truth;
};

namespace detail {

struct AttributeDraw {
  std::string name;
  double coefficient;
};

inline const std::vector<AttributeDraw>& named_attributes() {
  static const std::vector<AttributeDraw> attrs = {
      {"bedrooms", 0.08},          {"bathrooms", 0.10},        {"storeys", 0.05},
      {"finished_basement", 0.06}, {"walkout_basement", 0.04}, {"attached_garage", 0.05},
      {"central_air", 0.03},       {"basement_apartment", 0.05}, {"lot_frontage_ft", 0.006},
      {"house_age_years", -0.001}};
  return attrs;
}

inline double draw_attribute(int j, Rng& rng) {
  const auto bern = [&](double p) { return uniform01(rng) < p ? 1.0 : 0.0; };
  switch (j) {
    case 0: return 1.0 + std::poisson_distribution<int>(2.34)(rng);
    case 1: return 1.0 + std::poisson_distribution<int>(2.06)(rng);
    case 2: {
      const double u = uniform01(rng);
      if (u < 0.33) return 1.0;
      if (u < 0.45) return 1.5;
      if (u < 0.90) return 2.0;
      if (u < 0.95) return 2.5;
      return 3.0;
    }
    case 3: return bern(0.55);
    case 4: return bern(0.20);
    case 5: return bern(0.45);
    case 6: return bern(0.80);
    case 7: return bern(0.15);
    case 8: return std::round(std::exp(std::normal_distribution<double>(std::log(35.0), 0.3)(rng)));
    case 9: return static_cast<double>(5 + static_cast<int>(uniform01(rng) * 96.0));
    default: return std::normal_distribution<double>(0.0, 1.0)(rng);
  }
}

inline Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline std::string numbered(const char* prefix, int k) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, k);
  return buf;
}

}  // namespace detail

/// Draws a dataset with a known price process. Each encoder observes the
/// latent factors through its own loadings (strongly on two factors,
/// weakly on the rest) mixed with encoder-specific distractor factors, so
/// combining encoders recovers more of the price signal than any one alone.
inline SyntheticData generate(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = cfg.n;
  const int A = cfg.attributes;
  const int d = cfg.latent_dim;

  SyntheticData out;
  auto& ds = out.dataset;
  auto& truth = out.truth;

  // Attributes and their price contribution, scaled to the target variance.
  Eigen::MatrixXd attrs(n, A);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < A; ++j) attrs(i, j) = detail::draw_attribute(j, rng);
  Eigen::VectorXd gamma(A);
  for (int j = 0; j < A; ++j) {
    const auto& named = detail::named_attributes();
    const bool is_named = j < static_cast<int>(named.size());
    ds.attribute_names.push_back(is_named ? named[static_cast<std::size_t>(j)].name : detail::numbered("attr", j));
    gamma(j) = is_named ? named[static_cast<std::size_t>(j)].coefficient : 0.05;
  }
  Eigen::VectorXd attr_part = attrs * gamma;
  const double attr_mean = attr_part.mean();
  const double attr_var = n > 1 ? (attr_part.array() - attr_mean).square().sum() / static_cast<double>(n - 1) : 0.0;
  const double gamma_scale = attr_var > 0.0 ? std::sqrt(cfg.attribute_variance / attr_var) : 0.0;
  gamma *= gamma_scale;
  attr_part = (attr_part.array() - attr_mean) * gamma_scale;
  const double intercept = cfg.mean_log_price - attrs.colwise().mean().dot(gamma);

  // Latent visual factors.
  const double noise_var = cfg.noise_sd * cfg.noise_sd;
  const double latent_var = cfg.signal_strength / (1.0 - cfg.signal_strength) * (cfg.attribute_variance + noise_var);
  Eigen::VectorXd delta = detail::gaussian_matrix(d, 1, 1.0, rng).col(0);
  delta *= latent_var > 0.0 ? std::sqrt(latent_var) / delta.norm() : 0.0;
  const Eigen::MatrixXd z = detail::gaussian_matrix(n, d, 1.0, rng);

  Eigen::VectorXd log_price(n);
  for (Index i = 0; i < n; ++i) {
    const double base = cfg.mean_log_price + attr_part(i) + z.row(i).dot(delta);
    double value = base + cfg.noise_sd * normal(rng);
    for (int tries = 0; (value < 12.0 || value > 17.0) && tries < 100; ++tries)
      value = base + cfg.noise_sd * normal(rng);
    log_price(i) = std::clamp(value, 12.0, 17.0);
  }

  const int id_width = std::max(6, static_cast<int>(std::to_string(n).size()));
  for (Index i = 0; i < n; ++i) {
    PropertyRecord rec;
    std::string num = std::to_string(i + 1);
    rec.id = "h" + std::string(static_cast<std::size_t>(id_width) - num.size(), '0') + num;
    rec.log_price = log_price(i);
    for (int j = 0; j < A; ++j) rec.attributes.push_back(attrs(i, j));
    rec.cluster = detail::numbered("fsa", static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.n_clusters)));
    ds.records.push_back(std::move(rec));
  }
  out.manifest.attributes = ds.attribute_names;

  Json encoder_truth = Json::object();
  for (std::size_t e = 0; e < cfg.encoders.size(); ++e) {
    const auto& enc = cfg.encoders[e];
    const int c = enc.categories;
    Eigen::VectorXd visibility = Eigen::VectorXd::Constant(d, 0.3);
    visibility(static_cast<Index>(e % static_cast<std::size_t>(d))) = 1.0;
    visibility(static_cast<Index>((e + 1) % static_cast<std::size_t>(d))) = 1.0;
    Eigen::MatrixXd loadings = detail::gaussian_matrix(c, d, 0.5, rng);
    loadings = loadings * visibility.asDiagonal();
    const Eigen::MatrixXd distractor_loadings = detail::gaussian_matrix(c, cfg.distractors, 0.5, rng);
    const Eigen::VectorXd prevalence = detail::gaussian_matrix(c, 1, 1.0, rng).col(0);
    const Eigen::MatrixXd u = detail::gaussian_matrix(n, cfg.distractors, 1.0, rng);

    Eigen::MatrixXd logits = z * loadings.transpose() + u * distractor_loadings.transpose();
    logits.rowwise() += prevalence.transpose();
    logits += detail::gaussian_matrix(n, c, cfg.feature_noise, rng);

    FeatureBlock block;
    block.encoder_name = enc.name;
    EncoderSchema schema;
    if (enc.family == EncoderFamily::classifier) {
      for (int k = 0; k < c; ++k) {
        schema.columns.push_back(detail::numbered("class", k));
        schema.kinds.push_back(ColumnKind::confidence);
      }
      block.values.resize(n, c);
      for (Index i = 0; i < n; ++i) {
        const Eigen::ArrayXd row = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
        block.values.row(i) = (row / row.sum()).matrix().transpose();
      }
    } else {
      for (int k = 0; k < c; ++k) {
        schema.columns.push_back(detail::numbered("count", k));
        schema.kinds.push_back(ColumnKind::count);
      }
      for (int k = 0; k < c; ++k) {
        schema.columns.push_back(detail::numbered("prop", k));
        schema.kinds.push_back(ColumnKind::proportion);
      }
      block.values.resize(n, 2 * c);
      for (Index i = 0; i < n; ++i) {
        Eigen::ArrayXd weight(c);
        for (int k = 0; k < c; ++k) {
          const double logit = logits(i, k);
          const double rate = std::min(std::exp(-1.0 + 0.8 * logit), 50.0);
          block.values(i, k) = std::poisson_distribution<int>(rate)(rng);
          const double shape = std::clamp(std::exp(logit), 1e-3, 50.0);
          weight(k) = std::gamma_distribution<double>(shape, 1.0)(rng);
        }
        const double g1 = std::gamma_distribution<double>(2.0, 1.0)(rng);
        const double g2 = std::gamma_distribution<double>(3.0, 1.0)(rng);
        const double background = g1 / (g1 + g2);
        const double total = weight.sum();
        for (int k = 0; k < c; ++k)
          block.values(i, c + k) = total > 0.0 ? (1.0 - background) * weight(k) / total : 0.0;
      }
    }
    block.columns = schema.columns;
    block.kinds = schema.kinds;
    block.ids = ds.ids(iota_rows(n));
    out.manifest.encoders.emplace(enc.name, std::move(schema));
    ds.blocks.emplace(enc.name, std::move(block));
    encoder_truth[enc.name] = {{"family", enc.family == EncoderFamily::classifier ? "classifier" : "panoptic"},
                               {"categories", c},
                               {"visibility", std::vector<double>(visibility.data(), visibility.data() + d)},
                               {"loadings", detail::matrix_json(loadings)}};
  }

  Json gamma_json = Json::object();
  for (int j = 0; j < A; ++j) gamma_json[ds.attribute_names[static_cast<std::size_t>(j)]] = gamma(j);
  truth["seed"] = cfg.seed;
  truth["n"] = n;
  truth["intercept"] = intercept;
  truth["gamma"] = gamma_json;
  truth["delta"] = std::vector<double>(delta.data(), delta.data() + d);
  truth["signal_strength"] = cfg.signal_strength;
  truth["noise_sd"] = cfg.noise_sd;
  truth["noise_floor_mse"] = noise_var;
  truth["variance"] = {{"attributes", cfg.attribute_variance}, {"latent", latent_var}, {"noise", noise_var}};
  truth["encoders"] = encoder_truth;
  return out;
}

/// Writes attributes.csv, one CSV per encoder, manifest.json and truth.json.
inline void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  const auto& ds = data.dataset;
  {
    csv::Writer out(dir / "attributes.csv");
    std::vector<std::string> header{"id", "log_price", "cluster"};
    header.insert(header.end(), ds.attribute_names.begin(), ds.attribute_names.end());
    out.row(header);
    for (const auto& r : ds.records) {
      std::vector<std::string> row{r.id, csv::format_double(r.log_price), r.cluster};
      for (double a : r.attributes) row.push_back(csv::format_double(a));
      out.row(row);
    }
  }
  for (const auto& [name, block] : ds.blocks) {
    csv::Writer out(dir / (name + ".csv"));
    std::vector<std::string> header{"id"};
    header.insert(header.end(), block.columns.begin(), block.columns.end());
    out.row(header);
    for (Index i = 0; i < block.values.rows(); ++i) {
      std::vector<std::string> row{block.ids[static_cast<std::size_t>(i)]};
      for (Index j = 0; j < block.values.cols(); ++j) row.push_back(csv::format_double(block.values(i, j)));
      out.row(row);
    }
  }
  write_json(dir / "manifest.json", data.manifest.to_json());
  write_json(dir / "truth.json", data.truth);
}

}  // namespace hedonic
