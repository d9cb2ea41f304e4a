#pragma once

#include "hedonic/convoluted.hpp"
#include "hedonic/csv.hpp"
#include "hedonic/linear_models.hpp"
#include "hedonic/mlp.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace hedonic {

using Json = nlohmann::ordered_json;

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline Json to_json(const Standardization& s, const std::vector<std::string>& names) {
  Json j = Json::object();
  for (std::size_t i = 0; i < s.size(); ++i) j[names[i]] = {s[i].mean, s[i].scale};
  return j;
}

inline Standardization standardization_from_json(const Json& j, const std::vector<std::string>& names) {
  Standardization s;
  for (const auto& name : names) {
    const auto& pair = j.at(name);
    s.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
  }
  return s;
}

/// {intercept, lambda, coefficients: name -> value, standardization: name -> [mean, scale]}
inline Json to_json(const LinearFit& fit) {
  Json j;
  j["intercept"] = fit.intercept;
  j["lambda"] = fit.lambda;
  Json coefs = Json::object();
  for (std::size_t i = 0; i < fit.column_names.size(); ++i)
    coefs[fit.column_names[i]] = fit.coefficients(static_cast<Index>(i));
  j["coefficients"] = coefs;
  j["standardization"] = fit.standardization ? to_json(*fit.standardization, fit.column_names) : Json(nullptr);
  return j;
}

inline LinearFit linear_fit_from_json(const Json& j) {
  LinearFit fit;
  try {
    fit.intercept = j.at("intercept").get<double>();
    fit.lambda = j.at("lambda").get<double>();
    const auto& coefs = j.at("coefficients");
    fit.coefficients.resize(static_cast<Index>(coefs.size()));
    Index i = 0;
    for (const auto& [name, value] : coefs.items()) {
      fit.column_names.push_back(name);
      fit.coefficients(i++) = value.get<double>();
    }
    if (!j.at("standardization").is_null())
      fit.standardization = standardization_from_json(j.at("standardization"), fit.column_names);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed linear fit: ") + e.what());
  }
  return fit;
}

/// Weights are stored row-major as fan_in x fan_out.
inline Json to_json(const Network& net) {
  Json j;
  j["widths"] = net.widths;
  j["activation"] = std::string(to_string(net.activation));
  j["seed"] = net.seed;
  Json layers = Json::array();
  for (const auto& l : net.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Index r = 0; r < l.weights.rows(); ++r)
      for (Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    layers.push_back({{"weights", w}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  j["layers"] = layers;
  return j;
}

inline Network network_from_json(const Json& j) {
  Network net;
  try {
    net.widths = j.at("widths").get<std::vector<Index>>();
    net.activation = parse_activation(j.at("activation").get<std::string>());
    net.seed = j.at("seed").get<std::uint64_t>();
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != net.widths.size()) throw DataError("network layer count does not match widths");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      const Index rows = net.widths[l];
      const Index cols = net.widths[l + 1];
      if (static_cast<Index>(w.size()) != rows * cols || static_cast<Index>(b.size()) != cols)
        throw DataError("network layer " + std::to_string(l) + " has the wrong shape");
      Layer layer;
      layer.weights.resize(rows, cols);
      for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), cols);
      net.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed network: ") + e.what());
  }
  return net;
}

inline void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  csv::Writer out(path);
  out.row({"epoch", "train_mse", "val_mse"});
  for (const auto& e : history.epochs)
    out.row({std::to_string(e.epoch), csv::format_double(e.train_mse), csv::format_double(e.val_mse)});
}

inline Json to_json(const ModelSpec& spec) {
  Json j;
  j["method"] = std::string(to_string(spec.method));
  if (spec.combo) {
    j["combo"] = spec.combo->id();
    j["members"] = spec.combo->members();
    j["combo_kind"] = std::string(to_string(spec.combo->kind()));
  } else {
    j["combo"] = nullptr;
  }
  j["attributes_in_nn"] = spec.attributes_in_nn;
  j["attributes_in_ols"] = spec.attributes_in_ols;
  j["seed"] = spec.seed;
  return j;
}

inline ModelSpec model_spec_from_json(const Json& j) {
  ModelSpec spec;
  spec.method = parse_method(j.at("method").get<std::string>());
  if (!j.at("combo").is_null()) {
    const auto kind_text = j.at("combo_kind").get<std::string>();
    const ComboKind kind = kind_text == "single" ? ComboKind::single
                           : kind_text == "pair" ? ComboKind::pair
                                                 : ComboKind::tout_ensemble;
    spec.combo = EncoderCombo(j.at("members").get<std::vector<std::string>>(), kind);
  }
  spec.attributes_in_nn = j.at("attributes_in_nn").get<bool>();
  spec.attributes_in_ols = j.at("attributes_in_ols").get<bool>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

/// Writes network.json, stage2.json, splits.json and history.csv.
inline void write_convoluted(const std::filesystem::path& dir, const ConvolutedModel& model) {
  std::filesystem::create_directories(dir);
  Json network = to_json(model.stage1);
  network["inputs"] = {{"columns", model.stage1_inputs.columns},
                       {"attributes", model.stage1_inputs.attributes},
                       {"scaling", to_json(model.stage1_inputs.scaling, model.stage1_inputs.columns)}};
  write_json(dir / "network.json", network);
  Json stage2 = to_json(model.stage2);
  stage2["attribute_columns"] = model.attribute_columns;
  write_json(dir / "stage2.json", stage2);
  Json splits;
  splits["spec"] = to_json(model.spec);
  splits["train"] = model.train_ids;
  splits["ols_half"] = model.ols_ids;
  splits["eval_half"] = model.eval_ids;
  write_json(dir / "splits.json", splits);
  write_history_csv(dir / "history.csv", model.stage1_history);
}

inline ConvolutedModel read_convoluted(const std::filesystem::path& dir) {
  ConvolutedModel model;
  const auto network = read_json(dir / "network.json");
  const auto stage2 = read_json(dir / "stage2.json");
  const auto splits = read_json(dir / "splits.json");
  try {
    model.stage1 = network_from_json(network);
    model.stage1_inputs.columns = network.at("inputs").at("columns").get<std::vector<std::string>>();
    model.stage1_inputs.attributes = network.at("inputs").at("attributes").get<bool>();
    model.stage1_inputs.scaling =
        standardization_from_json(network.at("inputs").at("scaling"), model.stage1_inputs.columns);
    model.stage2 = linear_fit_from_json(stage2);
    model.attribute_columns = stage2.at("attribute_columns").get<std::vector<std::string>>();
    model.spec = model_spec_from_json(splits.at("spec"));
    model.stage1_inputs.combo = model.spec.combo;
    model.train_ids = splits.at("train").get<std::vector<std::string>>();
    model.ols_ids = splits.at("ols_half").get<std::vector<std::string>>();
    model.eval_ids = splits.at("eval_half").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed convoluted model in " + dir.string() + ": " + e.what());
  }
  return model;
}

}  // namespace hedonic
