#pragma once

#include "hedonic/core_types.hpp"
#include "hedonic/csv.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>

namespace hedonic {

struct EncoderSchema {
  std::vector<std::string> columns;
  std::vector<ColumnKind> kinds;
};

/// Describes the files of one dataset.
///
/// manifest.json layout:
///
///     {
///       "price_column": "log_price",        // optional, default "log_price"
///       "price_units": "log",               // "log" or "dollars"; dollars are logged on read
///       "cluster_column": "cluster",        // optional, default "cluster"
///       "attributes": ["bedrooms", ...],
///       "encoders": {
///         "resnet50": {"columns": ["c0", ...], "kinds": ["confidence", ...]},
///         "coco_panoptic": {"columns": [...], "kinds": "count"}   // one kind for all
///       }
///     }
///
/// Prices are expected to be inflation-adjusted already.
struct SchemaManifest {
  std::string price_column = "log_price";
  bool price_in_dollars = false;
  std::string cluster_column = "cluster";
  std::vector<std::string> attributes;
  std::map<std::string, EncoderSchema> encoders;

  std::vector<std::string> encoder_names() const {
    std::vector<std::string> names;
    for (const auto& [name, schema] : encoders) names.push_back(name);
    return names;
  }

  void validate() const {
    for (const auto& a : attributes)
      if (a.find(kColumnSeparator) != std::string::npos)
        throw DataError("attribute name '" + a + "' contains ':'");
    std::set<std::string> seen_attributes(attributes.begin(), attributes.end());
    if (seen_attributes.size() != attributes.size()) throw DataError("duplicate attribute name");
    for (const auto& [name, schema] : encoders) {
      if (name.empty() || name.find(kColumnSeparator) != std::string::npos)
        throw DataError("invalid encoder name '" + name + "'");
      if (schema.columns.size() != schema.kinds.size())
        throw DataError("encoder " + name + ": columns and kinds differ in length");
      std::set<std::string> seen(schema.columns.begin(), schema.columns.end());
      if (seen.size() != schema.columns.size())
        throw DataError("encoder " + name + ": duplicate column name");
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["price_column"] = price_column;
    j["price_units"] = price_in_dollars ? "dollars" : "log";
    j["cluster_column"] = cluster_column;
    j["attributes"] = attributes;
    nlohmann::ordered_json enc = nlohmann::ordered_json::object();
    for (const auto& [name, schema] : encoders) {
      nlohmann::ordered_json kinds = nlohmann::ordered_json::array();
      for (auto k : schema.kinds) kinds.push_back(std::string(to_string(k)));
      enc[name] = {{"columns", schema.columns}, {"kinds", kinds}};
    }
    j["encoders"] = enc;
    return j;
  }

  static SchemaManifest from_json(const nlohmann::json& j) {
    SchemaManifest m;
    try {
      m.price_column = j.value("price_column", std::string("log_price"));
      const auto units = j.value("price_units", std::string("log"));
      if (units != "log" && units != "dollars")
        throw DataError("price_units must be 'log' or 'dollars'");
      m.price_in_dollars = units == "dollars";
      m.cluster_column = j.value("cluster_column", std::string("cluster"));
      m.attributes = j.at("attributes").get<std::vector<std::string>>();
      for (const auto& [name, spec] : j.at("encoders").items()) {
        EncoderSchema schema;
        schema.columns = spec.at("columns").get<std::vector<std::string>>();
        const auto& kinds = spec.at("kinds");
        if (kinds.is_string()) {
          schema.kinds.assign(schema.columns.size(), parse_column_kind(kinds.get<std::string>()));
        } else {
          for (const auto& k : kinds) schema.kinds.push_back(parse_column_kind(k.get<std::string>()));
        }
        m.encoders.emplace(name, std::move(schema));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed manifest: ") + e.what());
    }
    m.validate();
    return m;
  }

  static SchemaManifest read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
  }
};

/// Properties plus per-encoder feature blocks whose rows are aligned with
/// `records`.
struct Dataset {
  std::vector<PropertyRecord> records;
  std::vector<std::string> attribute_names;
  std::map<std::string, FeatureBlock> blocks;

  Index size() const { return static_cast<Index>(records.size()); }
  Index attribute_count() const { return static_cast<Index>(attribute_names.size()); }

  std::vector<std::string> encoders() const {
    std::vector<std::string> names;
    for (const auto& [name, block] : blocks) names.push_back(name);
    return names;
  }

  const FeatureBlock& block(const std::string& encoder) const {
    const auto it = blocks.find(encoder);
    if (it == blocks.end()) throw ArgumentError("dataset has no encoder '" + encoder + "'");
    return it->second;
  }

  Eigen::VectorXd log_prices(const RowIndices& rows) const {
    Eigen::VectorXd y(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      y(static_cast<Index>(i)) = records[static_cast<std::size_t>(rows[i])].log_price;
    return y;
  }

  Eigen::MatrixXd attribute_matrix(const RowIndices& rows) const {
    Eigen::MatrixXd a(static_cast<Index>(rows.size()), attribute_count());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& rec = records[static_cast<std::size_t>(rows[i])];
      for (Index j = 0; j < attribute_count(); ++j)
        a(static_cast<Index>(i), j) = rec.attributes[static_cast<std::size_t>(j)];
    }
    return a;
  }

  std::vector<std::string> ids(const RowIndices& rows) const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(records[static_cast<std::size_t>(r)].id);
    return out;
  }

  std::vector<std::string> clusters(const RowIndices& rows) const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(records[static_cast<std::size_t>(r)].cluster);
    return out;
  }
};

struct JoinReport {
  std::size_t attribute_rows = 0;
  std::size_t retained = 0;
  std::size_t dropped = 0;
};

struct LoadResult {
  Dataset dataset;
  JoinReport join;
  std::vector<std::string> warnings;
};

namespace detail {

inline void check_feature_row(const std::string& encoder, const EncoderSchema& schema,
                              const std::string& id, const std::vector<double>& row) {
  double confidence_sum = 0.0;
  double proportion_sum = 0.0;
  bool has_confidence = false;
  bool has_proportion = false;
  for (std::size_t j = 0; j < row.size(); ++j) {
    const double v = row[j];
    const auto where = [&] { return encoder + " row '" + id + "' column '" + schema.columns[j] + "'"; };
    if (!std::isfinite(v)) throw DataError(where() + ": non-finite value");
    switch (schema.kinds[j]) {
      case ColumnKind::confidence:
        if (v < 0.0 || v > 1.0) throw DataError(where() + ": confidence outside [0,1]");
        confidence_sum += v;
        has_confidence = true;
        break;
      case ColumnKind::count:
        if (v < 0.0 || v != std::floor(v))
          throw DataError(where() + ": count is not a non-negative integer");
        break;
      case ColumnKind::proportion:
        if (v < 0.0 || v > 1.0) throw DataError(where() + ": proportion outside [0,1]");
        proportion_sum += v;
        has_proportion = true;
        break;
    }
  }
  if (has_confidence && std::abs(confidence_sum - 1.0) > 1e-3)
    throw DataError(encoder + " row '" + id + "': confidence columns sum to " +
                    std::to_string(confidence_sum) + ", expected 1");
  if (has_proportion && proportion_sum > 1.0 + 1e-6)
    throw DataError(encoder + " row '" + id + "': proportion columns sum to " +
                    std::to_string(proportion_sum) + ", expected at most 1");
}

struct RawBlock {
  std::unordered_map<std::string, std::vector<double>> rows;
};

inline RawBlock read_feature_file(const std::filesystem::path& path, const std::string& encoder,
                                  const EncoderSchema& schema) {
  if (!std::filesystem::exists(path)) throw DataError("missing feature file " + path.string());
  const auto table = csv::read(path);
  if (table.header.empty() || table.header.front() != "id")
    throw DataError(path.filename().string() + ": first column must be 'id'");
  const std::vector<std::string> expected_cols(table.header.begin() + 1, table.header.end());
  if (expected_cols != schema.columns)
    throw DataError(path.filename().string() + ": header does not match manifest columns for " +
                    encoder);
  RawBlock raw;
  raw.rows.reserve(table.rows.size());
  for (const auto& fields : table.rows) {
    const std::string& id = fields.front();
    if (id.empty()) throw DataError(path.filename().string() + ": empty id");
    std::vector<double> values(schema.columns.size());
    for (std::size_t j = 0; j < values.size(); ++j) {
      try {
        values[j] = csv::parse_double(fields[j + 1]);
      } catch (const DataError& e) {
        throw DataError(encoder + " row '" + id + "' column '" + schema.columns[j] + "': " + e.what());
      }
    }
    check_feature_row(encoder, schema, id, values);
    if (!raw.rows.emplace(id, std::move(values)).second)
      throw DataError(path.filename().string() + ": duplicate id '" + id + "'");
  }
  return raw;
}

}  // namespace detail

/// Reads `attributes.csv` plus `{encoder}.csv` for each requested encoder
/// (all manifest encoders when `encoders` is empty) and inner-joins them on id.
inline LoadResult load_dataset(const std::filesystem::path& manifest_path,
                               const std::filesystem::path& data_dir,
                               std::vector<std::string> encoders = {}) {
  const auto manifest = SchemaManifest::read(manifest_path);
  if (encoders.empty()) encoders = manifest.encoder_names();
  if (encoders.empty()) throw DataError("manifest lists no encoders");
  std::sort(encoders.begin(), encoders.end());

  const auto attr_path = data_dir / "attributes.csv";
  if (!std::filesystem::exists(attr_path)) throw DataError("missing attributes file " + attr_path.string());
  const auto table = csv::read(attr_path);
  const auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw DataError("attributes.csv has no column '" + name + "'");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  const std::size_t id_col = column_of("id");
  const std::size_t price_col = column_of(manifest.price_column);
  const std::size_t cluster_col = column_of(manifest.cluster_column);
  std::vector<std::size_t> attr_cols;
  for (const auto& a : manifest.attributes) attr_cols.push_back(column_of(a));

  std::map<std::string, PropertyRecord> by_id;
  for (const auto& fields : table.rows) {
    PropertyRecord rec;
    rec.id = fields[id_col];
    if (rec.id.empty()) throw DataError("attributes.csv: empty id");
    const auto where = [&] { return "attributes.csv row '" + rec.id + "'"; };
    try {
      rec.log_price = csv::parse_double(fields[price_col]);
      if (manifest.price_in_dollars) {
        if (!(rec.log_price > 0.0)) throw DataError("price must be positive");
        rec.log_price = std::log(rec.log_price);
      }
      for (auto c : attr_cols) rec.attributes.push_back(csv::parse_double(fields[c]));
    } catch (const DataError& e) {
      throw DataError(where() + ": " + e.what());
    }
    if (!std::isfinite(rec.log_price)) throw DataError(where() + ": log price is not finite");
    for (std::size_t j = 0; j < rec.attributes.size(); ++j)
      if (!std::isfinite(rec.attributes[j]))
        throw DataError(where() + " column '" + manifest.attributes[j] + "': non-finite value");
    rec.cluster = fields[cluster_col];
    if (rec.cluster.empty()) throw DataError(where() + ": empty cluster");
    const std::string id = rec.id;
    if (!by_id.emplace(id, std::move(rec)).second)
      throw DataError("attributes.csv: duplicate id '" + id + "'");
  }

  std::map<std::string, detail::RawBlock> raw_blocks;
  for (const auto& enc : encoders) {
    const auto it = manifest.encoders.find(enc);
    if (it == manifest.encoders.end()) throw DataError("encoder '" + enc + "' not in manifest");
    raw_blocks.emplace(enc, detail::read_feature_file(data_dir / (enc + ".csv"), enc, it->second));
  }

  std::set<std::string> all_ids;
  for (const auto& [id, rec] : by_id) all_ids.insert(id);
  for (const auto& [enc, raw] : raw_blocks)
    for (const auto& [id, row] : raw.rows) all_ids.insert(id);

  LoadResult result;
  auto& ds = result.dataset;
  ds.attribute_names = manifest.attributes;
  // std::map iteration gives canonical id order.
  for (auto& [id, rec] : by_id) {
    const bool everywhere = std::all_of(raw_blocks.begin(), raw_blocks.end(), [&](const auto& kv) {
      return kv.second.rows.count(id) > 0;
    });
    if (everywhere) ds.records.push_back(rec);
  }
  for (const auto& enc : encoders) {
    const auto& schema = manifest.encoders.at(enc);
    FeatureBlock block;
    block.encoder_name = enc;
    block.columns = schema.columns;
    block.kinds = schema.kinds;
    block.values.resize(ds.size(), static_cast<Index>(schema.columns.size()));
    const auto& raw = raw_blocks.at(enc);
    for (Index i = 0; i < ds.size(); ++i) {
      const auto& id = ds.records[static_cast<std::size_t>(i)].id;
      block.ids.push_back(id);
      const auto& row = raw.rows.at(id);
      for (std::size_t j = 0; j < row.size(); ++j) block.values(i, static_cast<Index>(j)) = row[j];
    }
    ds.blocks.emplace(enc, std::move(block));
  }

  result.join.attribute_rows = by_id.size();
  result.join.retained = ds.records.size();
  result.join.dropped = all_ids.size() - ds.records.size();
  if (result.join.dropped > 0)
    result.warnings.push_back("inner join on id: " + std::to_string(result.join.dropped) +
                              (result.join.dropped == 1 ? " id dropped" : " ids dropped"));
  if (ds.records.empty()) throw DataError("no property is present in every input file");
  const auto outside = std::count_if(ds.records.begin(), ds.records.end(), [](const auto& r) {
    return r.log_price < 12.0 || r.log_price > 17.0;
  });
  if (outside > 0)
    result.warnings.push_back(std::to_string(outside) +
                              " log price(s) outside the plausible range [12, 17]");
  return result;
}

/// All singles, all unordered pairs, and the full ensemble, in that order.
/// The ensemble is omitted when it coincides with a single or pair.
inline std::vector<EncoderCombo> enumerate_combos(std::vector<std::string> encoders) {
  std::sort(encoders.begin(), encoders.end());
  encoders.erase(std::unique(encoders.begin(), encoders.end()), encoders.end());
  if (encoders.empty()) throw ArgumentError("need at least one encoder");
  std::vector<EncoderCombo> combos;
  for (const auto& e : encoders) combos.push_back(EncoderCombo::single(e));
  for (std::size_t i = 0; i < encoders.size(); ++i)
    for (std::size_t j = i + 1; j < encoders.size(); ++j)
      combos.push_back(EncoderCombo::pair(encoders[i], encoders[j]));
  if (encoders.size() >= 3) combos.push_back(EncoderCombo::tout(encoders));
  return combos;
}

/// Parses a combo label as produced by EncoderCombo::id().
inline EncoderCombo parse_combo(const std::string& label, const std::vector<std::string>& encoders) {
  if (label == "tout") {
    for (const auto& c : enumerate_combos(encoders))
      if (c.members().size() == std::set<std::string>(encoders.begin(), encoders.end()).size())
        return c;
  }
  std::vector<std::string> members;
  std::size_t start = 0;
  while (true) {
    const auto plus = label.find('+', start);
    members.push_back(label.substr(start, plus - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  for (const auto& m : members)
    if (std::find(encoders.begin(), encoders.end(), m) == encoders.end())
      throw ArgumentError("unknown encoder '" + m + "' in combo '" + label + "'");
  if (members.size() == 1) return EncoderCombo::single(members[0]);
  if (members.size() == 2) return EncoderCombo::pair(members[0], members[1]);
  throw ArgumentError("combo '" + label + "' must be a single, a pair, or 'tout'");
}

/// Column names for a combo (prefixed `{encoder}:`) followed by attributes.
inline std::vector<std::string> candidate_columns(const Dataset& ds, const std::optional<EncoderCombo>& combo,
                                                  bool include_attributes) {
  std::vector<std::string> names;
  if (combo)
    for (const auto& enc : combo->members())
      for (const auto& col : ds.block(enc).columns) names.push_back(enc + kColumnSeparator + col);
  if (include_attributes) names.insert(names.end(), ds.attribute_names.begin(), ds.attribute_names.end());
  return names;
}

/// Raw (unstandardized) values of the named columns for the given rows.
inline Eigen::MatrixXd extract_columns(const Dataset& ds, const std::vector<std::string>& names,
                                       const RowIndices& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(names.size()));
  std::map<std::string, std::unordered_map<std::string, Index>> block_index;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto& name = names[c];
    const auto sep = name.find(kColumnSeparator);
    const Index col = static_cast<Index>(c);
    if (sep == std::string::npos) {
      const auto it = std::find(ds.attribute_names.begin(), ds.attribute_names.end(), name);
      if (it == ds.attribute_names.end()) throw ArgumentError("unknown column '" + name + "'");
      const auto a = static_cast<std::size_t>(it - ds.attribute_names.begin());
      for (std::size_t i = 0; i < rows.size(); ++i)
        out(static_cast<Index>(i), col) = ds.records[static_cast<std::size_t>(rows[i])].attributes[a];
      continue;
    }
    const std::string enc = name.substr(0, sep);
    const auto& block = ds.block(enc);
    auto& index = block_index[enc];
    if (index.empty())
      for (Index j = 0; j < block.width(); ++j) index.emplace(block.columns[static_cast<std::size_t>(j)], j);
    const auto it = index.find(name.substr(sep + 1));
    if (it == index.end()) throw ArgumentError("unknown column '" + name + "'");
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i), col) = block.values(rows[i], it->second);
  }
  return out;
}

/// Wraps an explicit regressor matrix with the targets and metadata of `rows`.
inline DesignMatrix make_design_matrix(const Dataset& ds, Eigen::MatrixXd X, std::vector<std::string> names,
                                       const RowIndices& rows) {
  if (X.rows() != static_cast<Index>(rows.size()) || X.cols() != static_cast<Index>(names.size()))
    throw ArgumentError("design matrix shape does not match rows/names");
  DesignMatrix dm;
  dm.X = std::move(X);
  dm.column_names = std::move(names);
  dm.y = ds.log_prices(rows);
  dm.ids = ds.ids(rows);
  dm.clusters = ds.clusters(rows);
  return dm;
}

/// Assembles the regressors for one (combo, attribute) choice over `rows`
/// (all rows when empty). Constant columns are dropped; with `standardize`
/// each remaining column is centred and scaled by its sample standard
/// deviation, and the parameters are kept for transforming other rows.
inline DesignMatrix assemble_design_matrix(const Dataset& ds, const std::optional<EncoderCombo>& combo,
                                           bool include_attributes, bool standardize,
                                           RowIndices rows = {}) {
  if (!combo && !include_attributes) throw ArgumentError("empty design");
  if (rows.empty()) rows = [&] {
    RowIndices all(static_cast<std::size_t>(ds.size()));
    for (Index i = 0; i < ds.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }();
  const auto names = candidate_columns(ds, combo, include_attributes);
  const Eigen::MatrixXd raw = extract_columns(ds, names, rows);

  std::vector<Index> keep;
  std::vector<std::string> kept_names;
  std::vector<std::string> dropped;
  for (Index j = 0; j < raw.cols(); ++j) {
    if (raw.col(j).maxCoeff() == raw.col(j).minCoeff()) {
      dropped.push_back(names[static_cast<std::size_t>(j)]);
    } else {
      keep.push_back(j);
      kept_names.push_back(names[static_cast<std::size_t>(j)]);
    }
  }
  Eigen::MatrixXd X(raw.rows(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) X.col(static_cast<Index>(j)) = raw.col(keep[j]);

  DesignMatrix dm = make_design_matrix(ds, std::move(X), std::move(kept_names), rows);
  dm.dropped_columns = std::move(dropped);
  if (standardize) {
    if (dm.rows() < 2) throw ArgumentError("standardization needs at least two rows");
    Standardization s(static_cast<std::size_t>(dm.cols()));
    const double n = static_cast<double>(dm.rows());
    for (Index j = 0; j < dm.cols(); ++j) {
      const double mean = dm.X.col(j).sum() / n;
      const double ss = (dm.X.col(j).array() - mean).square().sum();
      s[static_cast<std::size_t>(j)] = {mean, std::sqrt(ss / (n - 1.0))};
    }
    dm.X = apply_standardization(s, dm.X);
    dm.standardization = std::move(s);
  }
  return dm;
}

/// Rows of `ds` brought into the column space of `dm` (including its
/// standardization).
inline Eigen::MatrixXd transform_rows(const Dataset& ds, const DesignMatrix& dm, const RowIndices& rows) {
  return dm.transform(extract_columns(ds, dm.column_names, rows));
}

}  // namespace hedonic
