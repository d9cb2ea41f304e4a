#pragma once

#include "hedonic/hedonic.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

namespace hedonic::fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("hedonic_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small synthetic config that keeps network training fast.
inline GenConfig small_config(Index n, std::uint64_t seed) {
  GenConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.encoders = default_synthetic_encoders(12, 8);
  cfg.latent_dim = 4;
  cfg.distractors = 2;
  return cfg;
}

inline TrainConfig quick_nn(int epochs = 15) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.patience = 5;
  return cfg;
}

/// Dataset with only attributes and one dummy encoder whose single column is
/// pure noise, built in memory.
inline Dataset linear_dataset(Index n, const Eigen::VectorXd& gamma, double intercept, double noise_sd,
                              int n_clusters, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Dataset ds;
  for (Index j = 0; j < gamma.size(); ++j) ds.attribute_names.push_back("a" + std::to_string(j));
  FeatureBlock block;
  block.encoder_name = "noise";
  block.columns = {"c0", "c1"};
  block.kinds = {ColumnKind::confidence, ColumnKind::confidence};
  block.values.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    PropertyRecord r;
    char id[24];
    std::snprintf(id, sizeof(id), "p%06ld", static_cast<long>(i));
    r.id = id;
    double price = intercept;
    for (Index j = 0; j < gamma.size(); ++j) {
      const double a = normal(rng);
      r.attributes.push_back(a);
      price += gamma(j) * a;
    }
    r.log_price = price + noise_sd * normal(rng);
    r.cluster = "g" + std::to_string(i % n_clusters);
    const double u = uniform01(rng);
    block.values(i, 0) = u;
    block.values(i, 1) = 1.0 - u;
    block.ids.push_back(r.id);
    ds.records.push_back(std::move(r));
  }
  ds.blocks.emplace("noise", std::move(block));
  return ds;
}

}  // namespace hedonic::fixtures
