#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vce/ensemble.hpp"
#include "vce/preprocess.hpp"
#include "vce/training.hpp"
#include "vce/tsne.hpp"

namespace vce {

/// Everything a run needs. Defaults reproduce the reference hyperparameters
/// (Adam, lr 1e-4, batch 32, 50 epochs, weight decay 1e-4, 224x224 input).
struct RunConfig {
  std::string data_root = "data";
  std::string output_dir = "out";
  std::vector<std::string> classes;  // empty: inferred from directories
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  TrainingConfig train;
  ModelVariant variant = ModelVariant::Full;
  Fusion fusion = Fusion::MeanProb;
  std::string init_checkpoint;  // optional pretrained parameters
  int input_size = 224;
  AugmentationPolicy augment;
  NormalizationStats normalize;
  TsneConfig tsne;

  /// Copies `seed` into the per-module configs.
  void propagate_seed();
  void validate() const;

  [[nodiscard]] PreprocessConfig preprocess() const;
};

/// Parses the key-value format described in docs/config.md. Unknown keys,
/// duplicate keys and type mismatches raise ConfigError naming the key.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const RunConfig& cfg);

/// Applies the SEED environment variable, if set.
void apply_env_overrides(RunConfig& cfg);

}  // namespace vce
