#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vce/ensemble.hpp"

namespace vce {

struct NamedArray {
  std::string name;
  std::array<int, 4> shape{};
  std::vector<double> values;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig model;
  nlohmann::json run_config = nlohmann::json::object();  // config echo
  double best_val_acc = 0.0;
  int epoch = 0;
  std::vector<NamedArray> arrays;  // parameters and batch-norm buffers
};

/// Copies every parameter and buffer of `model`.
Checkpoint make_checkpoint(EnsembleModel& model, nlohmann::json run_config = nlohmann::json::object(),
                           double best_val_acc = 0.0, int epoch = 0);

/// Overwrites `model` state; names and shapes must match exactly.
void restore(EnsembleModel& model, const Checkpoint& ckpt);
EnsembleModel model_from_checkpoint(const Checkpoint& ckpt);

/// Copies arrays whose name and shape match (pretrained initialization).
/// Returns the number of arrays copied.
std::size_t load_matching_parameters(EnsembleModel& model, const Checkpoint& source);

// Binary layout, little-endian:
//   "VCECKPT\0" | u32 format_version | u64 json_len | json (config echo,
//   model config, best_val_acc, epoch, format_version) | u64 array_count |
//   per array: u32 name_len, name, 4 x i32 shape, f64 values |
//   "VCEEND\0\0"
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also fails with IncompatibleConfig when the class set differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ClassSet& expected);

}  // namespace vce
