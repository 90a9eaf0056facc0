#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "vce/dataset.hpp"
#include "vce/image.hpp"
#include "vce/rng.hpp"

namespace vce {

struct NormalizationStats {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  void validate() const;
};

struct AugmentationPolicy {
  double hflip_prob = 0.5;
  double rotation_max_deg = 10.0;
  bool enabled = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Bilinear resize with half-pixel centers. Same-size input is copied.
ImageTensor resize(const ImageTensor& img, int height, int width);

ImageTensor to_unit(const ImageTensor& img);
ImageTensor normalize(const ImageTensor& img, const NormalizationStats& stats);

ImageTensor horizontal_flip(const ImageTensor& img);

/// Rotates counter-clockwise by `degrees` about the image center, bilinear
/// resampling, zero outside the source bounds.
ImageTensor rotate(const ImageTensor& img, double degrees);

// Each draws exactly one number from `rng` whatever the outcome.
ImageTensor random_horizontal_flip(const ImageTensor& img, const AugmentationPolicy& policy,
                                   Rng& rng);
ImageTensor random_rotation(const ImageTensor& img, const AugmentationPolicy& policy, Rng& rng);

struct PreprocessConfig {
  int input_size = 224;
  AugmentationPolicy augment;
  NormalizationStats stats;
};

/// Per-sample rng seed: the epoch/base seed xor the sample index.
constexpr std::uint64_t sample_seed(std::uint64_t base, std::size_t index) noexcept {
  return base ^ static_cast<std::uint64_t>(index);
}

/// resize -> [flip -> rotate, train split only] -> to_unit -> normalize.
ImageTensor preprocess(const ImageTensor& raw, Split split, const PreprocessConfig& cfg,
                       Rng& rng);

struct Sample {
  ImageTensor image;
  int label = 0;
};

Sample apply_pipeline(const LabeledFrame& frame, Split split, const PreprocessConfig& cfg,
                      Rng& rng);

/// Loads frames through the pipeline, memoizing the decoded-and-resized raw
/// image per path. The cache holds pre-augmentation pixels only, so results
/// are identical to calling apply_pipeline directly.
class FrameLoader {
 public:
  explicit FrameLoader(PreprocessConfig cfg) : cfg_(std::move(cfg)) {}

  [[nodiscard]] const PreprocessConfig& config() const noexcept { return cfg_; }

  ImageTensor load(const LabeledFrame& frame, Split split, std::uint64_t seed);

  void clear_cache() { cache_.clear(); }

 private:
  const ImageTensor& resized_raw(const std::string& path);

  PreprocessConfig cfg_;
  std::map<std::string, ImageTensor> cache_;
};

}  // namespace vce
