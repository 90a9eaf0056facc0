#pragma once

#include <cstdint>
#include <filesystem>

#include "vce/dataset.hpp"
#include "vce/image.hpp"
#include "vce/rng.hpp"

namespace vce {

struct SynthSpec {
  int per_class = 10;
  std::uint64_t seed = 0;
  int image_size = 64;
};

/// One raw RGB frame of class `class_index` (0..9). Each class pairs a
/// distinct base colour with its own procedural pattern family.
ImageTensor synth_image(int class_index, int size, Rng& rng);

/// Writes root/<ClassName>/<ClassName>_<i>.png for the default class set.
/// Byte-identical output for a fixed spec.
void generate_synthetic_dataset(const std::filesystem::path& root, const SynthSpec& spec);

}  // namespace vce
