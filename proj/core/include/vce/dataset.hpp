#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vce/image.hpp"

namespace vce {

/// Ordered set of class names. Labels are the lexicographic-sort position of
/// each name, so the mapping never depends on directory traversal order.
class ClassSet {
 public:
  explicit ClassSet(std::vector<std::string> names);

  /// The ten Capsule Vision 2024 challenge classes.
  static ClassSet defaults();

  [[nodiscard]] int size() const noexcept { return static_cast<int>(names_.size()); }
  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
  [[nodiscard]] const std::string& name(int index) const;
  [[nodiscard]] std::optional<int> find(std::string_view name) const;
  /// Throws UnknownClassDir when absent.
  [[nodiscard]] int index_of(std::string_view name) const;

  friend bool operator==(const ClassSet&, const ClassSet&) = default;

 private:
  std::vector<std::string> names_;
};

enum class Split { Train, Val, Unassigned };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

struct LabeledFrame {
  std::string path;
  int label = 0;
  Split split = Split::Unassigned;

  friend bool operator==(const LabeledFrame&, const LabeledFrame&) = default;
};

struct DatasetManifest {
  ClassSet class_set;
  std::vector<LabeledFrame> frames;
  std::uint64_t seed = 0;

  [[nodiscard]] std::vector<LabeledFrame> frames_in(Split split) const;
  /// Frame count per label.
  [[nodiscard]] std::vector<std::size_t> class_counts() const;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct ScanResult {
  DatasetManifest manifest;
  std::vector<std::string> skipped;  // undecodable files
};

/// Builds a manifest from root/<ClassName>/<images>. When `class_set` is
/// empty it is inferred from the subdirectory names.
ScanResult scan_dataset(const std::filesystem::path& root,
                        const std::optional<ClassSet>& class_set = std::nullopt);

/// Train count for a class of n frames: round-half-up of fraction*n, clamped
/// to [1, n-1].
std::size_t train_count(std::size_t n, double train_fraction);

DatasetManifest stratified_split(DatasetManifest manifest, const SplitSpec& spec);

/// Decodes an 8-bit image as a raw 3-channel tensor. Grayscale is promoted to
/// three identical channels; alpha is dropped.
ImageTensor load_image(const std::filesystem::path& path);
inline ImageTensor load_image(const LabeledFrame& frame) { return load_image(frame.path); }

/// True for extensions the ingest path considers (png, jpg, jpeg).
bool has_image_extension(const std::filesystem::path& path);

// CSV schema: `path,label,split` with label given as the class name.
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_csv(const std::filesystem::path& path,
                                  const std::optional<ClassSet>& class_set = std::nullopt);

}  // namespace vce
