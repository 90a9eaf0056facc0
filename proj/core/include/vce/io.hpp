#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "vce/image.hpp"

namespace vce {

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed. Throws IoError on failure.
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Writes a raw-range image as 8-bit PNG (values rounded and clamped).
void save_png(const ImageTensor& raw, const std::filesystem::path& path);

/// Shortest decimal representation that round-trips.
std::string format_double(double value);

}  // namespace vce
