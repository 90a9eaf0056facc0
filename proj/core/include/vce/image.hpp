#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace vce {

/// Value-range state of an image tensor; operations check it on entry.
enum class RangeState { Raw, Unit, Normalized };

std::string_view to_string(RangeState state) noexcept;

/// Planar 3-channel image, channel-major (C x H x W).
struct ImageTensor {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  RangeState state = RangeState::Raw;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, RangeState s, double fill = 0.0);

  [[nodiscard]] std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  double& at(int c, int y, int x) {
    return data[static_cast<std::size_t>(c) * plane_size() +
                static_cast<std::size_t>(y) * width + x];
  }
  [[nodiscard]] double at(int c, int y, int x) const {
    return data[static_cast<std::size_t>(c) * plane_size() +
                static_cast<std::size_t>(y) * width + x];
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

}  // namespace vce
