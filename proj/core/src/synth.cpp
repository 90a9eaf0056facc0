#include "vce/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "vce/error.hpp"
#include "vce/io.hpp"

namespace vce {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNoiseSigma = 6.0;

// Chosen far apart in RGB so class means stay separable after the pattern
// modulates brightness.
constexpr std::array<std::array<double, 3>, 10> kBaseColours{{
    {235, 45, 45},
    {45, 205, 60},
    {55, 70, 230},
    {235, 215, 40},
    {205, 55, 215},
    {40, 210, 215},
    {245, 135, 30},
    {135, 135, 135},
    {120, 70, 25},
    {170, 240, 165},
}};

double stripes(double coord, double period, double phase) {
  return 0.5 + 0.5 * std::sin(kTwoPi * coord / period + phase);
}

// Pattern intensity in [0, 1] at every pixel, one family per class.
std::vector<double> pattern(int cls, int size, Rng& rng) {
  std::vector<double> f(static_cast<std::size_t>(size) * size, 0.0);
  auto px = [&](int y, int x) -> double& { return f[static_cast<std::size_t>(y) * size + x]; };
  const double s = size;

  switch (cls) {
    case 0: {  // filled discs
      const int n = 3 + static_cast<int>(rng.below(3));
      for (int k = 0; k < n; ++k) {
        const double cx = rng.uniform(0, s), cy = rng.uniform(0, s), r = rng.uniform(0.08, 0.18) * s;
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            if (std::hypot(x - cx, y - cy) < r) px(y, x) = 1.0;
      }
      break;
    }
    case 1:
    case 2: {  // horizontal / vertical stripes
      const double period = rng.uniform(0.1, 0.2) * s, phase = rng.uniform(0, kTwoPi);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) px(y, x) = stripes(cls == 1 ? y : x, period, phase);
      break;
    }
    case 3: {  // checkerboard
      const int cell = std::max(2, static_cast<int>(rng.uniform(0.06, 0.16) * s));
      const int ox = static_cast<int>(rng.below(static_cast<std::size_t>(cell)));
      const int oy = static_cast<int>(rng.below(static_cast<std::size_t>(cell)));
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) px(y, x) = ((x + ox) / cell + (y + oy) / cell) % 2;
      break;
    }
    case 4: {  // concentric rings
      const double cx = rng.uniform(0.3, 0.7) * s, cy = rng.uniform(0.3, 0.7) * s;
      const double period = rng.uniform(0.08, 0.15) * s;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) px(y, x) = stripes(std::hypot(x - cx, y - cy), period, 0.0);
      break;
    }
    case 5: {  // diagonal stripes
      const double period = rng.uniform(0.1, 0.2) * s, phase = rng.uniform(0, kTwoPi);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) px(y, x) = stripes((x + y) / std::numbers::sqrt2, period, phase);
      break;
    }
    case 6: {  // soft blobs
      const int n = 2 + static_cast<int>(rng.below(3));
      for (int k = 0; k < n; ++k) {
        const double cx = rng.uniform(0, s), cy = rng.uniform(0, s), sig = rng.uniform(0.1, 0.2) * s;
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            px(y, x) = std::min(1.0, px(y, x) + std::exp(-d2 / (2 * sig * sig)));
          }
      }
      break;
    }
    case 7: {  // dot grid
      const double pitch = rng.uniform(0.12, 0.2) * s, r = pitch * 0.3;
      const double ox = rng.uniform(0, pitch), oy = rng.uniform(0, pitch);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double dx = std::fmod(x + ox, pitch) - pitch / 2, dy = std::fmod(y + oy, pitch) - pitch / 2;
          px(y, x) = std::hypot(dx, dy) < r ? 1.0 : 0.0;
        }
      break;
    }
    case 8: {  // cross
      const double cx = rng.uniform(0.3, 0.7) * s, cy = rng.uniform(0.3, 0.7) * s;
      const double half = rng.uniform(0.06, 0.12) * s;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) px(y, x) = (std::abs(x - cx) < half || std::abs(y - cy) < half) ? 1.0 : 0.0;
      break;
    }
    default: {  // wavy worms
      const int n = 2 + static_cast<int>(rng.below(2));
      for (int k = 0; k < n; ++k) {
        const double cy = rng.uniform(0.15, 0.85) * s, amp = rng.uniform(0.05, 0.12) * s;
        const double period = rng.uniform(0.3, 0.6) * s, phase = rng.uniform(0, kTwoPi);
        const double width = rng.uniform(0.02, 0.04) * s;
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x) {
            const double d = y - (cy + amp * std::sin(kTwoPi * x / period + phase));
            px(y, x) = std::min(1.0, px(y, x) + std::exp(-d * d / (2 * width * width)));
          }
      }
      break;
    }
  }
  return f;
}

}  // namespace

ImageTensor synth_image(int class_index, int size, Rng& rng) {
  if (class_index < 0 || class_index >= static_cast<int>(kBaseColours.size())) {
    throw Error(ErrorKind::InvalidArgument, "synthetic class index out of range");
  }
  if (size < 8) throw Error(ErrorKind::InvalidArgument, "synthetic image size must be >= 8");
  const auto f = pattern(class_index, size, rng);
  const auto& base = kBaseColours[static_cast<std::size_t>(class_index)];
  ImageTensor img(size, size, RangeState::Raw);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double v = base[static_cast<std::size_t>(c)] * (0.45 + 0.55 * f[static_cast<std::size_t>(y) * size + x]) +
                         kNoiseSigma * rng.normal();
        img.at(c, y, x) = std::clamp(v, 0.0, 255.0);
      }
  return img;
}

void generate_synthetic_dataset(const std::filesystem::path& root, const SynthSpec& spec) {
  if (spec.per_class < 1) throw Error(ErrorKind::InvalidArgument, "per_class must be >= 1");
  const ClassSet classes = ClassSet::defaults();
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec || !std::filesystem::is_directory(root)) {
    throw Error(ErrorKind::IoError, "cannot create " + root.string());
  }
  for (int c = 0; c < classes.size(); ++c) {
    const std::string& name = classes.name(c);
    for (int i = 0; i < spec.per_class; ++i) {
      Rng rng(mix_seed(spec.seed) ^ mix_seed((static_cast<std::uint64_t>(c) << 32) | static_cast<std::uint64_t>(i)));
      save_png(synth_image(c, spec.image_size, rng), root / name / (name + "_" + std::to_string(i) + ".png"));
    }
  }
}

}  // namespace vce
