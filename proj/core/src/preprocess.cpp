#include "vce/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vce/error.hpp"

namespace vce {

ImageTensor::ImageTensor(int h, int w, RangeState s, double fill)
    : height(h), width(w), state(s),
      data(static_cast<std::size_t>(kChannels) * static_cast<std::size_t>(h) *
               static_cast<std::size_t>(w),
           fill) {
  if (h <= 0 || w <= 0) throw Error(ErrorKind::InvalidArgument, "image dimensions must be positive");
}

std::string_view to_string(RangeState state) noexcept {
  switch (state) {
    case RangeState::Raw: return "raw";
    case RangeState::Unit: return "unit";
    case RangeState::Normalized: return "normalized";
  }
  return "raw";
}

void NormalizationStats::validate() const {
  for (int c = 0; c < 3; ++c) {
    if (!(std[c] > 0.0) || !std::isfinite(std[c]) || !std::isfinite(mean[c])) {
      throw Error(ErrorKind::InvalidArgument, "normalization std must be positive and finite");
    }
  }
}

void AugmentationPolicy::validate() const {
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "augment.hflip_prob must lie in [0, 1]");
  }
  if (!(rotation_max_deg >= 0.0) || !std::isfinite(rotation_max_deg)) {
    throw Error(ErrorKind::InvalidArgument, "augment.rotation_max_deg must be >= 0");
  }
}

namespace {

void require_state(const ImageTensor& img, RangeState expected, const char* op) {
  if (img.state != expected) {
    throw Error(ErrorKind::WrongRangeState, std::string(op) + " expects a " +
                                                std::string(to_string(expected)) + " image, got " +
                                                std::string(to_string(img.state)));
  }
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

// Bilinear sample with coordinates already inside [0, w-1] x [0, h-1].
double sample_bilinear(const ImageTensor& img, int c, double sy, double sx) {
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const double ty = sy - y0;
  const double tx = sx - x0;
  const double top = lerp(img.at(c, y0, x0), img.at(c, y0, x1), tx);
  const double bottom = lerp(img.at(c, y1, x0), img.at(c, y1, x1), tx);
  return lerp(top, bottom, ty);
}

}  // namespace

ImageTensor resize(const ImageTensor& img, int height, int width) {
  if (height <= 0 || width <= 0) throw Error(ErrorKind::InvalidArgument, "resize target must be positive");
  if (img.height == height && img.width == width) return img;

  ImageTensor out(height, width, img.state);
  const double scale_y = static_cast<double>(img.height) / height;
  const double scale_x = static_cast<double>(img.width) / width;
  std::vector<double> src_x(static_cast<std::size_t>(width));
  for (int x = 0; x < width; ++x) {
    src_x[static_cast<std::size_t>(x)] =
        std::clamp((x + 0.5) * scale_x - 0.5, 0.0, static_cast<double>(img.width - 1));
  }
  for (int y = 0; y < height; ++y) {
    const double sy = std::clamp((y + 0.5) * scale_y - 0.5, 0.0, static_cast<double>(img.height - 1));
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < ImageTensor::kChannels; ++c) {
        out.at(c, y, x) = sample_bilinear(img, c, sy, src_x[static_cast<std::size_t>(x)]);
      }
    }
  }
  return out;
}

ImageTensor to_unit(const ImageTensor& img) {
  require_state(img, RangeState::Raw, "to_unit");
  ImageTensor out = img;
  for (double& v : out.data) v /= 255.0;
  out.state = RangeState::Unit;
  return out;
}

ImageTensor normalize(const ImageTensor& img, const NormalizationStats& stats) {
  require_state(img, RangeState::Unit, "normalize");
  stats.validate();
  ImageTensor out = img;
  const std::size_t plane = img.plane_size();
  for (int c = 0; c < ImageTensor::kChannels; ++c) {
    double* p = out.data.data() + plane * static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - stats.mean[c]) / stats.std[c];
  }
  out.state = RangeState::Normalized;
  return out;
}

ImageTensor horizontal_flip(const ImageTensor& img) {
  ImageTensor out = img;
  for (int c = 0; c < ImageTensor::kChannels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    }
  }
  return out;
}

ImageTensor rotate(const ImageTensor& img, double degrees) {
  if (degrees == 0.0) return img;
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  const double max_x = img.width - 1;
  const double max_y = img.height - 1;
  constexpr double kSlack = 1e-9;

  ImageTensor out(img.height, img.width, img.state, 0.0);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      double sx = cos_t * dx + sin_t * dy + cx;
      double sy = -sin_t * dx + cos_t * dy + cy;
      if (sx < -kSlack || sy < -kSlack || sx > max_x + kSlack || sy > max_y + kSlack) continue;
      sx = std::clamp(sx, 0.0, max_x);
      sy = std::clamp(sy, 0.0, max_y);
      for (int c = 0; c < ImageTensor::kChannels; ++c) out.at(c, y, x) = sample_bilinear(img, c, sy, sx);
    }
  }
  return out;
}

ImageTensor random_horizontal_flip(const ImageTensor& img, const AugmentationPolicy& policy, Rng& rng) {
  if (!policy.enabled) throw Error(ErrorKind::InvalidArgument, "augmentation policy is disabled");
  const double u = rng.uniform();
  return u < policy.hflip_prob ? horizontal_flip(img) : img;
}

ImageTensor random_rotation(const ImageTensor& img, const AugmentationPolicy& policy, Rng& rng) {
  if (!policy.enabled) throw Error(ErrorKind::InvalidArgument, "augmentation policy is disabled");
  const double u = rng.uniform();
  const double angle = (2.0 * u - 1.0) * policy.rotation_max_deg;
  return rotate(img, angle);
}

ImageTensor preprocess(const ImageTensor& raw, Split split, const PreprocessConfig& cfg, Rng& rng) {
  require_state(raw, RangeState::Raw, "preprocess");
  ImageTensor img = resize(raw, cfg.input_size, cfg.input_size);
  if (split == Split::Train && cfg.augment.enabled) {
    img = random_horizontal_flip(img, cfg.augment, rng);
    img = random_rotation(img, cfg.augment, rng);
  }
  return normalize(to_unit(img), cfg.stats);
}

Sample apply_pipeline(const LabeledFrame& frame, Split split, const PreprocessConfig& cfg, Rng& rng) {
  return {preprocess(load_image(frame), split, cfg, rng), frame.label};
}

const ImageTensor& FrameLoader::resized_raw(const std::string& path) {
  auto it = cache_.find(path);
  if (it == cache_.end()) {
    it = cache_.emplace(path, resize(load_image(path), cfg_.input_size, cfg_.input_size)).first;
  }
  return it->second;
}

ImageTensor FrameLoader::load(const LabeledFrame& frame, Split split, std::uint64_t seed) {
  Rng rng(seed);
  return preprocess(resized_raw(frame.path), split, cfg_, rng);
}

}  // namespace vce
