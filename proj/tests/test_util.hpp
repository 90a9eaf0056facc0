#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "vce/dataset.hpp"
#include "vce/image.hpp"
#include "vce/io.hpp"
#include "vce/nn.hpp"
#include "vce/rng.hpp"
#include "vce/synth.hpp"

namespace vce::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vce_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline ImageTensor constant_image(int h, int w, double value) { return ImageTensor(h, w, RangeState::Raw, value); }

inline ImageTensor random_image(int h, int w, Rng& rng) {
  ImageTensor img(h, w, RangeState::Raw);
  for (auto& v : img.data) v = std::floor(rng.uniform(0.0, 256.0));
  return img;
}

inline Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor t(n, c, h, w);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

/// root/c<k>/<i>.png using the synthetic generator's first `k` classes, then
/// a seeded stratified split.
inline DatasetManifest synthetic_manifest(const std::filesystem::path& root, int k, int per_class, int size,
                                          std::uint64_t seed = 0, double train_fraction = 0.8) {
  std::vector<std::string> names;
  for (int c = 0; c < k; ++c) {
    names.push_back("c" + std::to_string(c));
    for (int i = 0; i < per_class; ++i) {
      Rng rng(mix_seed(seed) ^ mix_seed(static_cast<std::uint64_t>(c * 1000 + i)));
      save_png(synth_image(c, size, rng), root / names.back() / (std::to_string(i) + ".png"));
    }
  }
  auto scan = scan_dataset(root, ClassSet(names));
  return stratified_split(std::move(scan.manifest), {train_fraction, seed, true});
}

inline double relative_error(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom < 1e-8 ? std::abs(a - b) : std::abs(a - b) / denom;
}

/// Loss L = sum(w * f(x)) with fixed random w; returns analytic vs numeric
/// gradients for up to `samples` entries of every trainable parameter and of
/// the input. Reports the worst relative error.
struct GradCheck {
  double worst = 0.0;
  int checked = 0;
};

template <typename Forward, typename Backward>
GradCheck check_gradients(std::vector<ParamRef> params, Tensor& input, Forward&& forward, Backward&& backward,
                          Rng& rng, int samples_per_array = 4, double h = 1e-4) {
  Tensor probe = forward();
  Tensor weights(probe.n(), probe.c(), probe.h(), probe.w());
  for (auto& v : weights.values()) v = rng.normal();
  auto loss = [&] {
    const Tensor out = forward();
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * weights.values()[i];
    return s;
  };

  for (auto& p : params)
    if (p.trainable()) p.grad->fill(0.0);
  forward();
  const Tensor grad_input = backward(weights);

  GradCheck result;
  auto probe_entry = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + h;
    const double up = loss();
    slot = saved - h;
    const double down = loss();
    slot = saved;
    const double numeric = (up - down) / (2 * h);
    result.worst = std::max(result.worst, relative_error(analytic, numeric));
    ++result.checked;
  };
  for (auto& p : params) {
    if (!p.trainable()) continue;
    for (int s = 0; s < samples_per_array; ++s) {
      const std::size_t idx = rng.below(p.value->size());
      probe_entry(p.value->values()[idx], p.grad->values()[idx]);
    }
  }
  for (int s = 0; s < samples_per_array; ++s) {
    const std::size_t idx = rng.below(input.size());
    probe_entry(input.values()[idx], grad_input.values()[idx]);
  }
  return result;
}

}  // namespace vce::testing
