#include "vce/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <zlib.h>

#include "vce/error.hpp"
#include "vce/io.hpp"

namespace vce {

namespace fs = std::filesystem;

namespace {

constexpr int kDpi = 150;
constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;
const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrey(170, 170, 170);
const cv::Scalar kWhite(255, 255, 255);

// tab10, BGR.
constexpr std::array<std::array<int, 3>, 10> kPalette{{
    {180, 119, 31},
    {14, 127, 255},
    {44, 160, 44},
    {40, 39, 214},
    {189, 103, 148},
    {75, 86, 140},
    {194, 119, 227},
    {127, 127, 127},
    {34, 189, 188},
    {207, 190, 23},
}};

cv::Scalar colour(int i) {
  const auto& c = kPalette[static_cast<std::size_t>(i) % kPalette.size()];
  return {static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2])};
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45,
          const cv::Scalar& col = kBlack, int thickness = 1) {
  cv::putText(img, s, at, kFont, scale, col, thickness, cv::LINE_AA);
}

cv::Size text_size(const std::string& s, double scale = 0.45) {
  int baseline = 0;
  return cv::getTextSize(s, kFont, scale, 1, &baseline);
}

void centred_text(cv::Mat& img, const std::string& s, cv::Point centre, double scale = 0.45,
                  const cv::Scalar& col = kBlack) {
  const auto sz = text_size(s, scale);
  text(img, s, {centre.x - sz.width / 2, centre.y + sz.height / 2}, scale, col);
}

// Text rotated 90 degrees counter-clockwise, its right end at `anchor`.
void vertical_text(cv::Mat& img, const std::string& s, cv::Point anchor, double scale = 0.45) {
  const auto sz = text_size(s, scale);
  cv::Mat strip(sz.height + 6, sz.width + 4, CV_8UC3, kWhite);
  text(strip, s, {2, sz.height + 2}, scale);
  cv::Mat turned;
  cv::rotate(strip, turned, cv::ROTATE_90_COUNTERCLOCKWISE);
  const cv::Rect dst(anchor.x - turned.cols / 2, anchor.y, turned.cols, turned.rows);
  const cv::Rect clipped = dst & cv::Rect(0, 0, img.cols, img.rows);
  if (clipped.area() == 0) return;
  turned(cv::Rect(clipped.x - dst.x, clipped.y - dst.y, clipped.width, clipped.height)).copyTo(img(clipped));
}

struct Axes {
  cv::Rect frame;
  double x0, x1, y0, y1;

  [[nodiscard]] cv::Point map(double x, double y) const {
    const double fx = (x - x0) / (x1 - x0);
    const double fy = (y - y0) / (y1 - y0);
    return {frame.x + static_cast<int>(std::lround(fx * frame.width)),
            frame.y + frame.height - static_cast<int>(std::lround(fy * frame.height))};
  }
};

void draw_axes(cv::Mat& img, const Axes& ax, const std::string& title, const std::string& xlabel,
               const std::string& ylabel, int x_digits, int y_digits) {
  cv::rectangle(img, ax.frame, kBlack, 1);
  for (int t = 0; t <= 4; ++t) {
    const double xv = ax.x0 + (ax.x1 - ax.x0) * t / 4.0;
    const double yv = ax.y0 + (ax.y1 - ax.y0) * t / 4.0;
    const cv::Point px = ax.map(xv, ax.y0);
    const cv::Point py = ax.map(ax.x0, yv);
    cv::line(img, px, {px.x, px.y + 4}, kBlack);
    cv::line(img, py, {py.x - 4, py.y}, kBlack);
    centred_text(img, fixed(xv, x_digits), {px.x, px.y + 14}, 0.38);
    const std::string ys = fixed(yv, y_digits);
    text(img, ys, {py.x - 8 - text_size(ys, 0.38).width, py.y + 4}, 0.38);
  }
  centred_text(img, title, {ax.frame.x + ax.frame.width / 2, ax.frame.y - 14}, 0.55);
  centred_text(img, xlabel, {ax.frame.x + ax.frame.width / 2, ax.frame.y + ax.frame.height + 34});
  vertical_text(img, ylabel, {ax.frame.x - 58, ax.frame.y + ax.frame.height / 2 - text_size(ylabel).width / 2});
}

void legend(cv::Mat& img, cv::Point top_left, const std::vector<std::pair<std::string, cv::Scalar>>& entries,
            bool markers = false) {
  int width = 0;
  for (const auto& e : entries) width = std::max(width, text_size(e.first, 0.4).width);
  const cv::Rect box(top_left.x, top_left.y, width + 40, static_cast<int>(entries.size()) * 18 + 8);
  cv::rectangle(img, box, kWhite, cv::FILLED);
  cv::rectangle(img, box, kGrey, 1);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const int y = top_left.y + 14 + static_cast<int>(i) * 18;
    if (markers) {
      cv::circle(img, {top_left.x + 14, y - 4}, 4, entries[i].second, cv::FILLED, cv::LINE_AA);
    } else {
      cv::line(img, {top_left.x + 6, y - 4}, {top_left.x + 26, y - 4}, entries[i].second, 2, cv::LINE_AA);
    }
    text(img, entries[i].first, {top_left.x + 32, y}, 0.4);
  }
}

void polyline(cv::Mat& img, const Axes& ax, std::span<const double> xs, std::span<const double> ys,
              const cv::Scalar& col) {
  std::vector<cv::Point> pts;
  for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back(ax.map(xs[i], ys[i]));
  if (pts.size() == 1) {
    cv::circle(img, pts[0], 3, col, cv::FILLED, cv::LINE_AA);
    return;
  }
  cv::polylines(img, pts, false, col, 2, cv::LINE_AA);
}

std::pair<double, double> padded_range(std::span<const double> a, std::span<const double> b) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  const double pad = hi > lo ? 0.05 * (hi - lo) : std::max(0.05 * std::abs(hi), 0.05);
  return {lo - pad, hi + pad};
}

fs::path write_png(const cv::Mat& img, const fs::path& path) {
  const auto bytes = encode_png(img.ptr<unsigned char>(0), img.cols, img.rows, kDpi);
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  return path;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

}  // namespace

std::vector<unsigned char> encode_png(const unsigned char* bgr, int width, int height, int dpi) {
  if (width <= 0 || height <= 0 || dpi <= 0) throw Error(ErrorKind::InvalidArgument, "bad png geometry");
  const cv::Mat view(height, width, CV_8UC3, const_cast<unsigned char*>(bgr));
  std::vector<unsigned char> png;
  if (!cv::imencode(".png", view, png)) throw Error(ErrorKind::IoError, "png encoding failed");

  // Signature (8) + IHDR chunk (4 + 4 + 13 + 4); pHYs goes right after.
  constexpr std::size_t kAfterIhdr = 33;
  if (png.size() < kAfterIhdr) throw Error(ErrorKind::IoError, "unexpected png layout");
  const auto ppm = static_cast<std::uint32_t>(std::lround(dpi / 0.0254));
  std::vector<unsigned char> chunk;
  put_u32(chunk, 9);
  const std::size_t type_at = chunk.size();
  for (char ch : {'p', 'H', 'Y', 's'}) chunk.push_back(static_cast<unsigned char>(ch));
  put_u32(chunk, ppm);
  put_u32(chunk, ppm);
  chunk.push_back(1);  // unit: metre
  const uLong crc = crc32(0L, chunk.data() + type_at, static_cast<uInt>(chunk.size() - type_at));
  put_u32(chunk, static_cast<std::uint32_t>(crc));
  png.insert(png.begin() + kAfterIhdr, chunk.begin(), chunk.end());
  return png;
}

fs::path render_training_curves(std::span<const EpochMetrics> history, const fs::path& out_dir) {
  if (history.empty()) throw Error(ErrorKind::EmptyHistory, "no epochs to plot");
  write_text_file(out_dir / "curves.csv", history_to_csv(history));

  std::vector<double> epochs, tl, vl, ta, va;
  for (const auto& m : history) {
    epochs.push_back(m.epoch);
    tl.push_back(m.train_loss);
    vl.push_back(m.val_loss);
    ta.push_back(m.train_acc);
    va.push_back(m.val_acc);
  }
  const double x0 = epochs.front(), x1 = epochs.size() > 1 ? epochs.back() : epochs.front() + 1.0;

  cv::Mat img(480, 1200, CV_8UC3, kWhite);
  const auto [l0, l1] = padded_range(tl, vl);
  const Axes loss{{90, 50, 480, 360}, x0, x1, l0, l1};
  const auto [a0, a1] = padded_range(ta, va);
  const Axes acc{{690, 50, 480, 360}, x0, x1, a0, a1};

  draw_axes(img, loss, "Loss", "epoch", "loss", 0, 3);
  polyline(img, loss, epochs, tl, colour(0));
  polyline(img, loss, epochs, vl, colour(1));
  legend(img, {loss.frame.x + loss.frame.width - 110, loss.frame.y + 8}, {{"train", colour(0)}, {"val", colour(1)}});

  draw_axes(img, acc, "Accuracy", "epoch", "accuracy", 0, 3);
  polyline(img, acc, epochs, ta, colour(0));
  polyline(img, acc, epochs, va, colour(1));
  legend(img, {acc.frame.x + acc.frame.width - 110, acc.frame.y + acc.frame.height - 52},
         {{"train", colour(0)}, {"val", colour(1)}});

  return write_png(img, out_dir / "curves.png");
}

fs::path render_confusion_heatmap(const ConfusionMatrix& cm, const ClassSet& classes, const fs::path& out_dir) {
  if (cm.num_classes != classes.size()) throw Error(ErrorKind::ShapeMismatch, "confusion matrix / class set size");
  write_text_file(out_dir / "confusion.csv", confusion_to_csv(cm, classes));

  const int k = cm.num_classes;
  int label_w = 0;
  for (const auto& n : classes.names()) label_w = std::max(label_w, text_size(n).width);
  const int cell = 56;
  const int left = label_w + 60, top = 60;
  cv::Mat img(top + k * cell + label_w + 60, left + k * cell + 40, CV_8UC3, kWhite);

  std::int64_t peak = 1;
  for (auto v : cm.counts) peak = std::max(peak, v);
  for (int t = 0; t < k; ++t) {
    for (int p = 0; p < k; ++p) {
      const double f = static_cast<double>(cm.at(t, p)) / static_cast<double>(peak);
      // White to dark blue.
      const cv::Scalar fill(255 - 100 * f, 255 - 200 * f, 255 - 230 * f);
      const cv::Rect r(left + p * cell, top + t * cell, cell, cell);
      cv::rectangle(img, r, fill, cv::FILLED);
      cv::rectangle(img, r, kGrey, 1);
      centred_text(img, std::to_string(cm.at(t, p)), {r.x + cell / 2, r.y + cell / 2}, 0.45,
                   f > 0.55 ? kWhite : kBlack);
    }
    const std::string& name = classes.name(t);
    text(img, name, {left - 8 - text_size(name).width, top + t * cell + cell / 2 + 5});
    vertical_text(img, name, {left + t * cell + cell / 2, top + k * cell + 8});
  }
  centred_text(img, "Confusion matrix (rows: true, columns: predicted)", {img.cols / 2, 24}, 0.55);
  return write_png(img, out_dir / "confusion.png");
}

fs::path render_roc(const Evaluation& eval, const ClassSet& classes, const fs::path& out_dir) {
  write_text_file(out_dir / "roc.json", roc_to_json(eval, classes).dump(2) + "\n");

  cv::Mat img(640, 900, CV_8UC3, kWhite);
  const Axes ax{{90, 50, 500, 500}, 0.0, 1.0, 0.0, 1.0};
  draw_axes(img, ax, "ROC (one-vs-rest)", "false positive rate", "true positive rate", 2, 2);
  for (int i = 0; i < 40; i += 2) {
    cv::line(img, ax.map(i / 40.0, i / 40.0), ax.map((i + 1) / 40.0, (i + 1) / 40.0), kGrey, 1);
  }
  std::vector<std::pair<std::string, cv::Scalar>> entries;
  for (const auto& curve : eval.roc) {
    std::vector<double> xs, ys;
    for (const auto& p : curve.points) {
      xs.push_back(p.fpr);
      ys.push_back(p.tpr);
    }
    polyline(img, ax, xs, ys, colour(curve.class_index));
    entries.emplace_back(classes.name(curve.class_index) + " (AUC " + fixed(curve.auc, 3) + ")",
                         colour(curve.class_index));
  }
  if (!entries.empty()) legend(img, {610, 50}, entries);
  int y = 70 + static_cast<int>(entries.size()) * 18;
  for (int c : eval.omitted_classes) {
    text(img, "omitted: " + classes.name(c) + " (single-label)", {610, y}, 0.4);
    y += 18;
  }
  return write_png(img, out_dir / "roc.png");
}

std::string embedding_to_csv(const Embedding2D& embedding) {
  std::string out = "x,y,label\n";
  for (Eigen::Index i = 0; i < embedding.coords.rows(); ++i) {
    out += format_double(embedding.coords(i, 0)) + "," + format_double(embedding.coords(i, 1)) + "," +
           std::to_string(embedding.labels[static_cast<std::size_t>(i)]) + "\n";
  }
  return out;
}

fs::path render_embedding(const Embedding2D& embedding, const ClassSet& classes, const fs::path& out_dir) {
  const Eigen::Index n = embedding.coords.rows();
  if (n == 0 || embedding.coords.cols() != 2 || static_cast<Eigen::Index>(embedding.labels.size()) != n) {
    throw Error(ErrorKind::ShapeMismatch, "embedding must be N x 2 with N labels");
  }
  write_text_file(out_dir / "tsne.csv", embedding_to_csv(embedding));

  const Eigen::VectorXd xs = embedding.coords.col(0), ys = embedding.coords.col(1);
  const auto [x0, x1] = padded_range({xs.data(), static_cast<std::size_t>(n)}, {});
  const auto [y0, y1] = padded_range({ys.data(), static_cast<std::size_t>(n)}, {});
  cv::Mat img(640, 900, CV_8UC3, kWhite);
  const Axes ax{{90, 50, 500, 500}, x0, x1, y0, y1};
  draw_axes(img, ax, "t-SNE of ensemble features", "dim 1", "dim 2", 1, 1);

  std::vector<bool> present(static_cast<std::size_t>(classes.size()), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = embedding.labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= classes.size()) throw Error(ErrorKind::LabelOutOfRange, "embedding label");
    present[static_cast<std::size_t>(label)] = true;
    cv::circle(img, ax.map(xs(i), ys(i)), 4, colour(label), cv::FILLED, cv::LINE_AA);
  }
  std::vector<std::pair<std::string, cv::Scalar>> entries;
  for (int c = 0; c < classes.size(); ++c)
    if (present[static_cast<std::size_t>(c)]) entries.emplace_back(classes.name(c), colour(c));
  legend(img, {610, 50}, entries, true);
  return write_png(img, out_dir / "tsne.png");
}

}  // namespace vce
