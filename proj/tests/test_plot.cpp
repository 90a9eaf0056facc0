#include <gtest/gtest.h>
#include <zlib.h>

#include <fstream>
#include <opencv2/imgcodecs.hpp>

#include "test_util.hpp"
#include "vce/error.hpp"
#include "vce/plot.hpp"

namespace vce {
namespace {

using testing::TempDir;

std::vector<EpochMetrics> fake_history(int epochs) {
  std::vector<EpochMetrics> h;
  for (int e = 1; e <= epochs; ++e) {
    const double t = static_cast<double>(e) / epochs;
    h.push_back({e, 2.3 * (1 - t) + 0.05, 2.3 * (1 - 0.8 * t) + 0.1, 0.1 + 0.88 * t, 0.1 + 0.8 * t * t});
  }
  return h;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void expect_image(const std::filesystem::path& p) {
  ASSERT_TRUE(std::filesystem::exists(p)) << p;
  EXPECT_GT(std::filesystem::file_size(p), 0u);
  const cv::Mat img = cv::imread(p.string());
  EXPECT_FALSE(img.empty());
}

TEST(PlotCurves, FiftyEpochsWithCsvTwin) {
  TempDir dir;
  const auto h = fake_history(50);
  const auto png = render_training_curves(h, dir.path());
  EXPECT_EQ(png, dir / "curves.png");
  expect_image(png);
  const auto csv = slurp(dir / "curves.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 51);
  EXPECT_EQ(history_from_csv(csv), h);
}

TEST(PlotCurves, SingleEpoch) {
  TempDir dir;
  expect_image(render_training_curves(fake_history(1), dir.path()));
}

TEST(PlotCurves, EmptyHistory) {
  TempDir dir;
  try {
    render_training_curves({}, dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyHistory);
  }
}

TEST(Png, CarriesDpiChunk) {
  std::vector<unsigned char> pixels(4 * 3 * 3, 200);
  const auto png = encode_png(pixels.data(), 4, 3, 150);
  // signature (8) + IHDR (25), then our chunk.
  ASSERT_GT(png.size(), 33u + 21u);
  const unsigned char* c = png.data() + 33;
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(c + 4), 4), "pHYs");
  auto be32 = [](const unsigned char* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
  };
  EXPECT_EQ(be32(c), 9u);
  const auto ppm = be32(c + 8);
  EXPECT_EQ(ppm, be32(c + 12));
  EXPECT_NEAR(ppm * 0.0254, 150.0, 0.05);
  EXPECT_EQ(c[16], 1);  // unit: metre
  EXPECT_EQ(be32(c + 17), crc32(crc32(0, nullptr, 0), c + 4, 13));

  const cv::Mat back = cv::imdecode(png, cv::IMREAD_COLOR);
  ASSERT_EQ(back.cols, 4);
  ASSERT_EQ(back.rows, 3);
  EXPECT_EQ(back.at<cv::Vec3b>(1, 2)[0], 200);
}

TEST(PlotConfusion, HeatmapAndCsv) {
  TempDir dir;
  const auto classes = ClassSet::defaults();
  std::vector<int> t, p;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    t.push_back(static_cast<int>(rng.below(10)));
    p.push_back(rng.uniform() < 0.7 ? t.back() : static_cast<int>(rng.below(10)));
  }
  const auto cm = confusion_matrix(t, p, 10);
  expect_image(render_confusion_heatmap(cm, classes, dir.path()));
  EXPECT_EQ(slurp(dir / "confusion.csv"), confusion_to_csv(cm, classes));
  const auto csv = slurp(dir / "confusion.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
}

TEST(PlotRoc, OmittedClassAppearsInJsonTwin) {
  TempDir dir;
  Matrix probs(4, 3);
  probs << 0.7, 0.2, 0.1, 0.3, 0.6, 0.1, 0.6, 0.3, 0.1, 0.2, 0.7, 0.1;
  const auto eval = evaluate_predictions(probs, std::vector<int>{0, 1, 0, 1});
  const ClassSet classes({"a", "b", "c"});
  expect_image(render_roc(eval, classes, dir.path()));
  const auto j = nlohmann::json::parse(slurp(dir / "roc.json"));
  EXPECT_EQ(j, roc_to_json(eval, classes));
}

TEST(PlotEmbedding, ScatterAndCsv) {
  TempDir dir;
  Embedding2D emb;
  emb.coords = Matrix(100, 2);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    emb.labels.push_back(i % 10);
    emb.coords(i, 0) = rng.normal() + 3 * (i % 10);
    emb.coords(i, 1) = rng.normal();
  }
  expect_image(render_embedding(emb, ClassSet::defaults(), dir.path()));
  const auto csv = slurp(dir / "tsne.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x,y,label");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 101);
  EXPECT_EQ(csv, embedding_to_csv(emb));
}

TEST(PlotEmbedding, RejectsBadLabels) {
  TempDir dir;
  Embedding2D emb;
  emb.coords = Matrix::Zero(2, 2);
  emb.labels = {0, 12};
  EXPECT_THROW(render_embedding(emb, ClassSet::defaults(), dir.path()), Error);
}

}  // namespace
}  // namespace vce
