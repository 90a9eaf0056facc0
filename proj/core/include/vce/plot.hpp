#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vce/dataset.hpp"
#include "vce/metrics.hpp"
#include "vce/training.hpp"
#include "vce/tsne.hpp"

namespace vce {

// Every renderer writes a PNG (150 dpi) next to a machine-readable twin in
// `out_dir` and returns the PNG path.

/// curves.png (loss and accuracy panels) + curves.csv.
std::filesystem::path render_training_curves(std::span<const EpochMetrics> history,
                                             const std::filesystem::path& out_dir);

/// confusion.png (annotated heatmap) + confusion.csv.
std::filesystem::path render_confusion_heatmap(const ConfusionMatrix& cm, const ClassSet& classes,
                                               const std::filesystem::path& out_dir);

/// roc.png (one curve per class, AUC in the legend) + roc.json.
std::filesystem::path render_roc(const Evaluation& eval, const ClassSet& classes,
                                 const std::filesystem::path& out_dir);

/// tsne.png (scatter coloured by class) + tsne.csv `x,y,label`.
std::filesystem::path render_embedding(const Embedding2D& embedding, const ClassSet& classes,
                                       const std::filesystem::path& out_dir);

std::string embedding_to_csv(const Embedding2D& embedding);

/// Encodes BGR 8-bit pixels as PNG with a pHYs chunk for `dpi`.
std::vector<unsigned char> encode_png(const unsigned char* bgr, int width, int height, int dpi);

}  // namespace vce
