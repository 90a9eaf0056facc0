#include "vce/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <spdlog/spdlog.h>

#include "vce/error.hpp"
#include "vce/io.hpp"
#include "vce/rng.hpp"

namespace vce {

namespace fs = std::filesystem;

ClassSet::ClassSet(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  if (names_.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "a class set needs at least two classes");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw Error(ErrorKind::InvalidArgument, "empty class name");
    if (i > 0 && names_[i] == names_[i - 1]) {
      throw Error(ErrorKind::InvalidArgument, "duplicate class name '" + names_[i] + "'");
    }
  }
}

ClassSet ClassSet::defaults() {
  return ClassSet({"Angioectasia", "Bleeding", "Erosion", "Erythema", "Foreign Body",
                   "Lymphangiectasia", "Normal", "Polyp", "Ulcer", "Worms"});
}

const std::string& ClassSet::name(int index) const {
  if (index < 0 || index >= size()) {
    throw Error(ErrorKind::LabelOutOfRange, "class index " + std::to_string(index));
  }
  return names_[static_cast<std::size_t>(index)];
}

std::optional<int> ClassSet::find(std::string_view name) const {
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

int ClassSet::index_of(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  throw Error(ErrorKind::UnknownClassDir, "class '" + std::string(name) + "' is not in the class set");
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "unassigned" || text.empty()) return Split::Unassigned;
  throw Error(ErrorKind::InvalidArgument, "unknown split '" + std::string(text) + "'");
}

std::vector<LabeledFrame> DatasetManifest::frames_in(Split split) const {
  std::vector<LabeledFrame> out;
  std::copy_if(frames.begin(), frames.end(), std::back_inserter(out),
               [split](const LabeledFrame& f) { return f.split == split; });
  return out;
}

std::vector<std::size_t> DatasetManifest::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_set.size()), 0);
  for (const auto& f : frames) ++counts[static_cast<std::size_t>(f.label)];
  return counts;
}

bool has_image_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageTensor load_image(const fs::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw Error(ErrorKind::UnreadableImage, "cannot decode " + path.string());

  if (mat.depth() == CV_16U) {
    mat.convertTo(mat, CV_8U, 1.0 / 257.0);
  } else if (mat.depth() != CV_8U) {
    throw Error(ErrorKind::UnreadableImage, "unsupported pixel depth in " + path.string());
  }

  const int channels = mat.channels();
  if (channels != 1 && channels != 3 && channels != 4) {
    throw Error(ErrorKind::UnreadableImage, "unsupported channel count in " + path.string());
  }

  ImageTensor img(mat.rows, mat.cols, RangeState::Raw);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < mat.cols; ++x) {
      if (channels == 1) {
        const double v = row[x];
        img.at(0, y, x) = v;
        img.at(1, y, x) = v;
        img.at(2, y, x) = v;
      } else {
        // OpenCV stores BGR(A).
        const unsigned char* px = row + static_cast<std::ptrdiff_t>(x) * channels;
        img.at(0, y, x) = px[2];
        img.at(1, y, x) = px[1];
        img.at(2, y, x) = px[0];
      }
    }
  }
  return img;
}

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.empty() || name.front() == '.') continue;
    if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ScanResult scan_dataset(const fs::path& root, const std::optional<ClassSet>& class_set) {
  if (!fs::is_directory(root)) {
    throw Error(ErrorKind::IoError, "dataset root '" + root.string() + "' is not a directory");
  }
  const auto dirs = sorted_entries(root, true);

  std::vector<std::string> dir_names;
  for (const auto& d : dirs) dir_names.push_back(d.filename().string());

  ClassSet classes = class_set ? *class_set : ClassSet(dir_names);
  for (const auto& name : dir_names) {
    if (!classes.find(name)) {
      throw Error(ErrorKind::UnknownClassDir,
                  "directory '" + (root / name).string() + "' is not a known class");
    }
  }

  ScanResult result{DatasetManifest{classes, {}, 0}, {}};
  for (int label = 0; label < classes.size(); ++label) {
    const fs::path dir = root / classes.name(label);
    std::size_t found = 0;
    if (fs::is_directory(dir)) {
      for (const auto& file : sorted_entries(dir, false)) {
        if (!has_image_extension(file)) continue;
        try {
          (void)load_image(file);
        } catch (const Error& e) {
          spdlog::warn("skipping unreadable image {}", file.string());
          result.skipped.push_back(file.string());
          continue;
        }
        result.manifest.frames.push_back({file.string(), label, Split::Unassigned});
        ++found;
      }
    }
    if (found == 0) {
      throw Error(ErrorKind::EmptyClass, "class directory '" + dir.string() + "' has no images");
    }
  }
  if (!result.skipped.empty()) {
    spdlog::info("scan of {}: {} frames, {} skipped", root.string(), result.manifest.frames.size(),
                 result.skipped.size());
  }
  return result;
}

std::size_t train_count(std::size_t n, double train_fraction) {
  if (n < 2) throw Error(ErrorKind::TooFewSamples, "need at least 2 samples to split");
  const auto rounded = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(rounded, 1, n - 1);
}

DatasetManifest stratified_split(DatasetManifest manifest, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "train_fraction must lie in (0, 1)");
  }
  const auto counts = manifest.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 2) {
      throw Error(ErrorKind::TooFewSamples,
                  "class '" + manifest.class_set.name(static_cast<int>(c)) + "' has " +
                      std::to_string(counts[c]) + " frame(s); at least 2 are required");
    }
  }

  Rng rng(mix_seed(spec.seed));
  auto assign = [&](std::vector<std::size_t>& idx) {
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t n_train = train_count(idx.size(), spec.train_fraction);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      manifest.frames[idx[i]].split = i < n_train ? Split::Train : Split::Val;
    }
  };

  if (spec.stratified) {
    for (int c = 0; c < manifest.class_set.size(); ++c) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
        if (manifest.frames[i].label == c) idx.push_back(i);
      }
      assign(idx);
    }
  } else {
    std::vector<std::size_t> idx(manifest.frames.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    assign(idx);
  }
  manifest.seed = spec.seed;
  return manifest;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& path) {
  std::string out = "path,label,split\n";
  for (const auto& f : manifest.frames) {
    out += csv_field(f.path) + "," + csv_field(manifest.class_set.name(f.label)) + "," +
           std::string(to_string(f.split)) + "\n";
  }
  write_text_file(path, out);
}

DatasetManifest read_manifest_csv(const fs::path& path, const std::optional<ClassSet>& class_set) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::IoError, "empty manifest " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,split") {
    throw Error(ErrorKind::IoError, "manifest header must be 'path,label,split' in " + path.string());
  }

  struct Row {
    std::string path, label;
    Split split;
  };
  std::vector<Row> rows;
  std::set<std::string> names;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw Error(ErrorKind::IoError, path.string() + ":" + std::to_string(line_no) +
                                          ": expected 3 fields");
    }
    names.insert(fields[1]);
    rows.push_back({fields[0], fields[1], parse_split(fields[2])});
  }

  ClassSet classes = class_set ? *class_set : ClassSet({names.begin(), names.end()});
  DatasetManifest manifest{classes, {}, 0};
  for (auto& r : rows) {
    manifest.frames.push_back({std::move(r.path), classes.index_of(r.label), r.split});
  }
  const auto counts = manifest.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorKind::EmptyClass,
                  "class '" + classes.name(static_cast<int>(c)) + "' has no frames in " + path.string());
    }
  }
  return manifest;
}

}  // namespace vce
