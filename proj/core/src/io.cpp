#include "vce/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "vce/error.hpp"

namespace vce {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

void save_png(const ImageTensor& raw, const fs::path& path) {
  if (raw.state != RangeState::Raw) {
    throw Error(ErrorKind::WrongRangeState, "save_png expects a raw image");
  }
  cv::Mat bgr(raw.height, raw.width, CV_8UC3);
  for (int y = 0; y < raw.height; ++y) {
    auto* row = bgr.ptr<unsigned char>(y);
    for (int x = 0; x < raw.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(std::round(raw.at(c, y, x)), 0.0, 255.0);
        row[3 * x + (2 - c)] = static_cast<unsigned char>(v);
      }
    }
  }
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::vector<unsigned char> bytes;
  if (!cv::imencode(".png", bgr, bytes)) {
    throw Error(ErrorKind::IoError, "png encoding failed for " + path.string());
  }
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) return "nan";
  std::string shortest(buf, end);
  if (shortest.find('e') == std::string::npos) return shortest;
  // Small magnitudes like 1e-4 read better as 0.0001.
  auto [fend, fec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
  if (fec == std::errc{} && fend - buf <= 10) return std::string(buf, fend);
  return shortest;
}

}  // namespace vce
