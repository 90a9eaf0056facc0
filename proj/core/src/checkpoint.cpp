#include "vce/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "vce/error.hpp"

namespace vce {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'V', 'C', 'E', 'C', 'K', 'P', 'T', '\0'};
constexpr char kEndMarker[8] = {'V', 'C', 'E', 'E', 'N', 'D', '\0', '\0'};

class Writer {
 public:
  template <typename T>
  void put(const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorKind::CorruptCheckpoint, "file is truncated");
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(EnsembleModel& model, nlohmann::json run_config, double best_val_acc, int epoch) {
  Checkpoint ckpt{model.config(), std::move(run_config), best_val_acc, epoch, {}};
  for (const auto& p : model.parameters()) {
    ckpt.arrays.push_back({p.name, p.value->shape(), {p.value->values().begin(), p.value->values().end()}});
  }
  return ckpt;
}

void restore(EnsembleModel& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  if (params.size() != ckpt.arrays.size()) {
    throw Error(ErrorKind::IncompatibleConfig, "checkpoint holds " + std::to_string(ckpt.arrays.size()) +
                                                   " arrays, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& a = ckpt.arrays[i];
    if (a.name != params[i].name || a.shape != params[i].value->shape()) {
      throw Error(ErrorKind::IncompatibleConfig, "checkpoint array '" + a.name + "' does not match model array '" +
                                                     params[i].name + "'");
    }
    std::copy(a.values.begin(), a.values.end(), params[i].value->data());
  }
}

EnsembleModel model_from_checkpoint(const Checkpoint& ckpt) {
  EnsembleModel model(ckpt.model, 0);
  restore(model, ckpt);
  return model;
}

std::size_t load_matching_parameters(EnsembleModel& model, const Checkpoint& source) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : source.arrays) by_name[a.name] = &a;
  std::size_t copied = 0;
  for (auto& p : model.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end() || it->second->shape != p.value->shape()) continue;
    std::copy(it->second->values.begin(), it->second->values.end(), p.value->data());
    ++copied;
  }
  return copied;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = {{"format_version", Checkpoint::kFormatVersion},
                           {"model", ckpt.model},
                           {"run_config", ckpt.run_config},
                           {"best_val_acc", ckpt.best_val_acc},
                           {"epoch", ckpt.epoch}};
  const std::string text = header.dump();

  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(Checkpoint::kFormatVersion);
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text.data(), text.size());
  w.put<std::uint64_t>(ckpt.arrays.size());
  for (const auto& a : ckpt.arrays) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.name.size()));
    w.put_bytes(a.name.data(), a.name.size());
    for (int d : a.shape) w.put<std::int32_t>(d);
    w.put_bytes(a.values.data(), a.values.size() * sizeof(double));
  }
  w.put_bytes(kEndMarker, sizeof kEndMarker);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic || std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorKind::CorruptCheckpoint, "bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kFormatVersion) {
    throw Error(ErrorKind::CorruptCheckpoint, "unsupported format_version " + std::to_string(version));
  }
  const auto json_len = r.get<std::uint64_t>();
  if (json_len > r.remaining()) throw Error(ErrorKind::CorruptCheckpoint, "file is truncated");
  const auto* json_bytes = reinterpret_cast<const char*>(r.take(json_len));

  auto parse_header = [&]() -> Checkpoint {
    try {
      const auto header = nlohmann::json::parse(json_bytes, json_bytes + json_len);
      if (header.at("format_version").get<std::uint32_t>() != version) {
        throw Error(ErrorKind::CorruptCheckpoint, "header version disagrees with file version");
      }
      return {model_config_from_json(header.at("model")), header.at("run_config"),
              header.at("best_val_acc").get<double>(), header.at("epoch").get<int>(), {}};
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::CorruptCheckpoint, std::string("invalid header: ") + e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::CorruptCheckpoint) throw;
      throw Error(ErrorKind::CorruptCheckpoint, std::string("invalid header: ") + e.what());
    }
  };
  Checkpoint ckpt = parse_header();

  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    const auto name_len = r.get<std::uint32_t>();
    const auto* name = reinterpret_cast<const char*>(r.take(name_len));
    a.name.assign(name, name_len);
    std::uint64_t numel = 1;
    for (int& d : a.shape) {
      d = r.get<std::int32_t>();
      if (d < 0) throw Error(ErrorKind::CorruptCheckpoint, "negative dimension in '" + a.name + "'");
      numel *= static_cast<std::uint64_t>(d);
    }
    if (numel > r.remaining() / sizeof(double)) throw Error(ErrorKind::CorruptCheckpoint, "file is truncated");
    a.values.resize(numel);
    std::memcpy(a.values.data(), r.take(numel * sizeof(double)), numel * sizeof(double));
    ckpt.arrays.push_back(std::move(a));
  }
  if (std::memcmp(r.take(sizeof kEndMarker), kEndMarker, sizeof kEndMarker) != 0 || r.remaining() != 0) {
    throw Error(ErrorKind::CorruptCheckpoint, "missing end marker");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::CorruptCheckpoint, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Checkpoint load_checkpoint(const fs::path& path, const ClassSet& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.model.class_set != expected) {
    throw Error(ErrorKind::IncompatibleConfig,
                "checkpoint was trained for " + std::to_string(ckpt.model.num_classes()) +
                    " classes, the dataset has " + std::to_string(expected.size()) +
                    (ckpt.model.num_classes() == expected.size() ? " (names differ)" : ""));
  }
  return ckpt;
}

}  // namespace vce
