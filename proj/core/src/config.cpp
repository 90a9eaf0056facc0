#include "vce/config.hpp"

#include <array>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

#include "vce/error.hpp"
#include "vce/io.hpp"

namespace vce {

namespace {

struct Value {
  enum class Kind { Number, Bool, String, List } kind = Kind::Number;
  std::string text;  // number token or decoded string
  bool flag = false;
  std::vector<Value> items;
};

[[noreturn]] void config_fail(const std::string& key, const std::string& msg) {
  throw Error(ErrorKind::ConfigError, "config key '" + key + "': " + msg);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Parses one value starting at s[pos]; advances pos past it.
Value parse_value(std::string_view s, std::size_t& pos, const std::string& key, bool nested) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  if (pos >= s.size()) config_fail(key, "missing value");
  Value v;
  if (s[pos] == '"') {
    v.kind = Value::Kind::String;
    ++pos;
    for (;;) {
      if (pos >= s.size()) config_fail(key, "unterminated string");
      const char ch = s[pos++];
      if (ch == '"') break;
      if (ch == '\\') {
        if (pos >= s.size()) config_fail(key, "dangling escape");
        const char esc = s[pos++];
        if (esc != '"' && esc != '\\') config_fail(key, "unsupported escape");
        v.text += esc;
      } else {
        v.text += ch;
      }
    }
    return v;
  }
  if (s[pos] == '[') {
    if (nested) config_fail(key, "nested lists are not supported");
    v.kind = Value::Kind::List;
    ++pos;
    for (;;) {
      while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
      if (pos < s.size() && s[pos] == ']' && v.items.empty()) {
        ++pos;
        return v;
      }
      v.items.push_back(parse_value(s, pos, key, true));
      while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
      if (pos >= s.size()) config_fail(key, "unterminated list");
      if (s[pos] == ']') {
        ++pos;
        return v;
      }
      if (s[pos] != ',') config_fail(key, "expected ',' or ']' in list");
      ++pos;
    }
  }
  const auto end = s.find_first_of(",] \t", pos);
  const std::string_view token = s.substr(pos, end == std::string_view::npos ? s.size() - pos : end - pos);
  pos += token.size();
  if (token == "true" || token == "false") {
    v.kind = Value::Kind::Bool;
    v.flag = token == "true";
    return v;
  }
  double probe = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), probe);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    config_fail(key, "cannot parse value '" + std::string(token) + "' (strings must be quoted)");
  }
  v.kind = Value::Kind::Number;
  v.text = std::string(token);
  return v;
}

double as_double(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::Number) config_fail(key, "expected a number");
  double out = 0.0;
  std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  return out;
}

template <typename Int>
Int as_integer(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::Number) config_fail(key, "expected an integer");
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), out);
  if (ec != std::errc{} || ptr != v.text.data() + v.text.size()) config_fail(key, "expected an integer, got " + v.text);
  return out;
}

bool as_bool(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::Bool) config_fail(key, "expected true or false");
  return v.flag;
}

std::string as_string(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::String) config_fail(key, "expected a quoted string");
  return v.text;
}

std::array<double, 3> as_triple(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::List || v.items.size() != 3) config_fail(key, "expected a list of 3 numbers");
  return {as_double(v.items[0], key), as_double(v.items[1], key), as_double(v.items[2], key)};
}

std::vector<std::string> as_strings(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::List) config_fail(key, "expected a list of strings");
  std::vector<std::string> out;
  for (const auto& item : v.items) out.push_back(as_string(item, key));
  return out;
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string fmt_triple(const std::array<double, 3>& a) {
  return "[" + format_double(a[0]) + ", " + format_double(a[1]) + ", " + format_double(a[2]) + "]";
}

std::string fmt_strings(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + quote(items[i]);
  return out + "]";
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const Value&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Order here is the dump order; sections follow the dotted prefix.
const std::vector<Field>& fields() {
  using V = const Value&;
  using K = const std::string&;
  static const std::vector<Field> table = {
      {"seed", [](RunConfig& c, V v, K k) { c.seed = as_integer<std::uint64_t>(v, k); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"data.root", [](RunConfig& c, V v, K k) { c.data_root = as_string(v, k); },
       [](const RunConfig& c) { return quote(c.data_root); }},
      {"data.classes", [](RunConfig& c, V v, K k) { c.classes = as_strings(v, k); },
       [](const RunConfig& c) { return fmt_strings(c.classes); }},
      {"data.train_fraction", [](RunConfig& c, V v, K k) { c.train_fraction = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.train_fraction); }},
      {"output.dir", [](RunConfig& c, V v, K k) { c.output_dir = as_string(v, k); },
       [](const RunConfig& c) { return quote(c.output_dir); }},
      {"train.lr", [](RunConfig& c, V v, K k) { c.train.lr = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.train.lr); }},
      {"train.batch_size", [](RunConfig& c, V v, K k) { c.train.batch_size = as_integer<int>(v, k); },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"train.epochs", [](RunConfig& c, V v, K k) { c.train.epochs = as_integer<int>(v, k); },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"train.weight_decay", [](RunConfig& c, V v, K k) { c.train.weight_decay = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.train.weight_decay); }},
      {"train.optimizer", [](RunConfig& c, V v, K k) { c.train.optimizer = as_string(v, k); },
       [](const RunConfig& c) { return quote(c.train.optimizer); }},
      {"train.loss", [](RunConfig& c, V v, K k) { c.train.loss = as_string(v, k); },
       [](const RunConfig& c) { return quote(c.train.loss); }},
      {"train.beta1", [](RunConfig& c, V v, K k) { c.train.beta1 = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.train.beta1); }},
      {"train.beta2", [](RunConfig& c, V v, K k) { c.train.beta2 = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.train.beta2); }},
      {"train.eps", [](RunConfig& c, V v, K k) { c.train.eps = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.train.eps); }},
      {"train.joint_training", [](RunConfig& c, V v, K k) { c.train.joint_training = as_bool(v, k); },
       [](const RunConfig& c) { return fmt_bool(c.train.joint_training); }},
      {"model.variant",
       [](RunConfig& c, V v, K k) {
         try {
           c.variant = parse_variant(as_string(v, k));
         } catch (const Error& e) {
           if (e.kind() == ErrorKind::ConfigError) throw;
           config_fail(k, "expected \"full\" or \"tiny\"");
         }
       },
       [](const RunConfig& c) { return quote(to_string(c.variant)); }},
      {"model.fusion",
       [](RunConfig& c, V v, K k) {
         try {
           c.fusion = parse_fusion(as_string(v, k));
         } catch (const Error& e) {
           if (e.kind() == ErrorKind::ConfigError) throw;
           config_fail(k, "expected \"mean_prob\" or \"mean_logit\"");
         }
       },
       [](const RunConfig& c) { return quote(to_string(c.fusion)); }},
      {"model.init_checkpoint", [](RunConfig& c, V v, K k) { c.init_checkpoint = as_string(v, k); },
       [](const RunConfig& c) { return quote(c.init_checkpoint); }},
      {"input.size", [](RunConfig& c, V v, K k) { c.input_size = as_integer<int>(v, k); },
       [](const RunConfig& c) { return std::to_string(c.input_size); }},
      {"augment.enabled", [](RunConfig& c, V v, K k) { c.augment.enabled = as_bool(v, k); },
       [](const RunConfig& c) { return fmt_bool(c.augment.enabled); }},
      {"augment.hflip_prob", [](RunConfig& c, V v, K k) { c.augment.hflip_prob = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.augment.hflip_prob); }},
      {"augment.rotation_max_deg", [](RunConfig& c, V v, K k) { c.augment.rotation_max_deg = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.augment.rotation_max_deg); }},
      {"normalize.mean", [](RunConfig& c, V v, K k) { c.normalize.mean = as_triple(v, k); },
       [](const RunConfig& c) { return fmt_triple(c.normalize.mean); }},
      {"normalize.std", [](RunConfig& c, V v, K k) { c.normalize.std = as_triple(v, k); },
       [](const RunConfig& c) { return fmt_triple(c.normalize.std); }},
      {"tsne.perplexity", [](RunConfig& c, V v, K k) { c.tsne.perplexity = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.tsne.perplexity); }},
      {"tsne.iterations", [](RunConfig& c, V v, K k) { c.tsne.iterations = as_integer<int>(v, k); },
       [](const RunConfig& c) { return std::to_string(c.tsne.iterations); }},
      {"tsne.learning_rate", [](RunConfig& c, V v, K k) { c.tsne.learning_rate = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.tsne.learning_rate); }},
      {"tsne.early_exaggeration", [](RunConfig& c, V v, K k) { c.tsne.early_exaggeration = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.tsne.early_exaggeration); }},
      {"tsne.exaggeration_iters", [](RunConfig& c, V v, K k) { c.tsne.exaggeration_iters = as_integer<int>(v, k); },
       [](const RunConfig& c) { return std::to_string(c.tsne.exaggeration_iters); }},
      {"tsne.momentum_initial", [](RunConfig& c, V v, K k) { c.tsne.initial_momentum = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.tsne.initial_momentum); }},
      {"tsne.momentum_final", [](RunConfig& c, V v, K k) { c.tsne.final_momentum = as_double(v, k); },
       [](const RunConfig& c) { return format_double(c.tsne.final_momentum); }},
      {"tsne.momentum_switch_iter", [](RunConfig& c, V v, K k) { c.tsne.momentum_switch_iter = as_integer<int>(v, k); },
       [](const RunConfig& c) { return std::to_string(c.tsne.momentum_switch_iter); }},
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '_' || ch == '.';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

void RunConfig::propagate_seed() {
  train.seed = seed;
  augment.seed = seed;
  tsne.seed = seed;
}

void RunConfig::validate() const {
  try {
    if (data_root.empty()) throw Error(ErrorKind::InvalidArgument, "data.root must not be empty");
    if (output_dir.empty()) throw Error(ErrorKind::InvalidArgument, "output.dir must not be empty");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "data.train_fraction must lie in (0, 1)");
    }
    if (!classes.empty()) (void)ClassSet{classes};
    if (input_size < 16) throw Error(ErrorKind::InvalidArgument, "input.size must be >= 16");
    train.validate();
    augment.validate();
    normalize.validate();
    tsne.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    throw Error(ErrorKind::ConfigError, e.what());
  }
}

PreprocessConfig RunConfig::preprocess() const {
  PreprocessConfig p;
  p.input_size = input_size;
  p.augment = augment;
  p.stats = normalize;
  return p;
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const std::string_view raw = text.substr(start, nl == std::string_view::npos ? text.size() - start : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "line " + std::to_string(line_no);

    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::ConfigError, where + ": malformed section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw Error(ErrorKind::ConfigError, where + ": bad section name");
      section = std::string(name);
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorKind::ConfigError, where + ": expected key = value");
    const auto local = trim(line.substr(0, eq));
    if (!valid_name(local)) throw Error(ErrorKind::ConfigError, where + ": bad key '" + std::string(local) + "'");
    const std::string key = section.empty() ? std::string(local) : section + "." + std::string(local);

    const Field* field = find_field(key);
    if (!field) config_fail(key, "unknown key (" + where + ")");
    if (!seen.insert(key).second) config_fail(key, "duplicate key (" + where + ")");

    const std::string_view rest = line.substr(eq + 1);
    std::size_t pos = 0;
    const Value value = parse_value(rest, pos, key, false);
    const auto tail = trim(rest.substr(pos));
    if (!tail.empty() && tail.front() != '#') config_fail(key, "trailing characters after value (" + where + ")");
    field->set(cfg, value, key);
  }
  cfg.propagate_seed();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return parse_config(text);
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.rfind('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      out << "\n[" << sec << "]\n";
      section = sec;
    }
    out << name << " = " << f.get(cfg) << "\n";
  }
  return out.str();
}

void apply_env_overrides(RunConfig& cfg) {
  const char* env = std::getenv("SEED");
  if (env == nullptr || *env == '\0') return;
  const std::string_view s(env);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::ConfigError, "SEED environment variable is not an unsigned integer: " + std::string(s));
  }
  cfg.seed = seed;
  cfg.propagate_seed();
}

}  // namespace vce
