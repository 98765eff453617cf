#include "deanet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "deanet/error.hpp"

namespace deanet {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const std::string& expected) {
  throw ConfigError("config key '" + std::string(key) + "': invalid value '" + std::string(value) + "' (expected " +
                    expected + ")");
}

template <typename N>
N parse_number(std::string_view key, std::string_view v, const char* expected) {
  N out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, expected);
  return out;
}

std::string number_string(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

template <typename E, std::size_t N>
E parse_enum(std::string_view key, std::string_view v, const EnumName<E> (&names)[N]) {
  std::string options;
  for (const auto& n : names) {
    if (v == n.name) return n.value;
    options += (options.empty() ? "" : " | ") + std::string(n.name);
  }
  bad_value(key, v, options);
}

template <typename E, std::size_t N>
std::string enum_string(E v, const EnumName<E> (&names)[N]) {
  for (const auto& n : names)
    if (n.value == v) return n.name;
  return "?";
}

constexpr EnumName<Schedule> kSchedules[] = {{Schedule::staged, "staged"}, {Schedule::joint, "joint"}};
constexpr EnumName<DecomSource> kSources[] = {{DecomSource::lf, "lf"}, {DecomSource::full, "full"}};
constexpr EnumName<WlsCache> kCaches[] = {{WlsCache::none, "none"}, {WlsCache::memory, "memory"}, {WlsCache::disk, "disk"}};
constexpr EnumName<WlsGuide> kGuides[] = {{WlsGuide::luminance, "luminance"}, {WlsGuide::per_channel, "per_channel"}};
constexpr EnumName<UpsampleMode> kUpsample[] = {{UpsampleMode::nearest, "nearest"},
                                                {UpsampleMode::pixel_shuffle, "pixel_shuffle"}};

std::vector<int> parse_int_list(std::string_view key, std::string_view v) {
  std::vector<int> out;
  if (trim(v).empty() || trim(v) == "none") return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    out.push_back(parse_number<int>(key, item, "comma-separated integers"));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string int_list_string(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  const char* key;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

#define DEANET_INT(KEY, MEMBER)                                                                         \
  Field {                                                                                               \
    KEY, [](Config& c, std::string_view v) { c.MEMBER = parse_number<int>(KEY, v, "an integer"); },     \
        [](const Config& c) { return std::to_string(c.MEMBER); }                                        \
  }
#define DEANET_U64(KEY, MEMBER)                                                                                  \
  Field {                                                                                                        \
    KEY, [](Config& c, std::string_view v) { c.MEMBER = parse_number<std::uint64_t>(KEY, v, "an unsigned integer"); }, \
        [](const Config& c) { return std::to_string(c.MEMBER); }                                                 \
  }
#define DEANET_REAL(KEY, MEMBER)                                                                     \
  Field {                                                                                            \
    KEY, [](Config& c, std::string_view v) { c.MEMBER = parse_number<double>(KEY, v, "a number"); }, \
        [](const Config& c) { return number_string(c.MEMBER); }                                      \
  }
#define DEANET_ENUM(KEY, MEMBER, TABLE)                                                  \
  Field {                                                                                \
    KEY, [](Config& c, std::string_view v) { c.MEMBER = parse_enum(KEY, v, TABLE); },    \
        [](const Config& c) { return enum_string(c.MEMBER, TABLE); }                     \
  }
#define DEANET_STRING(KEY, MEMBER) \
  Field { KEY, [](Config& c, std::string_view v) { c.MEMBER = std::string(v); }, [](const Config& c) { return c.MEMBER; } }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DEANET_ENUM("train.schedule", train.schedule, kSchedules),
      DEANET_INT("train.epochs", train.epochs),
      DEANET_INT("train.steps", train.steps),
      DEANET_INT("train.batch_size", train.batch_size),
      DEANET_REAL("train.lr", train.lr),
      DEANET_REAL("train.lr_decay", train.lr_decay),
      DEANET_U64("train.seed", train.seed),
      DEANET_INT("train.patch_size", train.patch_size),
      Field{"train.flip", [](Config& c, std::string_view v) { c.train.flip = parse_bool("train.flip", v); },
            [](const Config& c) { return std::string(c.train.flip ? "true" : "false"); }},
      DEANET_ENUM("train.decom_source", train.decom_source, kSources),
      DEANET_ENUM("train.wls_cache", train.wls_cache, kCaches),
      DEANET_INT("train.checkpoint_every", train.checkpoint_every),
      DEANET_REAL("wls.lambda", wls.lambda),
      DEANET_REAL("wls.alpha", wls.alpha),
      DEANET_REAL("wls.eps", wls.eps),
      DEANET_ENUM("wls.guide", wls.guide, kGuides),
      DEANET_REAL("wls.tolerance", wls.tolerance),
      DEANET_INT("wls.max_iter_factor", wls.max_iter_factor),
      DEANET_INT("net.depth_levels", net.depth_levels),
      DEANET_INT("net.base_channels", net.base_channels),
      DEANET_INT("net.dense_growth", net.dense_growth),
      DEANET_ENUM("net.upsample_mode", net.upsample_mode, kUpsample),
      Field{"loss.content_taps",
            [](Config& c, std::string_view v) { c.loss.content_taps = parse_int_list("loss.content_taps", v); },
            [](const Config& c) { return int_list_string(c.loss.content_taps); }},
      DEANET_STRING("loss.extractor", loss.extractor),
      DEANET_U64("loss.extractor_seed", loss.extractor_seed),
      DEANET_STRING("data.train_dir", data.train_dir),
      DEANET_STRING("data.eval_dir", data.eval_dir),
      DEANET_INT("niqe.patch_size", niqe.patch_size),
      DEANET_REAL("niqe.sharpness_fraction", niqe.sharpness_fraction),
  };
  return f;
}

void set_key(Config& config, std::string_view key, std::string_view value) {
  for (const Field& f : fields())
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void Config::validate() const {
  if (train.epochs < 1 && train.steps < 1) throw ConfigError("train.epochs or train.steps must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(train.lr > 0)) throw ConfigError("train.lr must be > 0");
  if (!(train.lr_decay > 0)) throw ConfigError("train.lr_decay must be > 0");
  if (train.patch_size < 1) throw ConfigError("train.patch_size must be >= 1");
  if (train.patch_size % net.divisor() != 0)
    throw ConfigError("train.patch_size = " + std::to_string(train.patch_size) + " must be divisible by " +
                      std::to_string(net.divisor()) + " (2^(net.depth_levels-1))");
  if (train.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (wls.lambda < 0) throw ConfigError("wls.lambda must be >= 0");
  if (!(wls.alpha > 0)) throw ConfigError("wls.alpha must be > 0");
  if (!(wls.eps > 0)) throw ConfigError("wls.eps must be > 0");
  if (!(wls.tolerance > 0)) throw ConfigError("wls.tolerance must be > 0");
  if (wls.max_iter_factor < 0) throw ConfigError("wls.max_iter_factor must be >= 0");
  net.validate();
  for (int t : loss.content_taps)
    if (t < 0) throw ConfigError("loss.content_taps: negative tap " + std::to_string(t));
  if (niqe.patch_size < 8 || niqe.patch_size % 2) throw ConfigError("niqe.patch_size must be an even number >= 8");
  if (!(niqe.sharpness_fraction > 0 && niqe.sharpness_fraction <= 1))
    throw ConfigError("niqe.sharpness_fraction must be in (0, 1]");
}

void apply_config_text(Config& config, std::string_view text, const std::string& source) {
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'section.key = value'");
      try {
        set_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Config config;
  apply_config_text(config, ss.str(), path);
  return config;
}

void apply_override(Config& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
  set_key(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string dump_config(const Config& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace deanet
