#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deanet/iqa.hpp"
#include "deanet/nets.hpp"
#include "deanet/wls.hpp"

namespace deanet {

enum class Schedule { staged, joint };
enum class DecomSource { lf, full };
enum class WlsCache { none, memory, disk };

struct TrainSettings {
  Schedule schedule = Schedule::staged;
  int epochs = 30;
  int steps = 0;  // > 0 overrides epochs
  int batch_size = 1;
  double lr = 1e-4;
  double lr_decay = 1.0;  // multiplied in once per epoch
  std::uint64_t seed = 42;
  int patch_size = 192;
  bool flip = true;
  DecomSource decom_source = DecomSource::lf;
  WlsCache wls_cache = WlsCache::none;
  int checkpoint_every = 0;  // steps; 0 = once per epoch
};

struct LossSettings {
  std::vector<int> content_taps{2, 4, 7};
  std::string extractor;  // DEAN file with fx.* weights; empty = seeded stack
  std::uint64_t extractor_seed = 7;
};

struct DataSettings {
  std::string train_dir;  // <root>/low, <root>/high
  std::string eval_dir;
};

/// Every tunable of a run, addressable as `section.key`.
struct Config {
  TrainSettings train;
  WlsParams wls;
  NetConfig net;
  LossSettings loss;
  DataSettings data;
  NiqeParams niqe;

  void validate() const;
};

/// Parses flat `section.key = value` lines; `#` starts a comment. Unknown
/// keys and malformed values throw ConfigError naming the key and `source`.
void apply_config_text(Config& config, std::string_view text, const std::string& source);
Config load_config_file(const std::string& path);

/// Applies one `section.key=value` override.
void apply_override(Config& config, std::string_view assignment);

/// Effective configuration as a config file that reproduces it.
std::string dump_config(const Config& config);

std::vector<std::string> config_keys();

}  // namespace deanet
