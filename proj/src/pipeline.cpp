#include "deanet/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "deanet/adam.hpp"
#include "deanet/checkpoint.hpp"
#include "deanet/error.hpp"
#include "deanet/log.hpp"
#include "deanet/png_io.hpp"

namespace deanet {

namespace fs = std::filesystem;

// ------------------------------------------------------------ conversion

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  return Tensor<T>({1, img.channels(), img.height(), img.width()}, std::vector<T>(img.data().begin(), img.data().end()));
}

template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("images_to_tensor: no images");
  const Image& first = images.front();
  std::vector<T> v;
  v.reserve(first.size() * images.size());
  for (const Image& img : images) {
    require_same_shape(first, img, "images_to_tensor");
    v.insert(v.end(), img.data().begin(), img.data().end());
  }
  return Tensor<T>({static_cast<int>(images.size()), first.channels(), first.height(), first.width()}, std::move(v));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int sample) {
  if (t.rank() != 4 || sample < 0 || sample >= t.dim(0))
    throw ShapeError("tensor_to_image: expected [N,C,H,W] with sample " + std::to_string(sample) + ", got " +
                     shape_string(t.shape()));
  const std::size_t n = static_cast<std::size_t>(t.dim(1)) * t.dim(2) * t.dim(3);
  const auto d = t.data().subspan(n * sample, n);
  return Image(t.dim(2), t.dim(3), t.dim(1), std::vector<double>(d.begin(), d.end()));
}

// ------------------------------------------------------------ objectives

template <typename T>
DecomLossTerms<T> stage1_objective(const DecomNet<T>& decom, const Tensor<T>& source_low, const Tensor<T>& source_high) {
  const Decomposition<T> low = decom.forward(source_low);
  const Decomposition<T> high = decom.forward(source_high);
  return decom_loss(source_low, low, source_high, high);
}

template <typename T>
Stage2Output<T> stage2_objective(const DecomNet<T>& decom, const EnhanceNet<T>& enhance, const AdjustNet<T>& adjust,
                                 const FeatureExtractor<T>& fx, const Stage2Inputs<T>& in) {
  Stage2Output<T> out;
  out.low = decom.forward(in.source_low);
  out.high = decom.forward(in.source_high);
  out.enhanced = enhance.forward(in.hf_low, out.low);
  // Normal-light components are targets only.
  const EnhanceTargets<T> targets{in.hf_high, out.high.reflectance.detach(), out.high.illumination.detach()};
  out.enhance_terms = enhance_loss(out.enhanced, targets);
  out.final_image = adjust.forward(out.enhanced);
  out.joint_terms = joint_loss(out.final_image, in.reference, out.enhance_terms, fx);
  return out;
}

template <typename T>
FeatureExtractor<T> make_feature_extractor(const LossSettings& settings) {
  if (settings.extractor.empty()) return FeatureExtractor<T>(settings.extractor_seed, settings.content_taps);
  return FeatureExtractor<T>::from_checkpoint(read_checkpoint(settings.extractor), settings.content_taps,
                                              settings.extractor);
}

namespace {

// -------------------------------------------------------------- WLS cache

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string exact(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

std::string wls_cache_key(const fs::path& file, const WlsParams& p) {
  std::error_code ec;
  const fs::path abs = fs::absolute(file, ec);
  const auto size = fs::file_size(file, ec);
  const auto stamp = fs::last_write_time(file, ec).time_since_epoch().count();
  const std::string text = abs.string() + "|" + std::to_string(size) + "|" + std::to_string(stamp) + "|" +
                           exact(p.lambda) + "|" + exact(p.alpha) + "|" + exact(p.eps) + "|" +
                           std::to_string(static_cast<int>(p.guide)) + "|" + exact(p.tolerance) + "|" +
                           std::to_string(p.max_iter_factor);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return hex;
}

CheckpointEntry image_entry(const std::string& name, const Image& img) {
  return {name,
          {static_cast<std::uint32_t>(img.channels()), static_cast<std::uint32_t>(img.height()),
           static_cast<std::uint32_t>(img.width())},
          std::vector<float>(img.data().begin(), img.data().end())};
}

std::optional<Image> entry_image(std::span<const CheckpointEntry> entries, const std::string& name, const Image& like) {
  const CheckpointEntry* e = find_entry(entries, name);
  if (!e || e->dims.size() != 3 || static_cast<int>(e->dims[0]) != like.channels() ||
      static_cast<int>(e->dims[1]) != like.height() || static_cast<int>(e->dims[2]) != like.width())
    return std::nullopt;
  return Image(like.height(), like.width(), like.channels(), std::vector<double>(e->values.begin(), e->values.end()));
}

struct PairSplits {
  Image low, high;
  FrequencySplit low_split, high_split;
};

class SplitProvider {
 public:
  SplitProvider(const PairedDataset& data, const Config& config, fs::path cache_dir)
      : data_(data), config_(config), cache_dir_(std::move(cache_dir)) {}

  PairSplits get(std::size_t i) {
    if (config_.train.wls_cache == WlsCache::memory) {
      auto it = memory_.find(i);
      if (it != memory_.end()) return it->second;
    }
    auto [low, high] = data_.load(i);
    PairSplits s{low, high, split(low, data_.pair(i).low), split(high, data_.pair(i).high)};
    if (config_.train.wls_cache == WlsCache::memory) memory_.emplace(i, s);
    return s;
  }

 private:
  FrequencySplit split(const Image& img, const fs::path& file) {
    if (config_.train.wls_cache != WlsCache::disk) return frequency_split(img, config_.wls);
    const fs::path path = cache_dir_ / (wls_cache_key(file, config_.wls) + ".dean");
    std::error_code ec;
    if (fs::exists(path, ec)) {
      const auto entries = read_checkpoint(path);
      auto low = entry_image(entries, "wls.low", img), high = entry_image(entries, "wls.high", img);
      if (low && high) return {std::move(*low), std::move(*high), config_.wls};
      log::warn("ignoring stale WLS cache entry " + path.string());
    }
    FrequencySplit s = frequency_split(img, config_.wls);
    // Rounded like the float training tensors so cached and fresh runs agree.
    for (double& v : s.low_freq.data()) v = static_cast<float>(v);
    for (double& v : s.high_freq.data()) v = static_cast<float>(v);
    fs::create_directories(cache_dir_);
    write_checkpoint(path, std::vector<CheckpointEntry>{image_entry("wls.low", s.low_freq), image_entry("wls.high", s.high_freq)});
    return s;
  }

  const PairedDataset& data_;
  const Config& config_;
  fs::path cache_dir_;
  std::map<std::size_t, PairSplits> memory_;
};

// ---------------------------------------------------------------- sampler

struct Batch {
  Tensor<float> low, high, lf_low, lf_high, hf_low, hf_high;
};

class Sampler {
 public:
  Sampler(const PairedDataset& data, const Config& config, const fs::path& ckpt_dir)
      : data_(data), config_(config), splits_(data, config, ckpt_dir / "wls_cache") {
    if (data.size() == 0) throw DataError("training dataset is empty");
    const int p = config.train.patch_size;
    for (const auto& pair : data.pairs())
      if (pair.height < p || pair.width < p)
        throw DataError(pair.low.string() + ": " + std::to_string(pair.width) + "x" + std::to_string(pair.height) +
                        " is smaller than train.patch_size = " + std::to_string(p));
  }

  int steps_per_epoch() const {
    const int bs = config_.train.batch_size;
    return static_cast<int>((data_.size() + bs - 1) / bs);
  }

  Batch batch(int step) {
    const int spe = steps_per_epoch(), epoch = step / spe, k = step % spe;
    const auto& order = permutation(epoch);
    const std::size_t first = static_cast<std::size_t>(k) * config_.train.batch_size;
    const std::size_t last = std::min(order.size(), first + config_.train.batch_size);
    std::vector<Image> imgs[6];
    const int p = config_.train.patch_size;
    const std::uint64_t seed = config_.train.seed;
    for (std::size_t j = first; j < last; ++j) {
      PairSplits s = splits_.get(order[j]);
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(j - first), 0x43524f50u};
      std::mt19937_64 rng(seq);
      const int y0 = std::uniform_int_distribution<int>(0, s.low.height() - p)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, s.low.width() - p)(rng);
      const bool flip = config_.train.flip && std::bernoulli_distribution(0.5)(rng);
      const Image* sources[6] = {&s.low, &s.high, &s.low_split.low_freq, &s.high_split.low_freq,
                                 &s.low_split.high_freq, &s.high_split.high_freq};
      for (int m = 0; m < 6; ++m) {
        Image c = crop(*sources[m], y0, x0, p, p);
        imgs[m].push_back(flip ? flip_horizontal(c) : std::move(c));
      }
    }
    auto stack = [&](int m) { return images_to_tensor<float>(imgs[m]); };
    return {stack(0), stack(1), stack(2), stack(3), stack(4), stack(5)};
  }

 private:
  const std::vector<std::size_t>& permutation(int epoch) {
    if (epoch != cached_epoch_) {
      order_.resize(data_.size());
      for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
      const std::uint64_t seed = config_.train.seed;
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(epoch), 0x5045524du};
      std::mt19937_64 rng(seq);
      std::shuffle(order_.begin(), order_.end(), rng);
      cached_epoch_ = epoch;
    }
    return order_;
  }

  const PairedDataset& data_;
  const Config& config_;
  SplitProvider splits_;
  int cached_epoch_ = -1;
  std::vector<std::size_t> order_;
};

// -------------------------------------------------------------------- logs

class CsvLog {
 public:
  CsvLog(const fs::path& path, const std::vector<std::string>& columns, int start_step, bool resume) : path_(path) {
    fs::create_directories(path.parent_path());
    std::string header;
    for (std::size_t i = 0; i < columns.size(); ++i) header += (i ? "," : "") + columns[i];
    std::vector<std::string> kept;
    if (resume && fs::exists(path)) {
      std::ifstream in(path);
      std::string line;
      std::getline(in, line);
      if (line != header) throw DataError(path.string() + ": log header does not match this run's columns");
      while (std::getline(in, line)) {
        int step = -1;
        std::from_chars(line.data(), line.data() + line.size(), step);
        if (step >= 0 && step < start_step) kept.push_back(line);
      }
    }
    out_ = std::fopen(path.string().c_str(), "wb");
    if (!out_) throw DataError("cannot write training log " + path.string());
    std::fprintf(out_, "%s\n", header.c_str());
    for (const auto& l : kept) std::fprintf(out_, "%s\n", l.c_str());
  }
  ~CsvLog() {
    if (out_) std::fclose(out_);
  }
  CsvLog(const CsvLog&) = delete;
  CsvLog& operator=(const CsvLog&) = delete;

  void row(int step, int epoch, const std::vector<double>& values) {
    std::fprintf(out_, "%d,%d", step, epoch);
    for (double v : values) std::fprintf(out_, ",%.9g", v);
    std::fprintf(out_, "\n");
    std::fflush(out_);
  }

 private:
  fs::path path_;
  std::FILE* out_ = nullptr;
};

// ------------------------------------------------------------- checkpoints

void save_training_state(const fs::path& path, const Module<float>& module, const AdamState<float>& adam, int step) {
  auto entries = export_parameters(module);
  auto moments = export_adam_state(module, adam);
  entries.insert(entries.end(), std::make_move_iterator(moments.begin()), std::make_move_iterator(moments.end()));
  entries.push_back({"train.step", {}, {static_cast<float>(step)}});
  const fs::path tmp = path.string() + ".tmp";
  write_checkpoint(tmp, entries);
  fs::rename(tmp, path);
}

// Returns the stored step (0 when the file holds parameters only).
int load_training_state(const fs::path& path, Module<float>& module, AdamState<float>& adam) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  const auto entries = read_checkpoint(path);
  import_parameters(module, entries, path.string());
  import_adam_state(module, entries, adam);
  const CheckpointEntry* step = find_entry(entries, "train.step");
  return step ? static_cast<int>(step->values.at(0)) : 0;
}

void load_parameters(const fs::path& path, Module<float>& module, const char* what) {
  if (!fs::exists(path)) throw DataError(std::string(what) + ": checkpoint not found: " + path.string());
  import_parameters(module, read_checkpoint(path), path.string());
}

// ------------------------------------------------------------------ helpers

int total_steps(const Config& c, int steps_per_epoch) {
  return c.train.steps > 0 ? c.train.steps : c.train.epochs * steps_per_epoch;
}

double learning_rate(const Config& c, int epoch) { return c.train.lr * std::pow(c.train.lr_decay, epoch); }

bool checkpoint_due(const Config& c, int step, int steps_per_epoch, int end) {
  const int done = step + 1;
  return done % steps_per_epoch == 0 || (c.train.checkpoint_every > 0 && done % c.train.checkpoint_every == 0) ||
         done == end;
}

struct NamedValue {
  const char* name;
  double value;
};

void require_finite(const char* stage, int step, const std::vector<NamedValue>& terms) {
  bool ok = true;
  for (const auto& t : terms) ok = ok && std::isfinite(t.value);
  if (ok) return;
  std::string msg = std::string(stage) + " step " + std::to_string(step) + ": non-finite loss (";
  for (std::size_t i = 0; i < terms.size(); ++i) msg += (i ? ", " : "") + std::string(terms[i].name) + "=" + exact(terms[i].value);
  throw NumericalError(msg + ")");
}

double batch_psnr(const Tensor<float>& a, const Tensor<float>& b) {
  double mse = 0;
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  return mse == 0 ? std::numeric_limits<double>::infinity() : 10 * std::log10(1 / mse);
}

void write_effective_config(const fs::path& dir, const Config& config) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.txt") << dump_config(config);
}

struct Sources {
  Tensor<float> low, high;
};

Sources pick_sources(const Config& c, const Batch& b) {
  if (c.train.decom_source == DecomSource::lf) return {b.lf_low, b.lf_high};
  return {b.low, b.high};
}

std::vector<std::string> columns(std::initializer_list<const char*> names) {
  std::vector<std::string> out{"step", "epoch", "lr"};
  for (const char* n : names) out.emplace_back(n);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- training

TrainReport train_stage1(const PairedDataset& data, const Config& config, const TrainOptions& options) {
  config.validate();
  Sampler sampler(data, config, options.ckpt_dir);
  const fs::path dir = options.ckpt_dir / "stage1";
  write_effective_config(dir, config);
  DecomNet<float> decom(config.net, config.train.seed + 1);
  AdamState<float> adam;
  const fs::path ckpt = options.ckpt_dir / kDecomCheckpoint;
  int start = options.resume && fs::exists(ckpt) ? load_training_state(ckpt, decom, adam) : 0;
  const int spe = sampler.steps_per_epoch(), total = total_steps(config, spe);
  int end = total;
  if (options.max_steps_this_run > 0) end = std::min(end, start + options.max_steps_this_run);

  TrainReport report{start, 0, total, {}, dir / "train_log.csv"};
  CsvLog log(report.log_path,
             columns({"l_r", "l_recon_low", "l_recon_high", "l_recon_low_mutual", "l_recon_high_mutual", "total"}), start,
             options.resume);
  auto params = decom.parameters();
  for (int step = start; step < end; ++step) {
    const int epoch = step / spe;
    const Batch b = sampler.batch(step);
    const Sources src = pick_sources(config, b);
    decom.zero_grad();
    const DecomLossTerms<float> t = stage1_objective(decom, src.low, src.high);
    const std::vector<NamedValue> values{{"l_r", t.l_r.item()},
                                         {"l_recon_low", t.l_recon_low.item()},
                                         {"l_recon_high", t.l_recon_high.item()},
                                         {"l_recon_low_mutual", t.l_recon_low_mutual.item()},
                                         {"l_recon_high_mutual", t.l_recon_high_mutual.item()},
                                         {"total", t.total.item()}};
    require_finite("stage 1", step, values);
    t.total.backward();
    adam.lr = static_cast<float>(learning_rate(config, epoch));
    adam_step(std::span<Tensor<float>>(params), adam);
    std::vector<double> row{adam.lr};
    for (const auto& v : values) row.push_back(v.value);
    log.row(step, epoch, row);
    report.totals.push_back(values.back().value);
    ++report.steps_run;
    if (step % 50 == 0 || step + 1 == end)
      log::info("stage 1 step " + std::to_string(step) + "/" + std::to_string(total) + " total=" + exact(values.back().value));
    if (checkpoint_due(config, step, spe, end)) save_training_state(ckpt, decom, adam, step + 1);
  }
  return report;
}

namespace {

TrainReport train_enhancement(const PairedDataset& data, const Config& config, const TrainOptions& options, bool joint) {
  config.validate();
  Sampler sampler(data, config, options.ckpt_dir);
  const fs::path dir = options.ckpt_dir / (joint ? "joint" : "stage2");
  write_effective_config(dir, config);
  DecomNet<float> decom(config.net, config.train.seed + 1);
  EnhanceNet<float> enhance(config.net, config.train.seed + 2);
  AdjustNet<float> adjust(config.net, config.train.seed + 3);
  AdamState<float> decom_adam, enhance_adam, adjust_adam;
  const fs::path decom_ckpt = options.ckpt_dir / kDecomCheckpoint;
  const fs::path enhance_ckpt = options.ckpt_dir / kEnhanceCheckpoint;
  const fs::path adjust_ckpt = options.ckpt_dir / kAdjustCheckpoint;

  int start = 0;
  if (joint) {
    if (options.resume && fs::exists(enhance_ckpt)) {
      start = load_training_state(decom_ckpt, decom, decom_adam);
      if (load_training_state(enhance_ckpt, enhance, enhance_adam) != start ||
          load_training_state(adjust_ckpt, adjust, adjust_adam) != start)
        throw DataError("checkpoints in " + options.ckpt_dir.string() + " are from different steps");
    }
  } else {
    if (!fs::exists(decom_ckpt))
      throw DataError("stage 2 needs the stage-1 checkpoint " + decom_ckpt.string() + " (run train --stage 1 first)");
    load_parameters(decom_ckpt, decom, "stage 2");
    decom.set_trainable(false);
    if (options.resume && fs::exists(enhance_ckpt)) {
      start = load_training_state(enhance_ckpt, enhance, enhance_adam);
      if (load_training_state(adjust_ckpt, adjust, adjust_adam) != start)
        throw DataError(enhance_ckpt.string() + " and " + adjust_ckpt.string() + " are from different steps");
    }
  }
  const FeatureExtractor<float> fx = make_feature_extractor<float>(config.loss);
  const int spe = sampler.steps_per_epoch(), total = total_steps(config, spe);
  int end = total;
  if (options.max_steps_this_run > 0) end = std::min(end, start + options.max_steps_this_run);

  TrainReport report{start, 0, total, {}, dir / "train_log.csv"};
  const auto cols = joint ? columns({"l_decom", "l_hf", "l_en_r", "l_en_l", "l_enhance", "l_colour", "l_content",
                                     "total", "psnr"})
                          : columns({"l_hf", "l_en_r", "l_en_l", "l_enhance", "l_colour", "l_content", "total", "psnr"});
  CsvLog log(report.log_path, cols, start, options.resume);
  auto decom_params = decom.parameters();
  auto enhance_params = enhance.parameters();
  auto adjust_params = adjust.parameters();
  const char* stage = joint ? "joint" : "stage 2";
  for (int step = start; step < end; ++step) {
    const int epoch = step / spe;
    const Batch b = sampler.batch(step);
    const Sources src = pick_sources(config, b);
    decom.zero_grad();
    enhance.zero_grad();
    adjust.zero_grad();
    const Stage2Inputs<float> in{src.low, src.high, b.hf_low, b.hf_high, b.high};
    const Stage2Output<float> out = stage2_objective(decom, enhance, adjust, fx, in);
    const JointLossTerms<float>& j = out.joint_terms;
    Tensor<float> objective = j.total;
    std::vector<NamedValue> values;
    if (joint) {
      const DecomLossTerms<float> d = decom_loss(src.low, out.low, src.high, out.high);
      objective = add(d.total, j.total);
      values.push_back({"l_decom", d.total.item()});
    }
    values.insert(values.end(), {{"l_hf", j.l_hf.item()},
                                 {"l_en_r", j.l_en_r.item()},
                                 {"l_en_l", j.l_en_l.item()},
                                 {"l_enhance", j.l_enhance.item()},
                                 {"l_colour", j.l_colour.item()},
                                 {"l_content", j.l_content.item()},
                                 {"total", objective.item()}});
    require_finite(stage, step, values);
    objective.backward();
    const float lr = static_cast<float>(learning_rate(config, epoch));
    if (joint) {
      decom_adam.lr = lr;
      adam_step(std::span<Tensor<float>>(decom_params), decom_adam);
    }
    enhance_adam.lr = lr;
    adjust_adam.lr = lr;
    adam_step(std::span<Tensor<float>>(enhance_params), enhance_adam);
    adam_step(std::span<Tensor<float>>(adjust_params), adjust_adam);
    std::vector<double> row{lr};
    for (const auto& v : values) row.push_back(v.value);
    row.push_back(batch_psnr(out.final_image, b.high));
    log.row(step, epoch, row);
    report.totals.push_back(objective.item());
    ++report.steps_run;
    if (step % 50 == 0 || step + 1 == end)
      log::info(std::string(stage) + " step " + std::to_string(step) + "/" + std::to_string(total) +
                " total=" + exact(objective.item()) + " psnr=" + exact(row.back()));
    if (checkpoint_due(config, step, spe, end)) {
      if (joint) save_training_state(decom_ckpt, decom, decom_adam, step + 1);
      save_training_state(enhance_ckpt, enhance, enhance_adam, step + 1);
      save_training_state(adjust_ckpt, adjust, adjust_adam, step + 1);
    }
  }
  return report;
}

}  // namespace

TrainReport train_stage2(const PairedDataset& data, const Config& config, const TrainOptions& options) {
  return train_enhancement(data, config, options, false);
}

TrainReport train_joint(const PairedDataset& data, const Config& config, const TrainOptions& options) {
  return train_enhancement(data, config, options, true);
}

// ---------------------------------------------------------------- inference

InferenceModels load_inference_models(const fs::path& ckpt_dir, const Config& config) {
  config.net.validate();
  InferenceModels m{DecomNet<float>(config.net), EnhanceNet<float>(config.net), AdjustNet<float>(config.net)};
  load_parameters(ckpt_dir / kDecomCheckpoint, m.decom, "enhance");
  load_parameters(ckpt_dir / kEnhanceCheckpoint, m.enhance, "enhance");
  load_parameters(ckpt_dir / kAdjustCheckpoint, m.adjust, "enhance");
  m.decom.set_trainable(false);
  m.enhance.set_trainable(false);
  m.adjust.set_trainable(false);
  return m;
}

EnhanceResult enhance_image(const Image& img, const InferenceModels& models, const Config& config) {
  if (img.channels() != 3) throw ShapeError("enhance: expected an RGB image, got " + img.shape_string());
  const int d = config.net.divisor();
  const int h = img.height(), w = img.width();
  const int ph = (h + d - 1) / d * d, pw = (w + d - 1) / d * d;
  const FrequencySplit split = frequency_split(img, config.wls);
  const Image& source = config.train.decom_source == DecomSource::lf ? split.low_freq : img;
  const Tensor<float> src = image_to_tensor<float>(pad_replicate(source, ph, pw));
  const Tensor<float> hf = image_to_tensor<float>(pad_replicate(split.high_freq, ph, pw));
  const Decomposition<float> decomp = models.decom.forward(src);
  const EnhanceOutput<float> enh = models.enhance.forward(hf, decomp);
  const Tensor<float> final_image = models.adjust.forward(enh);
  auto back = [&](const Tensor<float>& t) { return crop(tensor_to_image(t), 0, 0, h, w); };
  EnhanceResult r;
  r.final_image = clamp01(back(final_image));
  r.low_freq = split.low_freq;
  r.high_freq = split.high_freq;
  r.reflectance = back(decomp.reflectance);
  r.illumination = back(decomp.illumination);
  r.hf_enhanced = back(enh.hf_enhanced);
  r.reflectance_enhanced = back(enh.reflectance_enhanced);
  r.illumination_enhanced = back(enh.illumination_enhanced);
  return r;
}

void write_intermediates(const EnhanceResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  auto centred = [](Image img) {
    for (double& v : img.data()) v += 0.5;
    return img;
  };
  write_png(dir / "final.png", r.final_image);
  write_png(dir / "low_freq.png", r.low_freq);
  write_png(dir / "high_freq.png", centred(r.high_freq));
  write_png(dir / "reflectance.png", r.reflectance);
  write_png(dir / "illumination.png", r.illumination);
  write_png(dir / "hf_enhanced.png", centred(r.hf_enhanced));
  write_png(dir / "reflectance_enhanced.png", r.reflectance_enhanced);
  write_png(dir / "illumination_enhanced.png", r.illumination_enhanced);
}

// --------------------------------------------------------------- evaluation

EvalReport evaluate(const PairedDataset& data, const EnhanceFn& enhance, const NiqeModel* niqe_model) {
  EvalReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    EvalEntry entry{data.pair(i).name, std::nullopt, {}};
    try {
      auto [low, high] = data.load(i);
      const Image out = enhance(low, high);
      entry.report = compute_metrics(out, high, niqe_model);
    } catch (const Error& e) {
      entry.error = e.what();
      ++report.failures;
      log::warn("evaluate: " + entry.name + ": " + entry.error);
    }
    report.entries.push_back(std::move(entry));
  }
  int ok = 0, finite_psnr = 0;
  double psnr_sum = 0, niqe_sum = 0;
  MetricReport& m = report.mean;
  for (const auto& e : report.entries) {
    if (!e.report) continue;
    ++ok;
    const MetricReport& r = *e.report;
    if (std::isinf(r.psnr)) {
      ++report.psnr_infinite;
    } else {
      psnr_sum += r.psnr;
      ++finite_psnr;
    }
    m.ssim += r.ssim;
    m.fsim += r.fsim;
    m.mae += r.mae;
    m.gmsd += r.gmsd;
    if (r.niqe) niqe_sum += *r.niqe;
  }
  if (ok == 0) throw DataError("evaluate: every image failed (first: " + report.entries.front().name + ": " +
                               report.entries.front().error + ")");
  m.psnr = finite_psnr ? psnr_sum / finite_psnr : std::numeric_limits<double>::infinity();
  m.ssim /= ok;
  m.fsim /= ok;
  m.mae /= ok;
  m.gmsd /= ok;
  if (niqe_model) m.niqe = niqe_sum / ok;
  return report;
}

std::string format_eval_table(const EvalReport& report) {
  const bool with_niqe = report.mean.niqe.has_value();
  std::size_t name_width = 5;
  for (const auto& e : report.entries) name_width = std::max(name_width, e.name.size());
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(s.size(), n), ' ');
    return s;
  };
  std::string out = pad("image", name_width) + "  " + pad("PSNR", 8) + pad("SSIM", 8) + pad("FSIM", 8) + pad("MAE", 8) +
                    (with_niqe ? pad("GMSD", 8) + "NIQE" : std::string("GMSD")) + "\n";
  auto row = [&](const std::string& name, const MetricReport& r, bool mark_inf) {
    std::string psnr = format_metric(r.psnr) + (mark_inf && std::isinf(r.psnr) ? "*" : "");
    std::string line = pad(name, name_width) + "  " + pad(psnr, 8) + pad(format_metric(r.ssim), 8) +
                       pad(format_metric(r.fsim), 8) + pad(format_metric(r.mae), 8);
    line += with_niqe ? pad(format_metric(r.gmsd), 8) + (r.niqe ? format_metric(*r.niqe) : "-") : format_metric(r.gmsd);
    return line + "\n";
  };
  for (const auto& e : report.entries)
    out += e.report ? row(e.name, *e.report, true) : pad(e.name, name_width) + "  error: " + e.error + "\n";
  out += row("mean", report.mean, false);
  if (report.psnr_infinite > 0)
    out += "* infinite PSNR (identical images); " + std::to_string(report.psnr_infinite) +
           " row(s) excluded from the PSNR mean\n";
  if (report.partial())
    out += "! partial result: " + std::to_string(report.failures) + " of " + std::to_string(report.entries.size()) +
           " images failed\n";
  return out;
}

std::string format_eval_csv(const EvalReport& report) {
  const bool with_niqe = report.mean.niqe.has_value();
  std::string out = std::string("image,psnr,ssim,fsim,mae,gmsd") + (with_niqe ? ",niqe" : "") + ",error\n";
  auto values = [&](const MetricReport& r) {
    std::string s = format_metric(r.psnr) + "," + format_metric(r.ssim) + "," + format_metric(r.fsim) + "," +
                    format_metric(r.mae) + "," + format_metric(r.gmsd);
    if (with_niqe) s += "," + (r.niqe ? format_metric(*r.niqe) : std::string());
    return s;
  };
  for (const auto& e : report.entries) {
    if (e.report) {
      out += e.name + "," + values(*e.report) + ",\n";
    } else {
      std::string err = e.error;
      std::replace(err.begin(), err.end(), '"', '\'');
      out += e.name + ",,,,,," + (with_niqe ? "," : "") + "\"" + err + "\"\n";
    }
  }
  out += "mean," + values(report.mean) + "," + (report.partial() ? "partial" : "") + "\n";
  return out;
}

#define DEANET_INSTANTIATE_PIPELINE(T)                                                                            \
  template Tensor<T> image_to_tensor<T>(const Image&);                                                            \
  template Tensor<T> images_to_tensor<T>(std::span<const Image>);                                                 \
  template Image tensor_to_image<T>(const Tensor<T>&, int);                                                       \
  template DecomLossTerms<T> stage1_objective(const DecomNet<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Stage2Output<T> stage2_objective(const DecomNet<T>&, const EnhanceNet<T>&, const AdjustNet<T>&,        \
                                            const FeatureExtractor<T>&, const Stage2Inputs<T>&);                  \
  template FeatureExtractor<T> make_feature_extractor<T>(const LossSettings&);

DEANET_INSTANTIATE_PIPELINE(float)
DEANET_INSTANTIATE_PIPELINE(double)

}  // namespace deanet
