#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deanet/config.hpp"
#include "deanet/dataset.hpp"
#include "deanet/iqa.hpp"
#include "deanet/losses.hpp"
#include "deanet/nets.hpp"
#include "deanet/wls.hpp"

namespace deanet {

// ------------------------------------------------------------ conversion

template <typename T>
Tensor<T> image_to_tensor(const Image& img);
// Stacks equally shaped images into [N,C,H,W].
template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images);
template <typename T>
Image tensor_to_image(const Tensor<T>& t, int sample = 0);

// ------------------------------------------------------------ objectives

template <typename T>
DecomLossTerms<T> stage1_objective(const DecomNet<T>& decom, const Tensor<T>& source_low, const Tensor<T>& source_high);

/// Inputs of one enhancement step. `source_*` feed Decom-Net (low-frequency
/// or full images), `hf_*` are the detail layers and `reference` is the
/// normal-light image.
template <typename T>
struct Stage2Inputs {
  Tensor<T> source_low, source_high;
  Tensor<T> hf_low, hf_high;
  Tensor<T> reference;
};

template <typename T>
struct Stage2Output {
  Decomposition<T> low, high;
  EnhanceOutput<T> enhanced;
  Tensor<T> final_image;
  EnhanceLossTerms<T> enhance_terms;
  JointLossTerms<T> joint_terms;
};

template <typename T>
Stage2Output<T> stage2_objective(const DecomNet<T>& decom, const EnhanceNet<T>& enhance, const AdjustNet<T>& adjust,
                                 const FeatureExtractor<T>& fx, const Stage2Inputs<T>& in);

template <typename T>
FeatureExtractor<T> make_feature_extractor(const LossSettings& settings);

// -------------------------------------------------------------- training

struct TrainOptions {
  std::filesystem::path ckpt_dir;
  bool resume = false;
  int max_steps_this_run = 0;  // 0 = run to the configured end
};

struct TrainReport {
  int first_step = 0;
  int steps_run = 0;
  int total_steps = 0;
  std::vector<double> totals;  // objective per executed step
  std::filesystem::path log_path;
};

inline constexpr const char* kDecomCheckpoint = "decom.dean";
inline constexpr const char* kEnhanceCheckpoint = "enhance.dean";
inline constexpr const char* kAdjustCheckpoint = "adjust.dean";

/// Decom-Net on its own objective; logs to <ckpt>/stage1/train_log.csv.
TrainReport train_stage1(const PairedDataset& data, const Config& config, const TrainOptions& options);
/// Enhance-Net + Adjust-Net with Decom-Net frozen from <ckpt>/decom.dean;
/// logs to <ckpt>/stage2/train_log.csv.
TrainReport train_stage2(const PairedDataset& data, const Config& config, const TrainOptions& options);
/// All three networks on the summed objectives; logs to <ckpt>/joint/.
TrainReport train_joint(const PairedDataset& data, const Config& config, const TrainOptions& options);

// ------------------------------------------------------------- inference

struct InferenceModels {
  DecomNet<float> decom;
  EnhanceNet<float> enhance;
  AdjustNet<float> adjust;
};

/// Loads all three checkpoints from `ckpt_dir`; a missing file is a
/// DataError naming it.
InferenceModels load_inference_models(const std::filesystem::path& ckpt_dir, const Config& config);

struct EnhanceResult {
  Image final_image;
  Image low_freq, high_freq;
  Image reflectance, illumination;
  Image hf_enhanced, reflectance_enhanced, illumination_enhanced;
};

/// Full chain on one image. Inputs whose sides are not divisible by
/// 2^(depth-1) are replicate-padded and cropped back; the result is clamped.
EnhanceResult enhance_image(const Image& img, const InferenceModels& models, const Config& config);
void write_intermediates(const EnhanceResult& result, const std::filesystem::path& dir);

// ------------------------------------------------------------ evaluation

using EnhanceFn = std::function<Image(const Image& low, const Image& high)>;

struct EvalEntry {
  std::string name;
  std::optional<MetricReport> report;
  std::string error;
};

struct EvalReport {
  std::vector<EvalEntry> entries;
  MetricReport mean;
  int psnr_infinite = 0;  // rows left out of the PSNR mean
  int failures = 0;
  bool partial() const { return failures > 0; }
};

EvalReport evaluate(const PairedDataset& data, const EnhanceFn& enhance, const NiqeModel* niqe_model = nullptr);
std::string format_eval_table(const EvalReport& report);
std::string format_eval_csv(const EvalReport& report);

}  // namespace deanet
