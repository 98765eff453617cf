#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deanet/checkpoint.hpp"
#include "deanet/image.hpp"

namespace deanet {

/// 10 log10(1 / MSE) over all channels; +inf when the images are identical.
double psnr(const Image& a, const Image& b);

/// Mean absolute error over all channels.
double mae(const Image& a, const Image& b);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM on luma over the 'valid' window positions.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

struct FsimParams {
  int scales = 4;
  int orientations = 4;
  double min_wavelength = 6.0;
  double mult = 2.0;
  double sigma_on_f = 0.55;
  double d_theta_on_sigma = 1.2;
  double noise_k = 2.0;
  double t1 = 0.85;
  double t2 = 160.0;  // on the 0..255 scale
};

/// Phase congruency map of a single-channel image (0..255 scale expected).
std::vector<double> phase_congruency(std::span<const double> image, int height, int width, const FsimParams& params = {});

/// FSIM on luma. Constant images have no phase congruency: identical pairs
/// score 1, anything else throws DataError("undefined similarity").
double fsim(const Image& a, const Image& b, const FsimParams& params = {});

struct GmsdParams {
  double c = 0.0026;  // 170 / 255^2
};

/// Standard deviation of the gradient magnitude similarity map (Prewitt,
/// after 2x2 average downsampling), on luma.
double gmsd(const Image& a, const Image& b, const GmsdParams& params = {});

// ------------------------------------------------------------------ NIQE

inline constexpr int kNiqeFeatures = 36;

struct NiqeParams {
  int patch_size = 96;
  double sharpness_fraction = 0.75;
};

/// Multivariate Gaussian over 36 natural-scene features. Values are kept at
/// float precision so the DEAN serialization round-trips bit-exactly.
struct NiqeModel {
  std::vector<double> mean;        // 36
  std::vector<double> covariance;  // 36 x 36, row-major
  int patch_size = 96;
  double sharpness_fraction = 0.75;
};

/// Per-patch 36-d features of the luma of `img`, plus each patch's mean
/// local sharpness at the first scale. Row-major [patches x 36].
struct NiqePatchFeatures {
  std::vector<double> features;
  std::vector<double> sharpness;
  int count = 0;
};
NiqePatchFeatures niqe_patch_features(const Image& img, int patch_size);

/// Fits the pristine model on a corpus of at least 10 clean images.
NiqeModel niqe_fit(std::span<const Image> corpus, const NiqeParams& params = {});

double niqe(const Image& img, const NiqeModel& model);

std::vector<CheckpointEntry> niqe_to_entries(const NiqeModel& model);
NiqeModel niqe_from_entries(std::span<const CheckpointEntry> entries, const std::string& source);
void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model);
NiqeModel load_niqe_model(const std::filesystem::path& path);

// --------------------------------------------------------------- reports

struct MetricReport {
  double psnr = 0;
  double ssim = 0;
  double fsim = 0;
  double mae = 0;
  double gmsd = 0;
  std::optional<double> niqe;
};

MetricReport compute_metrics(const Image& output, const Image& reference, const NiqeModel* niqe_model = nullptr);

/// Three-decimal value, "inf" for infinite PSNR.
std::string format_metric(double value);
/// "name value" lines.
std::string format_report_table(const MetricReport& report);
/// Header line plus one data line.
std::string format_report_csv(const MetricReport& report);

}  // namespace deanet
