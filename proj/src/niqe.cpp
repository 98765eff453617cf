#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "deanet/error.hpp"
#include "deanet/iqa.hpp"

namespace deanet {
namespace {

using Plane = std::vector<double>;
constexpr int kFeaturesPerScale = 18;

// Shape-parameter grid and the moment ratios both fits search over.
struct GammaTables {
  std::vector<double> shape, ggd_ratio, aggd_ratio;
  GammaTables() {
    for (int i = 200; i <= 10000; ++i) {
      const double g = i / 1000.0;
      shape.push_back(g);
      const double g1 = std::tgamma(1 / g), g2 = std::tgamma(2 / g), g3 = std::tgamma(3 / g);
      ggd_ratio.push_back(g1 * g3 / (g2 * g2));
      aggd_ratio.push_back(g2 * g2 / (g1 * g3));
    }
  }
};

const GammaTables& tables() {
  static const GammaTables t;
  return t;
}

Plane gaussian_window() {
  constexpr int k = 7;
  const double sigma = 7.0 / 6.0;
  Plane g(k * k);
  double sum = 0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) sum += g[y * k + x] = std::exp(-((x - 3) * (x - 3) + (y - 3) * (y - 3)) / (2 * sigma * sigma));
  for (double& v : g) v /= sum;
  return g;
}

Plane filter_replicate(const Plane& a, int h, int w, const Plane& k) {
  Plane out(a.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int t = 0; t < 7; ++t) {
        const int sy = std::clamp(y + t - 3, 0, h - 1);
        for (int u = 0; u < 7; ++u) acc += a[static_cast<std::size_t>(sy) * w + std::clamp(x + u - 3, 0, w - 1)] * k[t * 7 + u];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

// Mean-subtracted contrast-normalised coefficients; `sigma` receives the
// local deviation map.
Plane mscn(const Plane& img, int h, int w, Plane& sigma) {
  static const Plane window = gaussian_window();
  constexpr double kC = 1.0 / 255.0;
  const Plane mu = filter_replicate(img, h, w, window);
  Plane sq(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) sq[i] = img[i] * img[i];
  const Plane mu_sq = filter_replicate(sq, h, w, window);
  sigma.resize(img.size());
  Plane out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    sigma[i] = std::sqrt(std::abs(mu_sq[i] - mu[i] * mu[i]));
    out[i] = (img[i] - mu[i]) / (sigma[i] + kC);
  }
  return out;
}

void fit_ggd(const Plane& v, double& alpha, double& variance) {
  double sq = 0, ab = 0;
  for (double x : v) {
    sq += x * x;
    ab += std::abs(x);
  }
  sq /= v.size();
  ab /= v.size();
  const double rho = ab > 0 ? sq / (ab * ab) : std::numeric_limits<double>::infinity();
  const auto& t = tables();
  std::size_t best = 0;
  double best_diff = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    const double d = std::abs(rho - t.ggd_ratio[i]);
    if (d < best_diff) {
      best_diff = d;
      best = i;
    }
  }
  alpha = t.shape[best];
  variance = sq;
}

void fit_aggd(const Plane& v, double& alpha, double& left_std, double& right_std) {
  double left = 0, right = 0, sq = 0, ab = 0;
  std::size_t nl = 0, nr = 0;
  for (double x : v) {
    if (x < 0) {
      left += x * x;
      ++nl;
    } else if (x > 0) {
      right += x * x;
      ++nr;
    }
    sq += x * x;
    ab += std::abs(x);
  }
  left_std = nl ? std::sqrt(left / nl) : 0.0;
  right_std = nr ? std::sqrt(right / nr) : 0.0;
  sq /= v.size();
  ab /= v.size();
  const double gamma_hat = left_std / std::max(right_std, 1e-12);
  const double r_hat = sq > 0 ? ab * ab / sq : 0.0;
  const double g2 = gamma_hat * gamma_hat;
  const double r_norm = r_hat * (g2 * gamma_hat + 1) * (gamma_hat + 1) / ((g2 + 1) * (g2 + 1));
  const auto& t = tables();
  std::size_t best = 0;
  double best_diff = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    const double d = (t.aggd_ratio[i] - r_norm) * (t.aggd_ratio[i] - r_norm);
    if (d < best_diff) {
      best_diff = d;
      best = i;
    }
  }
  alpha = t.shape[best];
}

// 18 features of one square block of MSCN coefficients.
void block_features(const Plane& m, int w, int y0, int x0, int size, double* out) {
  Plane block(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) block[static_cast<std::size_t>(y) * size + x] = m[static_cast<std::size_t>(y0 + y) * w + x0 + x];
  fit_ggd(block, out[0], out[1]);
  constexpr int kShifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  Plane pair(block.size());
  for (int s = 0; s < 4; ++s) {
    const int dr = kShifts[s][0], dc = kShifts[s][1];
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const int sy = ((y - dr) % size + size) % size, sx = ((x - dc) % size + size) % size;
        pair[static_cast<std::size_t>(y) * size + x] =
            block[static_cast<std::size_t>(y) * size + x] * block[static_cast<std::size_t>(sy) * size + sx];
      }
    double alpha, ls, rs;
    fit_aggd(pair, alpha, ls, rs);
    const double c = std::sqrt(std::tgamma(1 / alpha)) / std::sqrt(std::tgamma(3 / alpha));
    const double mean = (rs - ls) * (std::tgamma(2 / alpha) / std::tgamma(1 / alpha)) * c;
    double* f = out + 2 + 4 * s;
    f[0] = alpha;
    f[1] = mean;
    f[2] = ls * ls;
    f[3] = rs * rs;
  }
}

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Gaussian fit_gaussian(const std::vector<const double*>& rows) {
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd x(n, kNiqeFeatures);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kNiqeFeatures; ++j) x(i, j) = rows[i][j];
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - g.mean.transpose();
  g.cov = centred.transpose() * centred / static_cast<double>(n - 1);
  return g;
}

std::vector<const double*> finite_rows(const NiqePatchFeatures& f, const std::vector<bool>* keep) {
  std::vector<const double*> rows;
  for (int i = 0; i < f.count; ++i) {
    if (keep && !(*keep)[i]) continue;
    const double* r = f.features.data() + static_cast<std::size_t>(i) * kNiqeFeatures;
    if (std::all_of(r, r + kNiqeFeatures, [](double v) { return std::isfinite(v); })) rows.push_back(r);
  }
  return rows;
}

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

NiqePatchFeatures niqe_patch_features(const Image& img, int patch_size) {
  if (patch_size < 8 || patch_size % 2) throw ConfigError("niqe.patch_size must be an even number >= 8");
  const Image y = luma(img);
  const int rows = y.height() / patch_size, cols = y.width() / patch_size;
  NiqePatchFeatures out;
  out.count = rows * cols;
  if (out.count == 0) return out;
  int h = rows * patch_size, w = cols * patch_size;
  Plane plane(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) plane[static_cast<std::size_t>(r) * w + c] = y.at(0, r, c);

  out.features.assign(static_cast<std::size_t>(out.count) * kNiqeFeatures, 0.0);
  out.sharpness.assign(out.count, 0.0);
  for (int scale = 0; scale < 2; ++scale) {
    const int size = patch_size >> scale;
    Plane sigma;
    const Plane m = mscn(plane, h, w, sigma);
    for (int br = 0; br < rows; ++br)
      for (int bc = 0; bc < cols; ++bc) {
        const int idx = br * cols + bc;
        block_features(m, w, br * size, bc * size, size,
                       out.features.data() + static_cast<std::size_t>(idx) * kNiqeFeatures + scale * kFeaturesPerScale);
        if (scale == 0) {
          double s = 0;
          for (int yy = 0; yy < size; ++yy)
            for (int xx = 0; xx < size; ++xx) s += sigma[static_cast<std::size_t>(br * size + yy) * w + bc * size + xx];
          out.sharpness[idx] = s / (static_cast<double>(size) * size);
        }
      }
    if (scale == 0) {
      // 2x2 box downsample for the coarse scale.
      Plane half(static_cast<std::size_t>(h / 2) * (w / 2));
      for (int r = 0; r < h / 2; ++r)
        for (int c = 0; c < w / 2; ++c) {
          const std::size_t i = static_cast<std::size_t>(2 * r) * w + 2 * c;
          half[static_cast<std::size_t>(r) * (w / 2) + c] = 0.25 * (plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]);
        }
      plane = std::move(half);
      h /= 2;
      w /= 2;
    }
  }
  return out;
}

NiqeModel niqe_fit(std::span<const Image> corpus, const NiqeParams& params) {
  if (corpus.size() < 10)
    throw DataError("niqe_fit: need at least 10 clean images, got " + std::to_string(corpus.size()));
  if (!(params.sharpness_fraction > 0.0 && params.sharpness_fraction <= 1.0))
    throw ConfigError("niqe.sharpness_fraction must be in (0, 1]");
  std::vector<NiqePatchFeatures> all;
  std::vector<const double*> rows;
  all.reserve(corpus.size());
  for (const Image& img : corpus) {
    all.push_back(niqe_patch_features(img, params.patch_size));
    const auto& f = all.back();
    if (f.count == 0) continue;
    const double peak = *std::max_element(f.sharpness.begin(), f.sharpness.end());
    std::vector<bool> keep(f.count);
    for (int i = 0; i < f.count; ++i) keep[i] = f.sharpness[i] > params.sharpness_fraction * peak;
    const auto kept = finite_rows(f, &keep);
    rows.insert(rows.end(), kept.begin(), kept.end());
  }
  if (rows.size() < 4)
    throw DataError("niqe_fit: only " + std::to_string(rows.size()) + " usable patches (need at least 4)");
  const Gaussian g = fit_gaussian(rows);
  NiqeModel model;
  model.patch_size = params.patch_size;
  model.sharpness_fraction = to_float(params.sharpness_fraction);
  model.mean.resize(kNiqeFeatures);
  model.covariance.resize(kNiqeFeatures * kNiqeFeatures);
  for (int i = 0; i < kNiqeFeatures; ++i) {
    model.mean[i] = to_float(g.mean[i]);
    for (int j = 0; j < kNiqeFeatures; ++j) model.covariance[i * kNiqeFeatures + j] = to_float(g.cov(i, j));
  }
  return model;
}

double niqe(const Image& img, const NiqeModel& model) {
  if (model.mean.size() != kNiqeFeatures || model.covariance.size() != kNiqeFeatures * kNiqeFeatures)
    throw DataError("niqe: model must hold a 36-d mean and 36x36 covariance");
  const NiqePatchFeatures f = niqe_patch_features(img, model.patch_size);
  const auto rows = finite_rows(f, nullptr);
  if (rows.size() < 4)
    throw DataError("niqe: image " + img.shape_string() + " yields " + std::to_string(rows.size()) + " patches of " +
                    std::to_string(model.patch_size) + "x" + std::to_string(model.patch_size) + " (need at least 4)");
  const Gaussian d = fit_gaussian(rows);
  const Eigen::Map<const Eigen::VectorXd> mu(model.mean.data(), kNiqeFeatures);
  const Eigen::Map<const Eigen::Matrix<double, kNiqeFeatures, kNiqeFeatures, Eigen::RowMajor>> cov(model.covariance.data());
  Eigen::MatrixXd pooled = (cov + d.cov) / 2.0;
  pooled += 1e-6 * Eigen::MatrixXd::Identity(kNiqeFeatures, kNiqeFeatures);
  pooled = (pooled + pooled.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pooled);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double tol = kNiqeFeatures * std::numeric_limits<double>::epsilon() * ev.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv(kNiqeFeatures);
  for (int i = 0; i < kNiqeFeatures; ++i) inv[i] = std::abs(ev[i]) > tol ? 1.0 / ev[i] : 0.0;
  const Eigen::VectorXd diff = mu - d.mean;
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * diff;
  const double q = proj.cwiseProduct(inv).dot(proj);
  return std::sqrt(std::max(q, 0.0));
}

std::vector<CheckpointEntry> niqe_to_entries(const NiqeModel& model) {
  std::vector<CheckpointEntry> e;
  e.push_back({"niqe.mean", {static_cast<std::uint32_t>(model.mean.size())}, {model.mean.begin(), model.mean.end()}});
  e.push_back({"niqe.cov",
               {static_cast<std::uint32_t>(model.mean.size()), static_cast<std::uint32_t>(model.mean.size())},
               {model.covariance.begin(), model.covariance.end()}});
  e.push_back({"niqe.patch_size", {}, {static_cast<float>(model.patch_size)}});
  e.push_back({"niqe.sharpness_fraction", {}, {static_cast<float>(model.sharpness_fraction)}});
  return e;
}

NiqeModel niqe_from_entries(std::span<const CheckpointEntry> entries, const std::string& source) {
  const CheckpointEntry* mean = find_entry(entries, "niqe.mean");
  const CheckpointEntry* cov = find_entry(entries, "niqe.cov");
  if (!mean || !cov) throw DataError(source + ": not a NIQE model (missing niqe.mean / niqe.cov)");
  if (mean->values.size() != kNiqeFeatures || cov->values.size() != kNiqeFeatures * kNiqeFeatures)
    throw DataError(source + ": NIQE model must hold a 36-d mean and 36x36 covariance");
  NiqeModel m;
  m.mean.assign(mean->values.begin(), mean->values.end());
  m.covariance.assign(cov->values.begin(), cov->values.end());
  if (const auto* p = find_entry(entries, "niqe.patch_size")) m.patch_size = static_cast<int>(p->values.at(0));
  if (const auto* s = find_entry(entries, "niqe.sharpness_fraction")) m.sharpness_fraction = s->values.at(0);
  return m;
}

void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model) {
  write_checkpoint(path, niqe_to_entries(model));
}

NiqeModel load_niqe_model(const std::filesystem::path& path) {
  return niqe_from_entries(read_checkpoint(path), path.string());
}

}  // namespace deanet
