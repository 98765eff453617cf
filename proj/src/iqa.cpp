#include "deanet/iqa.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>

#include "deanet/error.hpp"

namespace deanet {
namespace {

using Plane = std::vector<double>;

Plane luma_plane(const Image& img) {
  const Image y = luma(img);
  return {y.data().begin(), y.data().end()};
}

// Two-dimensional convolution returning the central part, zero padded
// outside the image (MATLAB conv2 'same').
Plane conv2_same(const Plane& a, int h, int w, const Plane& k, int kh, int kw) {
  Plane out(a.size(), 0.0);
  const int oy = kh / 2, ox = kw / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int t = 0; t < kh; ++t) {
        const int sy = y + oy - t;
        if (sy < 0 || sy >= h) continue;
        for (int u = 0; u < kw; ++u) {
          const int sx = x + ox - u;
          if (sx < 0 || sx >= w) continue;
          acc += a[static_cast<std::size_t>(sy) * w + sx] * k[t * kw + u];
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

// Average filter of size f then keep every f-th sample from the origin.
Plane average_downsample(const Plane& a, int h, int w, int f, int& oh, int& ow) {
  if (f <= 1) {
    oh = h;
    ow = w;
    return a;
  }
  const Plane kernel(static_cast<std::size_t>(f) * f, 1.0 / (f * f));
  const Plane smooth = conv2_same(a, h, w, kernel, f, f);
  oh = (h + f - 1) / f;
  ow = (w + f - 1) / f;
  Plane out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) out[static_cast<std::size_t>(y) * ow + x] = smooth[static_cast<std::size_t>(y * f) * w + x * f];
  return out;
}

bool is_constant(const Plane& p) {
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  return *lo == *hi;
}

// ----------------------------------------------------------------- FFTW

struct FftBuffer {
  explicit FftBuffer(std::size_t n) : data(fftw_alloc_complex(n)), size(n) {}
  ~FftBuffer() { fftw_free(data); }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;
  std::complex<double>* values() { return reinterpret_cast<std::complex<double>*>(data); }
  fftw_complex* data;
  std::size_t size;
};

class Fft2 {
 public:
  Fft2(int rows, int cols)
      : rows_(rows), cols_(cols), buffer_(static_cast<std::size_t>(rows) * cols),
        forward_(fftw_plan_dft_2d(rows, cols, buffer_.data, buffer_.data, FFTW_FORWARD, FFTW_ESTIMATE)),
        inverse_(fftw_plan_dft_2d(rows, cols, buffer_.data, buffer_.data, FFTW_BACKWARD, FFTW_ESTIMATE)) {}
  ~Fft2() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  Fft2(const Fft2&) = delete;
  Fft2& operator=(const Fft2&) = delete;

  std::vector<std::complex<double>> forward(const Plane& real) {
    auto* v = buffer_.values();
    for (std::size_t i = 0; i < buffer_.size; ++i) v[i] = real[i];
    fftw_execute(forward_);
    return {v, v + buffer_.size};
  }

  // Normalised inverse transform.
  std::vector<std::complex<double>> inverse(const std::vector<std::complex<double>>& spectrum) {
    auto* v = buffer_.values();
    std::copy(spectrum.begin(), spectrum.end(), v);
    fftw_execute(inverse_);
    const double norm = 1.0 / static_cast<double>(buffer_.size);
    std::vector<std::complex<double>> out(v, v + buffer_.size);
    for (auto& c : out) c *= norm;
    return out;
  }

 private:
  int rows_, cols_;
  FftBuffer buffer_;
  fftw_plan forward_, inverse_;
};

// ------------------------------------------------------ phase congruency

// Frequency grid in [-0.5, 0.5) with the zero frequency moved to index 0.
std::vector<double> shifted_range(int n) {
  std::vector<double> r(n);
  for (int i = 0; i < n; ++i)
    r[i] = n % 2 ? (i - (n - 1) / 2.0) / (n - 1) : (i - n / 2.0) / n;
  std::vector<double> shifted(n);
  for (int i = 0; i < n; ++i) shifted[i] = r[(i + n / 2) % n];
  return shifted;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (n % 2) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + mid));
}

struct PcBank {
  int rows, cols;
  std::vector<Plane> filters;          // [orient * scales + scale], frequency domain
  std::vector<double> filter_energy;   // sum(filter^2) of the finest scale per orientation
  std::vector<double> noise_an2;       // sum over pixels of sum_s ifft(filter_s)^2 per orientation
  std::vector<double> noise_aiaj;      // cross terms per orientation
};

PcBank make_pc_bank(int rows, int cols, const FsimParams& p, Fft2& fft) {
  PcBank bank{rows, cols, {}, {}, {}, {}};
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  const auto xs = shifted_range(cols), ys = shifted_range(rows);
  Plane radius(n), sin_t(n), cos_t(n), lowpass(n);
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * cols + x;
      const double r = std::sqrt(xs[x] * xs[x] + ys[y] * ys[y]);
      lowpass[i] = 1.0 / (1.0 + std::pow(r / 0.45, 2 * 15));
      radius[i] = r;
      const double theta = std::atan2(-ys[y], xs[x]);
      sin_t[i] = std::sin(theta);
      cos_t[i] = std::cos(theta);
    }
  radius[0] = 1.0;

  std::vector<Plane> log_gabor(p.scales, Plane(n));
  const double log_sigma = std::log(p.sigma_on_f);
  for (int s = 0; s < p.scales; ++s) {
    const double fo = 1.0 / (p.min_wavelength * std::pow(p.mult, s));
    for (std::size_t i = 0; i < n; ++i) {
      const double l = std::log(radius[i] / fo);
      log_gabor[s][i] = std::exp(-(l * l) / (2 * log_sigma * log_sigma)) * lowpass[i];
    }
    log_gabor[s][0] = 0.0;
  }

  const double theta_sigma = std::numbers::pi / p.orientations / p.d_theta_on_sigma;
  const double root_n = std::sqrt(static_cast<double>(n));
  for (int o = 0; o < p.orientations; ++o) {
    const double angle = o * std::numbers::pi / p.orientations;
    Plane spread(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ds = sin_t[i] * std::cos(angle) - cos_t[i] * std::sin(angle);
      const double dc = cos_t[i] * std::cos(angle) + sin_t[i] * std::sin(angle);
      const double dtheta = std::abs(std::atan2(ds, dc));
      spread[i] = std::exp(-(dtheta * dtheta) / (2 * theta_sigma * theta_sigma));
    }
    std::vector<Plane> spatial(p.scales);
    for (int s = 0; s < p.scales; ++s) {
      Plane filter(n);
      for (std::size_t i = 0; i < n; ++i) filter[i] = log_gabor[s][i] * spread[i];
      if (s == 0) {
        double e = 0;
        for (double v : filter) e += v * v;
        bank.filter_energy.push_back(e);
      }
      const auto inv = fft.inverse(std::vector<std::complex<double>>(filter.begin(), filter.end()));
      spatial[s].resize(n);
      for (std::size_t i = 0; i < n; ++i) spatial[s][i] = inv[i].real() * root_n;
      bank.filters.push_back(std::move(filter));
    }
    double an2 = 0, aiaj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int s = 0; s < p.scales; ++s) {
        an2 += spatial[s][i] * spatial[s][i];
        for (int t = s + 1; t < p.scales; ++t) aiaj += spatial[s][i] * spatial[t][i];
      }
    }
    bank.noise_an2.push_back(an2);
    bank.noise_aiaj.push_back(aiaj);
  }
  return bank;
}

Plane phase_congruency_with(const Plane& image, const PcBank& bank, const FsimParams& p, Fft2& fft) {
  const std::size_t n = image.size();
  constexpr double kEpsilon = 1e-4;
  const auto spectrum = fft.forward(image);
  Plane energy_all(n, 0.0), an_all(n, 0.0);
  std::vector<std::complex<double>> product(n);
  for (int o = 0; o < p.orientations; ++o) {
    std::vector<std::vector<std::complex<double>>> eo(p.scales);
    Plane sum_e(n, 0.0), sum_o(n, 0.0), sum_an(n, 0.0);
    for (int s = 0; s < p.scales; ++s) {
      const Plane& filter = bank.filters[o * p.scales + s];
      for (std::size_t i = 0; i < n; ++i) product[i] = spectrum[i] * filter[i];
      eo[s] = fft.inverse(product);
      for (std::size_t i = 0; i < n; ++i) {
        sum_an[i] += std::abs(eo[s][i]);
        sum_e[i] += eo[s][i].real();
        sum_o[i] += eo[s][i].imag();
      }
    }
    Plane energy(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x_energy = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + kEpsilon;
      const double mean_e = sum_e[i] / x_energy, mean_o = sum_o[i] / x_energy;
      for (int s = 0; s < p.scales; ++s) {
        const double e = eo[s][i].real(), od = eo[s][i].imag();
        energy[i] += e * mean_e + od * mean_o - std::abs(e * mean_o - od * mean_e);
      }
    }
    std::vector<double> finest_sq(n);
    for (std::size_t i = 0; i < n; ++i) finest_sq[i] = std::norm(eo[0][i]);
    const double mean_e2n = -median(std::move(finest_sq)) / std::log(0.5);
    const double noise_power = mean_e2n / bank.filter_energy[o];
    const double est_noise_energy2 = 2 * noise_power * bank.noise_an2[o] + 4 * noise_power * bank.noise_aiaj[o];
    const double tau = std::sqrt(est_noise_energy2 / 2);
    const double est_noise_energy = tau * std::sqrt(std::numbers::pi / 2);
    const double est_noise_sigma = std::sqrt((2 - std::numbers::pi / 2) * tau * tau);
    const double threshold = (est_noise_energy + p.noise_k * est_noise_sigma) / 1.7;
    for (std::size_t i = 0; i < n; ++i) {
      energy_all[i] += std::max(energy[i] - threshold, 0.0);
      an_all[i] += sum_an[i];
    }
  }
  Plane pc(n);
  for (std::size_t i = 0; i < n; ++i) pc[i] = an_all[i] > 0 ? energy_all[i] / an_all[i] : 0.0;
  return pc;
}

Plane gradient_magnitude(const Plane& img, int h, int w, const Plane& dx, const Plane& dy) {
  const Plane gx = conv2_same(img, h, w, dx, 3, 3), gy = conv2_same(img, h, w, dy, 3, 3);
  Plane g(img.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  return g;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double mae(const Image& a, const Image& b) {
  require_same_shape(a, b, "mae");
  // Running mean: exact when every difference is the same value.
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m += (std::abs(a.data()[i] - b.data()[i]) - m) / static_cast<double>(i + 1);
  return m;
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  require_same_shape(a, b, "ssim");
  const int h = a.height(), w = a.width(), k = params.window;
  if (h < k || w < k)
    throw ShapeError("ssim: image " + a.shape_string() + " is smaller than the " + std::to_string(k) + "x" +
                     std::to_string(k) + " window");
  Plane g(static_cast<std::size_t>(k) * k);
  double gsum = 0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double dy = y - (k - 1) / 2.0, dx = x - (k - 1) / 2.0;
      gsum += g[y * k + x] = std::exp(-(dx * dx + dy * dy) / (2 * params.sigma * params.sigma));
    }
  for (double& v : g) v /= gsum;
  const Plane ya = luma_plane(a), yb = luma_plane(b);
  const double c1 = params.k1 * params.k1, c2 = params.k2 * params.k2;
  double total = 0;
  const int oh = h - k + 1, ow = w - k + 1;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int t = 0; t < k; ++t)
        for (int u = 0; u < k; ++u) {
          const std::size_t i = static_cast<std::size_t>(y + t) * w + x + u;
          const double wt = g[t * k + u], va = ya[i], vb = yb[i];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * (va * vb);
        }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * (ma * mb) + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
  return total / (static_cast<double>(oh) * ow);
}

std::vector<double> phase_congruency(std::span<const double> image, int height, int width, const FsimParams& params) {
  if (image.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError("phase_congruency: buffer does not match " + std::to_string(height) + "x" + std::to_string(width));
  Fft2 fft(height, width);
  const PcBank bank = make_pc_bank(height, width, params, fft);
  return phase_congruency_with(Plane(image.begin(), image.end()), bank, params, fft);
}

double fsim(const Image& a, const Image& b, const FsimParams& params) {
  require_same_shape(a, b, "fsim");
  const int h = a.height(), w = a.width();
  Plane ya = luma_plane(a), yb = luma_plane(b);
  for (double& v : ya) v *= 255.0;
  for (double& v : yb) v *= 255.0;
  if (is_constant(ya) && is_constant(yb)) {
    if (ya == yb) return 1.0;
    throw DataError("fsim: undefined similarity for constant images");
  }
  const int f = std::max(1, static_cast<int>(std::lround(std::min(h, w) / 256.0)));
  int rows = 0, cols = 0;
  ya = average_downsample(ya, h, w, f, rows, cols);
  yb = average_downsample(yb, h, w, f, rows, cols);

  Fft2 fft(rows, cols);
  const PcBank bank = make_pc_bank(rows, cols, params, fft);
  const Plane pc_a = is_constant(ya) ? Plane(ya.size(), 0.0) : phase_congruency_with(ya, bank, params, fft);
  const Plane pc_b = is_constant(yb) ? Plane(yb.size(), 0.0) : phase_congruency_with(yb, bank, params, fft);

  const Plane dx{3 / 16.0, 0, -3 / 16.0, 10 / 16.0, 0, -10 / 16.0, 3 / 16.0, 0, -3 / 16.0};
  const Plane dy{3 / 16.0, 10 / 16.0, 3 / 16.0, 0, 0, 0, -3 / 16.0, -10 / 16.0, -3 / 16.0};
  const Plane ga = gradient_magnitude(ya, rows, cols, dx, dy), gb = gradient_magnitude(yb, rows, cols, dx, dy);

  double num = 0, den = 0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double pc_sim = (2 * pc_a[i] * pc_b[i] + params.t1) / (pc_a[i] * pc_a[i] + pc_b[i] * pc_b[i] + params.t1);
    const double g_sim = (2 * ga[i] * gb[i] + params.t2) / (ga[i] * ga[i] + gb[i] * gb[i] + params.t2);
    const double pcm = std::max(pc_a[i], pc_b[i]);
    num += g_sim * pc_sim * pcm;
    den += pcm;
  }
  if (!(den > 0)) {
    if (ya == yb) return 1.0;
    throw DataError("fsim: undefined similarity (phase congruency is zero everywhere)");
  }
  return num / den;
}

double gmsd(const Image& a, const Image& b, const GmsdParams& params) {
  require_same_shape(a, b, "gmsd");
  const int h = a.height(), w = a.width();
  int rows = 0, cols = 0;
  const Plane ya = average_downsample(luma_plane(a), h, w, 2, rows, cols);
  const Plane yb = average_downsample(luma_plane(b), h, w, 2, rows, cols);
  if (ya.size() < 2) throw ShapeError("gmsd: image " + a.shape_string() + " is too small");
  const Plane dx{1 / 3.0, 0, -1 / 3.0, 1 / 3.0, 0, -1 / 3.0, 1 / 3.0, 0, -1 / 3.0};
  const Plane dy{1 / 3.0, 1 / 3.0, 1 / 3.0, 0, 0, 0, -1 / 3.0, -1 / 3.0, -1 / 3.0};
  const Plane ga = gradient_magnitude(ya, rows, cols, dx, dy), gb = gradient_magnitude(yb, rows, cols, dx, dy);
  Plane q(ga.size());
  double mean = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = (2 * ga[i] * gb[i] + params.c) / (ga[i] * ga[i] + gb[i] * gb[i] + params.c);
    mean += q[i];
  }
  mean /= static_cast<double>(q.size());
  double var = 0;
  for (double v : q) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(q.size() - 1));
}

MetricReport compute_metrics(const Image& output, const Image& reference, const NiqeModel* niqe_model) {
  require_same_shape(output, reference, "metrics");
  MetricReport r;
  r.psnr = psnr(output, reference);
  r.ssim = ssim(output, reference);
  r.fsim = fsim(output, reference);
  r.mae = mae(output, reference);
  r.gmsd = gmsd(output, reference);
  if (niqe_model) r.niqe = niqe(output, *niqe_model);
  return r;
}

std::string format_metric(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", value);
  return buf;
}

std::string format_report_table(const MetricReport& r) {
  std::string out;
  auto line = [&](const char* name, double v) { out += std::string(name) + " " + format_metric(v) + "\n"; };
  line("PSNR", r.psnr);
  line("SSIM", r.ssim);
  line("FSIM", r.fsim);
  line("MAE", r.mae);
  line("GMSD", r.gmsd);
  if (r.niqe) line("NIQE", *r.niqe);
  return out;
}

std::string format_report_csv(const MetricReport& r) {
  std::string header = "psnr,ssim,fsim,mae,gmsd";
  std::string row = format_metric(r.psnr) + "," + format_metric(r.ssim) + "," + format_metric(r.fsim) + "," +
                    format_metric(r.mae) + "," + format_metric(r.gmsd);
  if (r.niqe) {
    header += ",niqe";
    row += "," + format_metric(*r.niqe);
  }
  return header + "\n" + row + "\n";
}

}  // namespace deanet
