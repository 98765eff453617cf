#include "deanet/wls.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "deanet/error.hpp"

namespace deanet {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

void WlsSystem::apply(std::span<const double> u, std::span<double> out) const {
  const int h = height, w = width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      double acc = 0.0;
      if (x + 1 < w) acc += wx[p] * (u[p] - u[p + 1]);
      if (x > 0) acc += wx[p - 1] * (u[p] - u[p - 1]);
      if (y + 1 < h) acc += wy[p] * (u[p] - u[p + w]);
      if (y > 0) acc += wy[p - w] * (u[p] - u[p - w]);
      out[p] = u[p] + lambda * acc;
    }
}

std::vector<double> WlsSystem::diagonal() const {
  const int h = height, w = width;
  std::vector<double> d(static_cast<std::size_t>(h) * w, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      double s = wx[p] + wy[p];
      if (x > 0) s += wx[p - 1];
      if (y > 0) s += wy[p - w];
      d[p] += lambda * s;
    }
  return d;
}

WlsSystem make_wls_system(std::span<const double> guide_plane, int height, int width, const WlsParams& params) {
  if (!(params.lambda >= 0.0) || !(params.alpha > 0.0) || !(params.eps > 0.0)) {
    throw UsageError("wls: require lambda >= 0, alpha > 0, eps > 0");
  }
  WlsSystem sys;
  sys.height = height;
  sys.width = width;
  sys.lambda = params.lambda;
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> log_guide(n);
  for (std::size_t i = 0; i < n; ++i) log_guide[i] = std::log(std::max(guide_plane[i], 1e-4));
  sys.wx.assign(n, 0.0);
  sys.wy.assign(n, 0.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      if (x + 1 < width)
        sys.wx[p] = 1.0 / (std::pow(std::abs(log_guide[p + 1] - log_guide[p]), params.alpha) + params.eps);
      if (y + 1 < height)
        sys.wy[p] = 1.0 / (std::pow(std::abs(log_guide[p + width] - log_guide[p]), params.alpha) + params.eps);
    }
  return sys;
}

double wls_energy(const WlsSystem& system, std::span<const double> u, std::span<const double> g) {
  const int h = system.height, w = system.width;
  double data = 0.0, smooth = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      data += (u[p] - g[p]) * (u[p] - g[p]);
      if (x + 1 < w) smooth += system.wx[p] * (u[p + 1] - u[p]) * (u[p + 1] - u[p]);
      if (y + 1 < h) smooth += system.wy[p] * (u[p + w] - u[p]) * (u[p + w] - u[p]);
    }
  return data + system.lambda * smooth;
}

std::vector<double> solve_wls_plane(const WlsSystem& system, std::span<const double> g, const WlsParams& params,
                                    WlsSolveStats* stats) {
  const std::size_t n = g.size();
  std::vector<double> u(g.begin(), g.end());
  const double b_norm = norm(g);
  if (b_norm == 0.0) {
    if (stats) *stats = {};
    return u;
  }
  const std::vector<double> diag = system.diagonal();
  std::vector<double> r(n), z(n), p(n), ap(n);

  auto true_residual = [&] {
    system.apply(u, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = g[i] - ap[i];
    return norm(r) / b_norm;
  };

  double rel = true_residual();
  const long long cap = static_cast<long long>(params.max_iter_factor) * system.height * system.width;
  long long iter = 0;
  while (rel >= params.tolerance) {
    // (Re)start from the true residual.
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    p = z;
    double rz = dot(r, z);
    bool restart = false;
    while (!restart) {
      if (iter >= cap) {
        throw NumericalError("wls: conjugate gradient did not converge in " + std::to_string(cap) +
                             " iterations, relative residual " + std::to_string(rel));
      }
      ++iter;
      system.apply(p, ap);
      const double pap = dot(p, ap);
      if (!(pap > 0.0)) {
        throw NumericalError("wls: system lost positive definiteness, relative residual " + std::to_string(rel));
      }
      const double step = rz / pap;
      for (std::size_t i = 0; i < n; ++i) {
        u[i] += step * p[i];
        r[i] -= step * ap[i];
      }
      rel = norm(r) / b_norm;
      if (rel < params.tolerance) {
        rel = true_residual();
        restart = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
      const double rz_next = dot(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
  }
  if (stats) *stats = {static_cast<int>(iter), rel};
  return u;
}

Image wls_base(const Image& input, const WlsParams& params, std::vector<WlsSolveStats>* stats) {
  for (double v : input.data())
    if (!std::isfinite(v)) throw DataError("wls: input contains non-finite values");
  if (stats) stats->assign(input.channels(), {});
  if (params.lambda == 0.0) return input;

  Image out(input.height(), input.width(), input.channels());
  if (params.guide == WlsGuide::luminance) {
    const Image guide = luma(input);
    const WlsSystem sys = make_wls_system(guide.plane(0), input.height(), input.width(), params);
    for (int c = 0; c < input.channels(); ++c) {
      auto u = solve_wls_plane(sys, input.plane(c), params, stats ? &(*stats)[c] : nullptr);
      std::copy(u.begin(), u.end(), out.plane(c).begin());
    }
  } else {
    for (int c = 0; c < input.channels(); ++c) {
      const WlsSystem sys = make_wls_system(input.plane(c), input.height(), input.width(), params);
      auto u = solve_wls_plane(sys, input.plane(c), params, stats ? &(*stats)[c] : nullptr);
      std::copy(u.begin(), u.end(), out.plane(c).begin());
    }
  }
  return out;
}

FrequencySplit frequency_split(const Image& input, const WlsParams& params) {
  FrequencySplit split;
  split.low_freq = wls_base(input, params);
  split.high_freq = subtract(input, split.low_freq);
  split.params = params;
  return split;
}

}  // namespace deanet
