#pragma once

#include <span>
#include <vector>

#include "deanet/image.hpp"

namespace deanet {

enum class WlsGuide {
  luminance,    // one set of weights from the log-luma, shared by all channels
  per_channel,  // each channel is smoothed against its own log-intensity
};

struct WlsParams {
  double lambda = 1.0;
  double alpha = 1.2;
  double eps = 1e-4;
  WlsGuide guide = WlsGuide::luminance;
  double tolerance = 1e-8;   // relative residual ||Au-b|| / ||b||
  int max_iter_factor = 10;  // iteration cap is factor * H * W
};

/// Smoothness weights of the 5-point WLS system for one guide plane.
///
/// wx(y,x) couples (y,x)-(y,x+1) and wy(y,x) couples (y,x)-(y+1,x). Couplings
/// that would cross the image border are zero, which is the replicate
/// (zero-gradient) boundary.
struct WlsSystem {
  int height = 0;
  int width = 0;
  double lambda = 0.0;
  std::vector<double> wx;
  std::vector<double> wy;

  // out = (I + lambda * L_w) u
  void apply(std::span<const double> u, std::span<double> out) const;
  std::vector<double> diagonal() const;
};

// Builds the system from a single guide plane holding intensities (the log
// is taken internally, clamped at 1e-4).
WlsSystem make_wls_system(std::span<const double> guide_plane, int height, int width, const WlsParams& params);

/// Energy sum (u-g)^2 + lambda * sum w_x (du/dx)^2 + w_y (du/dy)^2 for one
/// plane.
double wls_energy(const WlsSystem& system, std::span<const double> u, std::span<const double> g);

struct WlsSolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves (I + lambda L_w) u = g by Jacobi-preconditioned conjugate gradient.
/// Throws NumericalError carrying the last residual when the cap is hit.
std::vector<double> solve_wls_plane(const WlsSystem& system, std::span<const double> g, const WlsParams& params,
                                    WlsSolveStats* stats = nullptr);

/// Edge-preserving base layer. lambda == 0 returns the input unchanged.
Image wls_base(const Image& input, const WlsParams& params = {}, std::vector<WlsSolveStats>* stats = nullptr);

struct FrequencySplit {
  Image low_freq;
  Image high_freq;  // input - low_freq, signed
  WlsParams params;
};

FrequencySplit frequency_split(const Image& input, const WlsParams& params = {});

}  // namespace deanet
