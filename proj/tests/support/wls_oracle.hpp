#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "deanet/image.hpp"
#include "deanet/wls.hpp"

namespace deanet::testing {

// Dense oracle: assemble (I + lambda L_w) explicitly from the energy and
// solve it directly. Weights come straight from the definition
// w = (|d log(max(guide, 1e-4))|^alpha + eps)^-1 with no coupling across the
// border.
inline Image dense_wls(const Image& img, double lambda, double alpha, double eps) {
  const int h = img.height(), w = img.width(), n = h * w;
  const Image guide = luma(img);
  auto lg = [&](int y, int x) { return std::log(std::max(guide.at(0, y, x), 1e-4)); };
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  auto couple = [&](int p, int q, double weight) {
    a(p, p) += lambda * weight;
    a(q, q) += lambda * weight;
    a(p, q) -= lambda * weight;
    a(q, p) -= lambda * weight;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) couple(y * w + x, y * w + x + 1, 1.0 / (std::pow(std::abs(lg(y, x + 1) - lg(y, x)), alpha) + eps));
      if (y + 1 < h) couple(y * w + x, (y + 1) * w + x, 1.0 / (std::pow(std::abs(lg(y + 1, x) - lg(y, x)), alpha) + eps));
    }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Image out(h, w, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) b[i] = img.plane(c)[i];
    Eigen::VectorXd u = lu.solve(b);
    for (int i = 0; i < n; ++i) out.plane(c)[i] = u[i];
  }
  return out;
}

}  // namespace deanet::testing
