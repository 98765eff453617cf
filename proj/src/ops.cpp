#include "deanet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <type_traits>
#include <cmath>

#include "deanet/error.hpp"

namespace deanet {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

// Builds the result node. The backward closure is only kept when some parent
// requires grad, so inference-only graphs carry no bookkeeping.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op, std::vector<NodePtr<T>> parents,
                      std::function<void(detail::Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  bool needs = false;
  for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  auto& node = *out.node();
  node.op = op;
  if (needs) {
    std::erase(parents, nullptr);
    node.requires_grad = true;
    node.parents = std::move(parents);
    node.backward = std::move(backward);
  }
  return out;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

// Index mapping for the single sanctioned broadcast: a [N,1,H,W] operand
// against a [N,C,H,W] one.
struct Broadcast {
  Shape out_shape;
  bool a_channel = false;  // a is the 1-channel side
  bool b_channel = false;
  std::size_t plane = 0;   // H*W
  std::size_t channels = 1;

  std::size_t index(std::size_t i, bool squeezed) const {
    if (!squeezed) return i;
    const std::size_t n = i / (channels * plane);
    return n * plane + i % plane;
  }
};

template <typename T>
Broadcast plan_broadcast(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  Broadcast bc;
  if (a.shape() == b.shape()) {
    bc.out_shape = a.shape();
    return bc;
  }
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() == 4 && sb.size() == 4 && sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3] &&
      (sa[1] == 1 || sb[1] == 1)) {
    bc.a_channel = sa[1] == 1 && sb[1] != 1;
    bc.b_channel = sb[1] == 1 && sa[1] != 1;
    bc.out_shape = bc.a_channel ? sb : sa;
    bc.plane = static_cast<std::size_t>(sa[2]) * sa[3];
    bc.channels = static_cast<std::size_t>(bc.out_shape[1]);
    return bc;
  }
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(sa) + " and " + shape_string(sb) +
                   " (only equal shapes or single-channel broadcast over dim 1 are supported)");
}

enum class BinaryKind { add, sub, mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* op) {
  const Broadcast bc = plan_broadcast(a, b, op);
  const std::size_t n = shape_numel(bc.out_shape);
  std::vector<T> out(n);
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = da[bc.index(i, bc.a_channel)];
    const T y = db[bc.index(i, bc.b_channel)];
    out[i] = kind == BinaryKind::add ? x + y : kind == BinaryKind::sub ? x - y : x * y;
  }
  auto pa = a.node();
  auto pb = b.node();
  return make_result<T>(bc.out_shape, std::move(out), op, {pa, pb}, [pa, pb, bc, kind](detail::Node<T>& self) {
    const std::size_t n = self.data.size();
    const T* g = self.grad.data();
    if (pa->requires_grad) {
      T* ga = pa->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const T local = kind == BinaryKind::mul ? pb->data[bc.index(i, bc.b_channel)] : T(1);
        ga[bc.index(i, bc.a_channel)] += g[i] * local;
      }
    }
    if (pb->requires_grad) {
      T* gb = pb->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const T local = kind == BinaryKind::mul   ? pa->data[bc.index(i, bc.a_channel)]
                        : kind == BinaryKind::sub ? T(-1)
                                                  : T(1);
        gb[bc.index(i, bc.b_channel)] += g[i] * local;
      }
    }
  });
}

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Eigen sends single-row/column and tiny products to GEMV or coefficient
// kernels whose reductions depend on buffer alignment. Plain loops there keep
// results identical across runs.
template <typename Dst, typename A, typename B>
void product(Dst&& dst, const A& a, const B& b, bool accumulate) {
  if (dst.rows() > 1 && dst.cols() > 1 && dst.rows() + dst.cols() + a.cols() >= 20) {
    if (accumulate)
      dst.noalias() += a * b;
    else
      dst.noalias() = a * b;
    return;
  }
  using T = typename std::decay_t<Dst>::Scalar;
  for (Eigen::Index i = 0; i < dst.rows(); ++i)
    for (Eigen::Index j = 0; j < dst.cols(); ++j) {
      T acc = T(0);
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      dst(i, j) = accumulate ? dst(i, j) + acc : acc;
    }
}

struct ConvGeometry {
  int cin, h, w, kh, kw, stride, pad, hout, wout;
  std::size_t patch() const { return static_cast<std::size_t>(cin) * kh * kw; }
  std::size_t pixels() const { return static_cast<std::size_t>(hout) * wout; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * g.pixels();
        const T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * g.wout;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wout, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix < 0 || ix >= g.w) ? T(0) : src[ix];
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  for (int c = 0; c < g.cin; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * g.pixels();
        T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.hout; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.wout;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wout; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, BinaryKind::add, "add"); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, BinaryKind::sub, "sub"); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, BinaryKind::mul, "mul"); }

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  auto px = x.node();
  return make_result<T>(x.shape(), std::move(out), "relu", {px}, [px](detail::Node<T>& self) {
    T* gx = px->grad_buffer();
    for (std::size_t i = 0; i < self.data.size(); ++i)
      if (px->data[i] > T(0)) gx[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-d[i]));
  auto px = x.node();
  return make_result<T>(x.shape(), std::move(out), "sigmoid", {px}, [px](detail::Node<T>& self) {
    T* gx = px->grad_buffer();
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      const T s = self.data[i];
      gx[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v *= factor;
  auto px = x.node();
  return make_result<T>(x.shape(), std::move(out), "scale", {px}, [px, factor](detail::Node<T>& self) {
    T* gx = px->grad_buffer();
    for (std::size_t i = 0; i < self.data.size(); ++i) gx[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  auto px = x.node();
  return make_result<T>(Shape{}, {total}, "sum", {px}, [px](detail::Node<T>& self) {
    T* gx = px->grad_buffer();
    const T g = self.grad[0];
    for (std::size_t i = 0; i < px->data.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int padding) {
  require(x.rank() == 4, "conv2d: input must be 4-d [N,C,H,W], got " + shape_string(x.shape()));
  require(weight.rank() == 4, "conv2d: weight must be 4-d [Cout,Cin,kh,kw], got " + shape_string(weight.shape()));
  const int n = x.dim(0);
  const int cout = weight.dim(0);
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), weight.dim(2), weight.dim(3), stride, padding, 0, 0};
  require(weight.dim(1) == g.cin, "conv2d: input channels (dim 1) = " + std::to_string(g.cin) +
                                      " but weight expects " + std::to_string(weight.dim(1)));
  require(g.kh % 2 == 1 && g.kw % 2 == 1, "conv2d: kernel extents (dims 2,3) must be odd, got " +
                                              std::to_string(g.kh) + "x" + std::to_string(g.kw));
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  require(g.h + 2 * padding >= g.kh, "conv2d: input height (dim 2) smaller than kernel");
  require(g.w + 2 * padding >= g.kw, "conv2d: input width (dim 3) smaller than kernel");
  g.hout = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wout = (g.w + 2 * padding - g.kw) / stride + 1;
  if (bias.defined()) {
    require(bias.rank() == 1 && bias.dim(0) == cout,
            "conv2d: bias must be [" + std::to_string(cout) + "], got " + shape_string(bias.shape()));
  }

  const std::size_t in_stride = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * g.pixels();
  std::vector<T> out(static_cast<std::size_t>(n) * out_stride);
  std::vector<T> col(g.is_pointwise() ? 0 : g.patch() * g.pixels());
  Eigen::Map<const MatRM<T>> wm(weight.data().data(), cout, static_cast<Eigen::Index>(g.patch()));
  for (int s = 0; s < n; ++s) {
    const T* xs = x.data().data() + s * in_stride;
    const T* cols = xs;
    if (!g.is_pointwise()) {
      im2col(xs, g, col.data());
      cols = col.data();
    }
    Eigen::Map<const MatRM<T>> cm(cols, static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.pixels()));
    Eigen::Map<MatRM<T>> om(out.data() + s * out_stride, cout, static_cast<Eigen::Index>(g.pixels()));
    product(om, wm, cm, false);
    if (bias.defined())
      for (int c = 0; c < cout; ++c) om.row(c).array() += bias.data()[c];
  }

  auto px = x.node();
  auto pw = weight.node();
  auto pb = bias.node();
  return make_result<T>(Shape{n, cout, g.hout, g.wout}, std::move(out), "conv2d", {px, pw, pb},
                        [px, pw, pb, g, n, cout, in_stride, out_stride](detail::Node<T>& self) {
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto pixels = static_cast<Eigen::Index>(g.pixels());
    Eigen::Map<const MatRM<T>> wm(pw->data.data(), cout, patch);
    std::vector<T> col(g.is_pointwise() ? 0 : g.patch() * g.pixels());
    std::vector<T> dcol(g.is_pointwise() ? 0 : g.patch() * g.pixels());
    for (int s = 0; s < n; ++s) {
      Eigen::Map<const MatRM<T>> gm(self.grad.data() + s * out_stride, cout, pixels);
      if (pw->requires_grad) {
        const T* xs = px->data.data() + s * in_stride;
        const T* cols = xs;
        if (!g.is_pointwise()) {
          im2col(xs, g, col.data());
          cols = col.data();
        }
        Eigen::Map<const MatRM<T>> cm(cols, patch, pixels);
        Eigen::Map<MatRM<T>> gw(pw->grad_buffer(), cout, patch);
        product(gw, gm, cm.transpose(), true);
      }
      if (pb && pb->requires_grad) {
        T* gb = pb->grad_buffer();
        for (int c = 0; c < cout; ++c) {
          T acc = T(0);
          for (Eigen::Index j = 0; j < pixels; ++j) acc += gm(c, j);
          gb[c] += acc;
        }
      }
      if (px->requires_grad) {
        T* gx = px->grad_buffer() + s * in_stride;
        if (g.is_pointwise()) {
          Eigen::Map<MatRM<T>> gxm(gx, patch, pixels);
          product(gxm, wm.transpose(), gm, true);
        } else {
          Eigen::Map<MatRM<T>> dm(dcol.data(), patch, pixels);
          product(dm, wm.transpose(), gm, false);
          col2im_add(dcol.data(), g, gx);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  require(first.size() == 4, "concat_channels: inputs must be 4-d, got " + shape_string(first));
  int channels = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Shape& s = parts[k].shape();
    require(s.size() == 4 && s[0] == first[0] && s[2] == first[2] && s[3] == first[3],
            "concat_channels: part " + std::to_string(k) + " has shape " + shape_string(s) +
                ", expected N,H,W matching " + shape_string(first));
    channels += s[1];
  }
  const int n = first[0];
  const std::size_t plane = static_cast<std::size_t>(first[2]) * first[3];
  std::vector<T> out(static_cast<std::size_t>(n) * channels * plane);
  std::vector<NodePtr<T>> parents;
  std::vector<int> offsets;
  int offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = static_cast<std::size_t>(p.dim(1)) * plane;
    for (int s = 0; s < n; ++s)
      std::copy_n(p.data().data() + s * block, block, out.data() + (s * channels + offset) * plane);
    parents.push_back(p.node());
    offsets.push_back(offset);
    offset += p.dim(1);
  }
  auto captured = parents;
  return make_result<T>(Shape{n, channels, first[2], first[3]}, std::move(out), "concat_channels", std::move(parents),
                        [captured, offsets, n, channels, plane](detail::Node<T>& self) {
    for (std::size_t k = 0; k < captured.size(); ++k) {
      auto& p = captured[k];
      if (!p->requires_grad) continue;
      const std::size_t block = static_cast<std::size_t>(p->shape[1]) * plane;
      T* gp = p->grad_buffer();
      for (int s = 0; s < n; ++s) {
        const T* src = self.grad.data() + (s * channels + offsets[k]) * plane;
        for (std::size_t i = 0; i < block; ++i) gp[s * block + i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> max_over_channels(const Tensor<T>& x) {
  require(x.rank() == 4, "max_over_channels: input must be 4-d, got " + shape_string(x.shape()));
  require(x.dim(1) == 3, "max_over_channels: expected exactly 3 channels (dim 1), got " + std::to_string(x.dim(1)));
  const int n = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<T> out(n * plane);
  std::vector<unsigned char> arg(n * plane);
  const T* d = x.data().data();
  for (int s = 0; s < n; ++s)
    for (std::size_t i = 0; i < plane; ++i) {
      unsigned char best = 0;
      T v = d[(s * 3) * plane + i];
      for (unsigned char c = 1; c < 3; ++c) {
        const T candidate = d[(s * 3 + c) * plane + i];
        if (candidate > v) {
          v = candidate;
          best = c;
        }
      }
      out[s * plane + i] = v;
      arg[s * plane + i] = best;
    }
  auto px = x.node();
  return make_result<T>(Shape{n, 1, x.dim(2), x.dim(3)}, std::move(out), "max_over_channels", {px},
                        [px, arg = std::move(arg), plane](detail::Node<T>& self) {
    T* gx = px->grad_buffer();
    for (std::size_t k = 0; k < self.data.size(); ++k) {
      const std::size_t s = k / plane;
      const std::size_t i = k % plane;
      gx[(s * 3 + arg[k]) * plane + i] += self.grad[k];
    }
  });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, UpsampleMode mode) {
  require(x.rank() == 4, "upsample2x: input must be 4-d, got " + shape_string(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const T* d = x.data().data();
  auto px = x.node();
  if (mode == UpsampleMode::nearest) {
    std::vector<T> out(static_cast<std::size_t>(n) * c * 4 * h * w);
    for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          out[(p * 2 * h + y) * 2 * w + xx] = d[(p * h + y / 2) * w + xx / 2];
    return make_result<T>(Shape{n, c, 2 * h, 2 * w}, std::move(out), "upsample_nearest", {px},
                          [px, n, c, h, w](detail::Node<T>& self) {
      T* gx = px->grad_buffer();
      for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            gx[(p * h + y / 2) * w + xx / 2] += self.grad[(p * 2 * h + y) * 2 * w + xx];
    });
  }
  require(c % 4 == 0, "upsample2x(pixel_shuffle): channel count (dim 1) = " + std::to_string(c) +
                          " is not divisible by 4");
  const int co = c / 4;
  // Output element (s, k, 2y+i, 2x+j) reads input (s, 4k+2i+j, y, x).
  auto source = [=](std::size_t s, int k, int oy, int ox) {
    const int ci = 4 * k + 2 * (oy % 2) + (ox % 2);
    return ((s * c + ci) * h + oy / 2) * w + ox / 2;
  };
  std::vector<T> out(static_cast<std::size_t>(n) * c * h * w);
  std::size_t idx = 0;
  for (int s = 0; s < n; ++s)
    for (int k = 0; k < co; ++k)
      for (int oy = 0; oy < 2 * h; ++oy)
        for (int ox = 0; ox < 2 * w; ++ox) out[idx++] = d[source(s, k, oy, ox)];
  return make_result<T>(Shape{n, co, 2 * h, 2 * w}, std::move(out), "pixel_shuffle", {px},
                        [px, n, co, h, w, source](detail::Node<T>& self) {
    T* gx = px->grad_buffer();
    std::size_t idx = 0;
    for (int s = 0; s < n; ++s)
      for (int k = 0; k < co; ++k)
        for (int oy = 0; oy < 2 * h; ++oy)
          for (int ox = 0; ox < 2 * w; ++ox) gx[source(s, k, oy, ox)] += self.grad[idx++];
  });
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
  require(x.rank() == 4, "maxpool2x2: input must be 4-d, got " + shape_string(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2x2: spatial dims (2,3) must be even, got " + shape_string(x.shape()));
  const int ho = h / 2, wo = w / 2;
  std::vector<T> out(static_cast<std::size_t>(n) * c * ho * wo);
  std::vector<std::size_t> arg(out.size());
  const T* d = x.data().data();
  std::size_t k = 0;
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx, ++k) {
        std::size_t best = (p * h + 2 * y) * w + 2 * xx;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            const std::size_t cand = (p * h + 2 * y + i) * w + 2 * xx + j;
            if (d[cand] > d[best]) best = cand;
          }
        out[k] = d[best];
        arg[k] = best;
      }
  auto px = x.node();
  return make_result<T>(Shape{n, c, ho, wo}, std::move(out), "maxpool2x2", {px},
                        [px, arg = std::move(arg)](detail::Node<T>& self) {
    T* gx = px->grad_buffer();
    for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += self.grad[k];
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  const Broadcast bc = plan_broadcast(a, b, "l1_loss");
  const std::size_t n = shape_numel(bc.out_shape);
  if (n == 0) throw ShapeError("l1_loss: empty operands");
  const auto da = a.data();
  const auto db = b.data();
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i)
    total += std::abs(da[bc.index(i, bc.a_channel)] - db[bc.index(i, bc.b_channel)]);
  auto pa = a.node();
  auto pb = b.node();
  return make_result<T>(Shape{}, {total / static_cast<T>(n)}, "l1_loss", {pa, pb},
                        [pa, pb, bc, n](detail::Node<T>& self) {
    const T g = self.grad[0] / static_cast<T>(n);
    T* ga = pa->requires_grad ? pa->grad_buffer() : nullptr;
    T* gb = pb->requires_grad ? pb->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ia = bc.index(i, bc.a_channel);
      const std::size_t ib = bc.index(i, bc.b_channel);
      const T diff = pa->data[ia] - pb->data[ib];
      const T sign = diff > T(0) ? T(1) : diff < T(0) ? T(-1) : T(0);
      if (ga) ga[ia] += g * sign;
      if (gb) gb[ib] -= g * sign;
    }
  });
}

#define DEANET_INSTANTIATE_OPS(T)                                                                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> relu(const Tensor<T>&);                                                             \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                                         \
  template Tensor<T> sum(const Tensor<T>&);                                                              \
  template Tensor<T> mean(const Tensor<T>&);                                                             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);             \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                                        \
  template Tensor<T> max_over_channels(const Tensor<T>&);                                                \
  template Tensor<T> upsample2x(const Tensor<T>&, UpsampleMode);                                         \
  template Tensor<T> maxpool2x2(const Tensor<T>&);                                                       \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);

DEANET_INSTANTIATE_OPS(float)
DEANET_INSTANTIATE_OPS(double)

}  // namespace deanet
