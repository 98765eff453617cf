#include "deanet/losses.hpp"

#include <algorithm>

#include "deanet/error.hpp"
#include "deanet/log.hpp"

namespace deanet {
namespace {

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename T>
Tensor<T> weighted(const Tensor<T>& t, double w) {
  return scale(t, static_cast<T>(w));
}

}  // namespace

// ------------------------------------------------------- FeatureExtractor

template <typename T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed, std::vector<int> taps) : taps_(std::move(taps)) {
  struct Spec {
    int in, out, stride;
  };
  constexpr Spec kStack[] = {{3, 16, 1},  {16, 16, 1}, {16, 32, 2}, {32, 32, 1},
                             {32, 64, 2}, {64, 64, 1}, {64, 64, 1}, {64, 64, 2}};
  std::mt19937_64 rng(seed);
  int i = 0;
  for (const Spec& s : kStack) {
    layers_.push_back({this->make_conv("fx." + std::to_string(i++), s.in, s.out, 3, s.stride, rng), false});
  }
  this->set_trainable(false);
  check_taps();
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::from_checkpoint(std::span<const CheckpointEntry> entries,
                                                         std::vector<int> taps, const std::string& source) {
  FeatureExtractor<T> fx{Empty{}};
  fx.taps_ = std::move(taps);
  auto to_tensor = [](const CheckpointEntry& e) {
    Shape shape(e.dims.begin(), e.dims.end());
    return Tensor<T>(shape, std::vector<T>(e.values.begin(), e.values.end()));
  };
  for (int i = 0;; ++i) {
    const std::string p = "fx." + std::to_string(i);
    const CheckpointEntry* w = find_entry(entries, p + ".weight");
    if (!w) break;
    const CheckpointEntry* b = find_entry(entries, p + ".bias");
    if (w->dims.size() != 4 || w->dims[2] % 2 == 0 || w->dims[3] != w->dims[2])
      throw DataError(source + ": " + p + ".weight must be [Cout,Cin,k,k] with odd k");
    if (!b || b->dims.size() != 1 || b->dims[0] != w->dims[0])
      throw DataError(source + ": " + p + ".bias missing or not [Cout]");
    Layer layer;
    layer.conv.weight = to_tensor(*w);
    layer.conv.bias = to_tensor(*b);
    layer.conv.padding = static_cast<int>(w->dims[2] / 2);
    if (const CheckpointEntry* s = find_entry(entries, p + ".stride")) layer.conv.stride = static_cast<int>(s->values.at(0));
    if (const CheckpointEntry* pool = find_entry(entries, p + ".pool")) layer.pool = pool->values.at(0) != 0.0f;
    fx.adopt({p + ".weight", layer.conv.weight});
    fx.adopt({p + ".bias", layer.conv.bias});
    fx.layers_.push_back(std::move(layer));
  }
  if (fx.layers_.empty()) throw DataError(source + ": no fx.<i>.weight tensors found");
  const CheckpointEntry* mean = find_entry(entries, "fx.mean");
  const CheckpointEntry* stdev = find_entry(entries, "fx.std");
  if (mean || stdev) {
    if (!mean || !stdev || mean->values.size() != 3 || stdev->values.size() != 3)
      throw DataError(source + ": fx.mean and fx.std must both be present with 3 values");
    std::vector<T> w(9, T(0)), b(3);
    for (int c = 0; c < 3; ++c) {
      w[c * 3 + c] = T(1) / static_cast<T>(stdev->values[c]);
      b[c] = -static_cast<T>(mean->values[c]) / static_cast<T>(stdev->values[c]);
    }
    fx.normalise_ = true;
    fx.normaliser_.weight = Tensor<T>(Shape{3, 3, 1, 1}, std::move(w));
    fx.normaliser_.bias = Tensor<T>(Shape{3}, std::move(b));
  }
  fx.set_trainable(false);
  fx.check_taps();
  return fx;
}

template <typename T>
void FeatureExtractor<T>::check_taps() const {
  for (int t : taps_)
    if (t < 0 || t >= static_cast<int>(layers_.size()))
      throw ConfigError("loss.content_taps: tap " + std::to_string(t) + " outside [0, " +
                        std::to_string(layers_.size()) + ")");
}

template <typename T>
std::vector<Tensor<T>> FeatureExtractor<T>::features(const Tensor<T>& image) const {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw ShapeError("feature extractor: expected [N,3,H,W], got " + shape_string(image.shape()));
  std::vector<Tensor<T>> out(taps_.size());
  if (taps_.empty()) return out;
  const int last = *std::max_element(taps_.begin(), taps_.end());
  Tensor<T> h = normalise_ ? normaliser_(image) : image;
  for (int i = 0; i <= last; ++i) {
    h = relu(layers_[i].conv(h));
    if (layers_[i].pool) h = maxpool2x2(h);
    for (std::size_t k = 0; k < taps_.size(); ++k)
      if (taps_[k] == i) out[k] = h;
  }
  return out;
}

// ------------------------------------------------------------ objectives

template <typename T>
DecomLossTerms<T> decom_loss(const Tensor<T>& image_low, const Decomposition<T>& low, const Tensor<T>& image_high,
                             const Decomposition<T>& high) {
  check_same(image_low, image_high, "decom_loss: images");
  check_same(low.reflectance, high.reflectance, "decom_loss: reflectances");
  check_same(low.illumination, high.illumination, "decom_loss: illuminations");
  check_same(low.reflectance, image_low, "decom_loss: reflectance vs image");
  DecomLossTerms<T> t;
  t.l_r = l1_loss(low.reflectance, high.reflectance);
  t.l_recon_low = l1_loss(mul(low.reflectance, low.illumination), image_low);
  t.l_recon_high = l1_loss(mul(high.reflectance, high.illumination), image_high);
  t.l_recon_low_mutual = l1_loss(mul(high.reflectance, low.illumination), image_low);
  t.l_recon_high_mutual = l1_loss(mul(low.reflectance, high.illumination), image_high);
  t.total = add(add(add(weighted(t.l_r, kReflectanceWeight), t.l_recon_low), t.l_recon_high),
                weighted(add(t.l_recon_low_mutual, t.l_recon_high_mutual), kMutualWeight));
  return t;
}

template <typename T>
EnhanceLossTerms<T> enhance_loss(const EnhanceOutput<T>& out, const EnhanceTargets<T>& targets) {
  check_same(out.hf_enhanced, targets.hf_high, "enhance_loss: hf");
  check_same(out.reflectance_enhanced, targets.reflectance_high, "enhance_loss: reflectance");
  check_same(out.illumination_enhanced, targets.illumination_high, "enhance_loss: illumination");
  EnhanceLossTerms<T> t;
  t.l_hf = l1_loss(out.hf_enhanced, targets.hf_high);
  t.l_en_r = l1_loss(out.reflectance_enhanced, targets.reflectance_high);
  t.l_en_l = l1_loss(out.illumination_enhanced, targets.illumination_high);
  t.l_enhance = add(add(t.l_hf, t.l_en_r), t.l_en_l);
  return t;
}

template <typename T>
Tensor<T> content_loss(const Tensor<T>& generated, const Tensor<T>& reference, const FeatureExtractor<T>& fx) {
  check_same(generated, reference, "content_loss");
  if (fx.taps().empty()) {
    log::warn("content_loss: feature extractor has no tap layers; content loss is 0");
    return Tensor<T>::scalar(T(0));
  }
  const auto gen = fx.features(generated);
  const auto ref = fx.features(reference.detach());
  Tensor<T> acc = l1_loss(gen[0], ref[0]);
  for (std::size_t k = 1; k < gen.size(); ++k) acc = add(acc, l1_loss(gen[k], ref[k]));
  return scale(acc, T(1) / static_cast<T>(gen.size()));
}

template <typename T>
JointLossTerms<T> joint_loss(const Tensor<T>& final_image, const Tensor<T>& reference,
                             const EnhanceLossTerms<T>& enhance_terms, const FeatureExtractor<T>& fx) {
  check_same(final_image, reference, "joint_loss");
  JointLossTerms<T> t;
  t.l_hf = enhance_terms.l_hf;
  t.l_en_r = enhance_terms.l_en_r;
  t.l_en_l = enhance_terms.l_en_l;
  t.l_enhance = enhance_terms.l_enhance;
  t.l_colour = l1_loss(final_image, reference);
  t.l_content = content_loss(final_image, reference, fx);
  t.total = add(add(weighted(t.l_enhance, kEnhanceWeight), t.l_colour), t.l_content);
  return t;
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

#define DEANET_INSTANTIATE_LOSSES(T)                                                                           \
  template DecomLossTerms<T> decom_loss(const Tensor<T>&, const Decomposition<T>&, const Tensor<T>&,           \
                                        const Decomposition<T>&);                                              \
  template EnhanceLossTerms<T> enhance_loss(const EnhanceOutput<T>&, const EnhanceTargets<T>&);                \
  template Tensor<T> content_loss(const Tensor<T>&, const Tensor<T>&, const FeatureExtractor<T>&);             \
  template JointLossTerms<T> joint_loss(const Tensor<T>&, const Tensor<T>&, const EnhanceLossTerms<T>&,        \
                                        const FeatureExtractor<T>&);

DEANET_INSTANTIATE_LOSSES(float)
DEANET_INSTANTIATE_LOSSES(double)

}  // namespace deanet
