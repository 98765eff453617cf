#include "deanet/nets.hpp"

#include "deanet/error.hpp"

namespace deanet {

void NetConfig::validate() const {
  if (depth_levels < 1 || depth_levels > 12) throw ConfigError("net.depth_levels must be in [1, 12]");
  if (base_channels < 1) throw ConfigError("net.base_channels must be >= 1");
  if (dense_growth < 1) throw ConfigError("net.dense_growth must be >= 1");
  if (upsample_mode == UpsampleMode::pixel_shuffle)
    for (int l = 1; l < depth_levels; ++l)
      if (width(l) % 4 != 0)
        throw ConfigError("net.upsample_mode = pixel_shuffle needs level widths divisible by 4; level " +
                          std::to_string(l) + " has " + std::to_string(width(l)) + " channels");
}

namespace {

template <typename T>
void check_spatial(const Tensor<T>& x, const NetConfig& config, const char* net) {
  if (x.rank() != 4) throw ShapeError(std::string(net) + ": input must be [N,C,H,W], got " + shape_string(x.shape()));
  const int d = config.divisor();
  if (x.dim(2) % d != 0 || x.dim(3) % d != 0) {
    throw ShapeError(std::string(net) + ": spatial dims " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                     " must be divisible by " + std::to_string(d) + " (2^(depth_levels-1))");
  }
}

template <typename T>
void check_aligned(const Tensor<T>& a, const Tensor<T>& b, const char* net, const char* what) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError(std::string(net) + ": " + what + " misaligned: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
void check_channels(const Tensor<T>& t, int channels, const char* net, const char* what) {
  if (t.rank() != 4 || t.dim(1) != channels)
    throw ShapeError(std::string(net) + ": " + what + " must have " + std::to_string(channels) + " channels, got " +
                     shape_string(t.shape()));
}

// Upsampler output channels feeding the 3x3 conv after it.
int upsampled_channels(const NetConfig& c, int level_below) {
  return c.upsample_mode == UpsampleMode::pixel_shuffle ? c.width(level_below) / 4 : c.width(level_below);
}

}  // namespace

// ---------------------------------------------------------------- ResUNet

template <typename T>
ResUNet<T>::ResUNet(const std::string& prefix, int in_channels, const NetConfig& config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const int depth = config_.depth_levels;
  stem_ = this->make_conv(prefix + ".stem", in_channels, config_.width(0), 3, 1, rng);
  for (int l = 0; l < depth; ++l) {
    const std::string p = prefix + ".enc" + std::to_string(l);
    const int c = config_.width(l);
    encoder_.push_back({this->make_conv(p + ".res.a", c, c, 3, 1, rng), this->make_conv(p + ".res.b", c, c, 3, 1, rng)});
    if (l + 1 < depth) down_.push_back(this->make_conv(p + ".down", c, config_.width(l + 1), 3, 2, rng));
  }
  // Decoder layers are stored indexed by level (0..depth-2).
  up_.resize(depth > 1 ? depth - 1 : 0);
  fuse_.resize(up_.size());
  decoder_.resize(up_.size());
  for (int l = depth - 2; l >= 0; --l) {
    const std::string p = prefix + ".dec" + std::to_string(l);
    const int c = config_.width(l);
    up_[l] = this->make_conv(p + ".up", upsampled_channels(config_, l + 1), c, 3, 1, rng);
    fuse_[l] = this->make_conv(p + ".fuse", 2 * c, c, 3, 1, rng);
    decoder_[l] = {this->make_conv(p + ".res.a", c, c, 3, 1, rng), this->make_conv(p + ".res.b", c, c, 3, 1, rng)};
  }
}

template <typename T>
Tensor<T> ResUNet<T>::residual(const ResBlock& block, const Tensor<T>& x) const {
  return relu(add(x, block.second(relu(block.first(x)))));
}

template <typename T>
void ResUNet<T>::check_input(const Tensor<T>& x, const char* net) const {
  check_spatial(x, config_, net);
}

template <typename T>
Tensor<T> ResUNet<T>::features(const Tensor<T>& x) const {
  const int depth = config_.depth_levels;
  std::vector<Tensor<T>> skips;
  Tensor<T> h = relu(stem_(x));
  for (int l = 0; l < depth; ++l) {
    h = residual(encoder_[l], h);
    if (l + 1 < depth) {
      skips.push_back(h);
      h = relu(down_[l](h));
    }
  }
  last_deepest_shape_ = h.shape();
  for (int l = depth - 2; l >= 0; --l) {
    Tensor<T> u = relu(up_[l](upsample2x(h, config_.upsample_mode)));
    h = relu(fuse_[l](concat_channels<T>({u, skips[l]})));
    h = residual(decoder_[l], h);
  }
  return h;
}

// ---------------------------------------------------------------- DecomNet

template <typename T>
DecomNet<T>::DecomNet(const NetConfig& config, std::uint64_t seed) : DecomNet(config, std::mt19937_64(seed)) {}

template <typename T>
DecomNet<T>::DecomNet(const NetConfig& config, std::mt19937_64 rng) : ResUNet<T>("decom", 4, config, rng) {
  reflectance_head_ = this->make_conv("decom.head.reflectance", config.width(0), 3, 3, 1, rng);
  illumination_head_ = this->make_conv("decom.head.illumination", config.width(0), 1, 3, 1, rng);
}

template <typename T>
Decomposition<T> DecomNet<T>::forward(const Tensor<T>& image) const {
  this->check_input(image, "decom_forward");
  check_channels(image, 3, "decom_forward", "image");
  const Tensor<T> input = concat_channels<T>({image, max_over_channels(image)});
  const Tensor<T> h = this->features(input);
  return {sigmoid(reflectance_head_(h)), sigmoid(illumination_head_(h))};
}

// ---------------------------------------------------------------- DenseUNet

template <typename T>
DenseUNet<T>::DenseUNet(const std::string& prefix, int in_channels, int out_channels, bool squash,
                        const NetConfig& config, std::mt19937_64& rng)
    : config_(config), squash_(squash) {
  config_.validate();
  const int depth = config_.depth_levels;
  const int growth = config_.dense_growth;
  constexpr int kDenseLayers = 3;
  stem_ = this->make_conv(prefix + ".stem", in_channels, config_.width(0), 3, 1, rng);
  for (int l = 0; l < depth; ++l) {
    const std::string p = prefix + ".enc" + std::to_string(l);
    const int c = config_.width(l);
    Level level;
    for (int i = 0; i < kDenseLayers; ++i)
      level.dense.push_back(this->make_conv(p + ".dense" + std::to_string(i), c + i * growth, growth, 3, 1, rng));
    const int block_out = c + kDenseLayers * growth;
    if (l + 1 < depth) {
      const int halved = block_out / 2;
      level.transition = this->make_conv(p + ".transition", block_out, halved, 1, 1, rng);
      level.down = this->make_conv(p + ".down", halved, config_.width(l + 1), 3, 2, rng);
    } else {
      level.transition = this->make_conv(p + ".transition", block_out, c, 1, 1, rng);
    }
    encoder_.push_back(std::move(level));
  }
  up_.resize(depth > 1 ? depth - 1 : 0);
  fuse_.resize(up_.size());
  for (int l = depth - 2; l >= 0; --l) {
    const std::string p = prefix + ".dec" + std::to_string(l);
    const int c = config_.width(l);
    up_[l] = this->make_conv(p + ".up", upsampled_channels(config_, l + 1), c, 3, 1, rng);
    fuse_[l] = this->make_conv(p + ".fuse", c + c + kDenseLayers * growth, c, 3, 1, rng);
  }
  head_ = this->make_conv(prefix + ".head", config_.width(0), out_channels, 3, 1, rng);
}

template <typename T>
Tensor<T> DenseUNet<T>::forward(const Tensor<T>& x) const {
  const int depth = config_.depth_levels;
  std::vector<Tensor<T>> skips;
  Tensor<T> h = relu(stem_(x));
  for (int l = 0; l < depth; ++l) {
    const Level& level = encoder_[l];
    std::vector<Tensor<T>> block{h};
    for (const auto& conv : level.dense) {
      const Tensor<T> in = block.size() == 1 ? block[0] : concat_channels<T>(std::span<const Tensor<T>>(block));
      block.push_back(relu(conv(in)));
    }
    const Tensor<T> dense_out = concat_channels<T>(std::span<const Tensor<T>>(block));
    h = relu(level.transition(dense_out));
    if (l + 1 < depth) {
      skips.push_back(dense_out);
      h = relu(level.down(h));
    }
  }
  for (int l = depth - 2; l >= 0; --l) {
    Tensor<T> u = relu(up_[l](upsample2x(h, config_.upsample_mode)));
    h = relu(fuse_[l](concat_channels<T>({u, skips[l]})));
  }
  Tensor<T> out = head_(h);
  return squash_ ? sigmoid(out) : out;
}

// ---------------------------------------------------------------- EnhanceNet

template <typename T>
EnhanceNet<T>::EnhanceNet(const NetConfig& config, std::uint64_t seed) : EnhanceNet(config, std::mt19937_64(seed)) {}

template <typename T>
EnhanceNet<T>::EnhanceNet(const NetConfig& config, std::mt19937_64 rng)
    : config_(config),
      hf_branch_("enhance.hf", 3, 3, false, config, rng),
      reflectance_branch_("enhance.reflectance", 3, 3, true, config, rng),
      illumination_branch_("enhance.illumination", 1, 1, true, config, rng) {
  for (const DenseUNet<T>* branch : {&hf_branch_, &reflectance_branch_, &illumination_branch_})
    for (const auto& p : branch->named_parameters()) this->adopt(p);
}

template <typename T>
EnhanceOutput<T> EnhanceNet<T>::forward(const Tensor<T>& hf_low, const Decomposition<T>& low) const {
  check_spatial(hf_low, config_, "enhance_forward");
  check_channels(hf_low, 3, "enhance_forward", "hf_low");
  check_channels(low.reflectance, 3, "enhance_forward", "reflectance");
  check_channels(low.illumination, 1, "enhance_forward", "illumination");
  check_aligned(hf_low, low.reflectance, "enhance_forward", "hf_low/reflectance");
  check_aligned(hf_low, low.illumination, "enhance_forward", "hf_low/illumination");
  return {hf_branch_.forward(hf_low), reflectance_branch_.forward(low.reflectance),
          illumination_branch_.forward(low.illumination)};
}

// ---------------------------------------------------------------- AdjustNet

template <typename T>
AdjustNet<T>::AdjustNet(const NetConfig& config, std::uint64_t seed) : AdjustNet(config, std::mt19937_64(seed)) {}

template <typename T>
AdjustNet<T>::AdjustNet(const NetConfig& config, std::mt19937_64 rng)
    : ResUNet<T>("adjust", kInputChannels, config, rng) {
  head_ = this->make_conv("adjust.head", config.width(0), 3, 3, 1, rng);
}

template <typename T>
Tensor<T> AdjustNet<T>::forward(const EnhanceOutput<T>& enhanced) const {
  const auto& hf = enhanced.hf_enhanced;
  const auto& r = enhanced.reflectance_enhanced;
  const auto& l = enhanced.illumination_enhanced;
  this->check_input(hf, "adjust_forward");
  check_channels(hf, 3, "adjust_forward", "hf_enhanced");
  check_channels(r, 3, "adjust_forward", "reflectance_enhanced");
  check_channels(l, 1, "adjust_forward", "illumination_enhanced");
  check_aligned(hf, r, "adjust_forward", "hf/reflectance");
  check_aligned(hf, l, "adjust_forward", "hf/illumination");
  const Tensor<T> candidate = compose_retinex<T>({r, l}, hf);
  const Tensor<T> input = concat_channels<T>({candidate, r, l, hf});
  return sigmoid(head_(this->features(input)));
}

template <typename T>
Tensor<T> compose_retinex(const Decomposition<T>& decomposition, const Tensor<T>& hf) {
  const Tensor<T>& r = decomposition.reflectance;
  const Tensor<T>& l = decomposition.illumination;
  check_aligned(r, l, "compose_retinex", "reflectance/illumination");
  check_channels(l, 1, "compose_retinex", "illumination");
  Tensor<T> product = mul(r, l);
  if (!hf.defined()) return product;
  if (hf.shape() != product.shape())
    throw ShapeError("compose_retinex: hf shape " + shape_string(hf.shape()) + " does not match " +
                     shape_string(product.shape()));
  return add(product, hf);
}

template class ResUNet<float>;
template class ResUNet<double>;
template class DecomNet<float>;
template class DecomNet<double>;
template class DenseUNet<float>;
template class DenseUNet<double>;
template class EnhanceNet<float>;
template class EnhanceNet<double>;
template class AdjustNet<float>;
template class AdjustNet<double>;
template Tensor<float> compose_retinex(const Decomposition<float>&, const Tensor<float>&);
template Tensor<double> compose_retinex(const Decomposition<double>&, const Tensor<double>&);

}  // namespace deanet
