#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deanet/module.hpp"

namespace deanet {

/// Shared architecture knobs of the three networks.
///
/// Level l (0-based) runs at input_side / 2^l with width(l) channels; the
/// deepest level is depth_levels - 1.
struct NetConfig {
  int depth_levels = 6;
  int base_channels = 32;
  int dense_growth = 16;
  UpsampleMode upsample_mode = UpsampleMode::nearest;

  int width(int level) const { return base_channels << (level < 2 ? level : 2); }
  int divisor() const { return 1 << (depth_levels - 1); }
  int deepest_side(int input_side) const { return input_side / divisor(); }
  void validate() const;
};

template <typename T>
struct Decomposition {
  Tensor<T> reflectance;   // [N,3,H,W] in (0,1)
  Tensor<T> illumination;  // [N,1,H,W] in (0,1)
};

template <typename T>
struct EnhanceOutput {
  Tensor<T> hf_enhanced;            // [N,3,H,W], signed
  Tensor<T> reflectance_enhanced;   // [N,3,H,W] in (0,1)
  Tensor<T> illumination_enhanced;  // [N,1,H,W] in (0,1)
};

/// UNet encoder-decoder whose levels hold residual blocks (short hops) and
/// whose decoder concatenates same-level encoder features (long hops).
/// Downsampling is a stride-2 3x3 conv; upsampling is nearest + 3x3 conv or
/// pixel-shuffle + 3x3 conv.
template <typename T>
class ResUNet : public Module<T> {
 public:
  ResUNet(const std::string& prefix, int in_channels, const NetConfig& config, std::mt19937_64& rng);

  // Returns width(0)-channel features at input resolution.
  Tensor<T> features(const Tensor<T>& x) const;

  const NetConfig& config() const { return config_; }
  Shape last_deepest_shape() const { return last_deepest_shape_; }

 protected:
  void check_input(const Tensor<T>& x, const char* net) const;

 private:
  struct ResBlock {
    Conv2dLayer<T> first, second;
  };
  Tensor<T> residual(const ResBlock& block, const Tensor<T>& x) const;

  NetConfig config_;
  Conv2dLayer<T> stem_;
  std::vector<ResBlock> encoder_;
  std::vector<Conv2dLayer<T>> down_;
  std::vector<Conv2dLayer<T>> up_;
  std::vector<Conv2dLayer<T>> fuse_;
  std::vector<ResBlock> decoder_;
  mutable Shape last_deepest_shape_;
};

/// Decom-Net: RGB plus its channel-max brightness map in, sigmoid
/// reflectance (3ch) and illumination (1ch) out.
template <typename T>
class DecomNet : public ResUNet<T> {
 public:
  explicit DecomNet(const NetConfig& config, std::uint64_t seed = 1);
  Decomposition<T> forward(const Tensor<T>& image) const;

 private:
  explicit DecomNet(const NetConfig& config, std::mt19937_64 rng);
  Conv2dLayer<T> reflectance_head_;
  Conv2dLayer<T> illumination_head_;
};

/// UNet whose encoder levels are dense blocks (each conv sees all previous
/// outputs of the block) followed by a 1x1 transition that halves the
/// channel count before downsampling. The decoder receives the
/// pre-transition features through skip concatenation.
template <typename T>
class DenseUNet : public Module<T> {
 public:
  DenseUNet(const std::string& prefix, int in_channels, int out_channels, bool squash, const NetConfig& config,
            std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x) const;

 private:
  struct Level {
    std::vector<Conv2dLayer<T>> dense;
    Conv2dLayer<T> transition;
    Conv2dLayer<T> down;  // unused at the deepest level
  };
  NetConfig config_;
  bool squash_;
  Conv2dLayer<T> stem_;
  std::vector<Level> encoder_;
  std::vector<Conv2dLayer<T>> up_;
  std::vector<Conv2dLayer<T>> fuse_;
  Conv2dLayer<T> head_;
};

/// Enhance-Net: three independent DenseUNet branches for the high-frequency
/// layer (unsquashed), reflectance and illumination (sigmoid).
template <typename T>
class EnhanceNet : public Module<T> {
 public:
  explicit EnhanceNet(const NetConfig& config, std::uint64_t seed = 2);
  EnhanceOutput<T> forward(const Tensor<T>& hf_low, const Decomposition<T>& low) const;
  const NetConfig& config() const { return config_; }

 private:
  EnhanceNet(const NetConfig& config, std::mt19937_64 rng);
  NetConfig config_;
  DenseUNet<T> hf_branch_;
  DenseUNet<T> reflectance_branch_;
  DenseUNet<T> illumination_branch_;
};

/// Adjust-Net: composes R*L + HF from the enhanced triplet, concatenates it
/// with the raw components (10 channels) and refines with a ResUNet.
template <typename T>
class AdjustNet : public ResUNet<T> {
 public:
  static constexpr int kInputChannels = 10;
  explicit AdjustNet(const NetConfig& config, std::uint64_t seed = 3);
  Tensor<T> forward(const EnhanceOutput<T>& enhanced) const;

 private:
  explicit AdjustNet(const NetConfig& config, std::mt19937_64 rng);
  Conv2dLayer<T> head_;
};

/// R * L (L broadcast over RGB) + hf. `hf` may be undefined, meaning zero.
/// No clamping.
template <typename T>
Tensor<T> compose_retinex(const Decomposition<T>& decomposition, const Tensor<T>& hf);

extern template class ResUNet<float>;
extern template class ResUNet<double>;
extern template class DecomNet<float>;
extern template class DecomNet<double>;
extern template class DenseUNet<float>;
extern template class DenseUNet<double>;
extern template class EnhanceNet<float>;
extern template class EnhanceNet<double>;
extern template class AdjustNet<float>;
extern template class AdjustNet<double>;

}  // namespace deanet
