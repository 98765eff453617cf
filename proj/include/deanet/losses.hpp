#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deanet/checkpoint.hpp"
#include "deanet/nets.hpp"

namespace deanet {

// Weights of the decomposition objective.
inline constexpr double kReflectanceWeight = 0.01;
inline constexpr double kMutualWeight = 0.001;
// Weight of the enhancement sum inside the joint objective.
inline constexpr double kEnhanceWeight = 0.1;

template <typename T>
struct DecomLossTerms {
  Tensor<T> l_r;
  Tensor<T> l_recon_low;
  Tensor<T> l_recon_high;
  Tensor<T> l_recon_low_mutual;
  Tensor<T> l_recon_high_mutual;
  Tensor<T> total;  // 0.01 l_r + recon_low + recon_high + 0.001 (mutual_low + mutual_high)
};

template <typename T>
struct EnhanceTargets {
  Tensor<T> hf_high;
  Tensor<T> reflectance_high;
  Tensor<T> illumination_high;
};

template <typename T>
struct EnhanceLossTerms {
  Tensor<T> l_hf;
  Tensor<T> l_en_r;
  Tensor<T> l_en_l;
  Tensor<T> l_enhance;  // unweighted sum of the three
};

template <typename T>
struct JointLossTerms {
  Tensor<T> l_hf;
  Tensor<T> l_en_r;
  Tensor<T> l_en_l;
  Tensor<T> l_enhance;
  Tensor<T> l_colour;
  Tensor<T> l_content;
  Tensor<T> total;  // 0.1 l_enhance + l_colour + l_content
};

/// Frozen convolutional feature stack for the content loss.
///
/// The default stack is seed-initialised: 8 3x3 convs with ReLU, three of
/// them stride 2, tapped after each downsampling conv (layers 2, 4, 7).
/// Externally trained weights can be imported from a DEAN container holding
/// "fx.<i>.weight" / "fx.<i>.bias" for i = 0..n-1, optionally "fx.<i>.stride"
/// (scalar), "fx.<i>.pool" (nonzero: 2x2 max-pool after the ReLU), and
/// "fx.mean" / "fx.std" (per-channel input normalisation).
template <typename T>
class FeatureExtractor : public Module<T> {
 public:
  static std::vector<int> default_taps() { return {2, 4, 7}; }

  explicit FeatureExtractor(std::uint64_t seed = 7, std::vector<int> taps = default_taps());
  static FeatureExtractor from_checkpoint(std::span<const CheckpointEntry> entries, std::vector<int> taps,
                                          const std::string& source);

  // Activations after each tapped layer, in tap order.
  std::vector<Tensor<T>> features(const Tensor<T>& image) const;
  const std::vector<int>& taps() const { return taps_; }
  std::size_t layer_count() const { return layers_.size(); }

 private:
  struct Layer {
    Conv2dLayer<T> conv;
    bool pool = false;
  };
  struct Empty {};
  explicit FeatureExtractor(Empty) {}
  void check_taps() const;

  std::vector<Layer> layers_;
  std::vector<int> taps_;
  bool normalise_ = false;
  Conv2dLayer<T> normaliser_;  // fixed 1x1 conv for (x - mean) / std
};

template <typename T>
DecomLossTerms<T> decom_loss(const Tensor<T>& image_low, const Decomposition<T>& low, const Tensor<T>& image_high,
                             const Decomposition<T>& high);

template <typename T>
EnhanceLossTerms<T> enhance_loss(const EnhanceOutput<T>& out, const EnhanceTargets<T>& targets);

/// Mean over taps of the L1 distance between activations. The reference
/// path is evaluated without gradient. No taps: constant 0 and a warning.
template <typename T>
Tensor<T> content_loss(const Tensor<T>& generated, const Tensor<T>& reference, const FeatureExtractor<T>& fx);

template <typename T>
JointLossTerms<T> joint_loss(const Tensor<T>& final_image, const Tensor<T>& reference,
                             const EnhanceLossTerms<T>& enhance_terms, const FeatureExtractor<T>& fx);

extern template class FeatureExtractor<float>;
extern template class FeatureExtractor<double>;

}  // namespace deanet
