#pragma once

#include <span>
#include <vector>

#include "deanet/tensor.hpp"

namespace deanet {

enum class UpsampleMode { nearest, pixel_shuffle };

// Binary elementwise ops accept equal shapes, or two 4-d tensors that agree
// on N, H, W where one side has a single channel (broadcast over C). The
// broadcast side's gradient is summed over the channel axis.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// Cross-correlation of x[N,Cin,H,W] with weight[Cout,Cin,kh,kw].
/// `bias` may be undefined. Output is [N,Cout,(H+2p-kh)/s+1,(W+2p-kw)/s+1].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int padding);

template <typename T> Tensor<T> concat_channels(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat_channels<T>(std::span<const Tensor<T>>(v));
}

// Per-pixel max over exactly three channels; ties route to the lowest index.
template <typename T> Tensor<T> max_over_channels(const Tensor<T>& x);

// nearest: each pixel becomes a 2x2 block. pixel_shuffle: [N,4C,H,W] ->
// [N,C,2H,2W], channel 4c+2i+j lands at offset (i,j) of the block.
template <typename T> Tensor<T> upsample2x(const Tensor<T>& x, UpsampleMode mode);

// 2x2 stride-2 max pooling (first maximum wins). Used by imported
// VGG-style feature extractors.
template <typename T> Tensor<T> maxpool2x2(const Tensor<T>& x);

/// Mean absolute difference; subgradient is sign(a-b)/numel with sign(0)=0.
template <typename T> Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace deanet
