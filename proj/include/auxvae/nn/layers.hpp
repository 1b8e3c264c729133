#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "auxvae/tensor/graph.hpp"

namespace auxvae::nn {

enum class LayerKind { kDense, kConv2d, kConvTranspose2d, kActivation };
enum class Activation { kNone, kRelu, kSigmoid, kTanh };

// One stage of a feed-forward chain. `in` and `out` are per-sample extents:
// {features} for dense layers, {C, H, W} for convolutions. A layer whose
// input arrives with a different (but equal-sized) shape is reshaped first,
// which is how flatten/unflatten boundaries are expressed.
struct LayerSpec {
  LayerKind kind = LayerKind::kActivation;
  tensor::Shape in;
  tensor::Shape out;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::kNone;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv2d(std::size_t in_channels, std::size_t height, std::size_t width,
                          std::size_t out_channels, std::size_t kernel, std::size_t stride,
                          std::size_t padding);
  static LayerSpec conv_transpose2d(std::size_t in_channels, std::size_t height,
                                    std::size_t width, std::size_t out_channels,
                                    std::size_t kernel, std::size_t stride, std::size_t padding);
  static LayerSpec act(Activation activation, tensor::Shape extents);

  bool has_params() const noexcept { return kind != LayerKind::kActivation; }
  // Throws ConfigError when extents or conv geometry are inconsistent.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

// Single-line text form used inside checkpoints, e.g.
// "conv2d in=1x33x33 out=32x16x16 k=4 s=2 p=1 act=none".
std::string to_string(const LayerSpec& spec);
LayerSpec parse_layer_spec(const std::string& line);

// Checks every layer and that each boundary carries the same element count.
// The error names the offending boundary.
void validate_chain(const std::vector<LayerSpec>& specs);

}  // namespace auxvae::nn
