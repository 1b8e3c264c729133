#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "auxvae/nn/layers.hpp"
#include "auxvae/nn/params.hpp"
#include "auxvae/tensor/graph.hpp"

namespace auxvae::genmodel {

enum class ArchVariant { kMlp, kConv };

std::string to_string(ArchVariant v);
ArchVariant parse_arch_variant(const std::string& text);

inline constexpr double kLogvarLimit = 10.0;
inline const std::string kEncoderPrefix = "enc.";
inline const std::string kDecoderPrefix = "dec.";

// Encoder emits 2*d_z features: the first d_z are means, the rest
// log-variances. The decoder ends in a sigmoid over the image shape.
struct ArchitectureDescriptor {
  ArchVariant variant = ArchVariant::kMlp;
  std::vector<nn::LayerSpec> encoder;
  std::vector<nn::LayerSpec> decoder;
  std::size_t d_z = 10;
  std::size_t d = 0;
  tensor::Shape image;  // C, H, W

  // mlp: H*W -> 512 -> 256 -> 2*d_z and d_z -> 256 -> 512 -> H*W.
  // conv: four stride-2 convolutions, FC 256, FC 2*d_z; the decoder maps
  // d_z -> 32 densely, then four transposed convolutions up to 33x33.
  static ArchitectureDescriptor make(ArchVariant variant, tensor::Shape image, std::size_t d_z,
                                     std::size_t d);

  // ConfigError when any invariant is broken.
  void validate() const;

  std::string to_text() const;
  static ArchitectureDescriptor from_text(const std::string& text);

  friend bool operator==(const ArchitectureDescriptor&, const ArchitectureDescriptor&) = default;
};

template <typename T>
struct Posterior {
  tensor::Var<T> mu;
  tensor::Var<T> logvar;  // clamped to [-10, 10]
};

template <typename T>
struct PosteriorValues {
  tensor::Tensor<T> mu;
  tensor::Tensor<T> logvar;
};

template <typename T>
struct Model {
  ArchitectureDescriptor arch;
  nn::ParamStore<T> params;
};

// Encoder parameters are prefixed "enc.", decoder parameters "dec.".
template <typename T>
Model<T> init_model(const ArchitectureDescriptor& arch, std::uint64_t seed);

// x: (B, C, H, W).
template <typename T>
Posterior<T> encode(const ArchitectureDescriptor& arch, const nn::BoundParams<T>& params,
                    const tensor::Var<T>& x);

// z = mu + exp(logvar / 2) * noise.
template <typename T>
tensor::Var<T> reparameterize(const Posterior<T>& post, const tensor::Var<T>& noise);

// Splits the columns of z into (z[:, :d], z[:, d:]); either block may be empty.
template <typename T>
std::pair<tensor::Var<T>, tensor::Var<T>> partition(const tensor::Var<T>& z, std::size_t d);

// Pre-sigmoid decoder output, (B, C, H, W).
template <typename T>
tensor::Var<T> decode_logits(const ArchitectureDescriptor& arch, const nn::BoundParams<T>& params,
                             const tensor::Var<T>& z);

// Pixel probabilities in (0, 1), (B, C, H, W).
template <typename T>
tensor::Var<T> decode(const ArchitectureDescriptor& arch, const nn::BoundParams<T>& params,
                      const tensor::Var<T>& z);

// Gradient-free evaluation helpers, processed in chunks of `chunk` rows.
template <typename T>
PosteriorValues<T> encode_values(const Model<T>& model, const tensor::Tensor<T>& x,
                                 std::size_t chunk = 256);
template <typename T>
tensor::Tensor<T> decode_values(const Model<T>& model, const tensor::Tensor<T>& z,
                                std::size_t chunk = 256);
// decode(mu(x)).
template <typename T>
tensor::Tensor<T> reconstruct_values(const Model<T>& model, const tensor::Tensor<T>& x,
                                     std::size_t chunk = 256);

// Rows [begin, end) of a tensor along its leading axis.
template <typename T>
tensor::Tensor<T> take_rows(const tensor::Tensor<T>& t, std::size_t begin, std::size_t end);
// Rows selected by index, in the given order.
template <typename T>
tensor::Tensor<T> gather_rows(const tensor::Tensor<T>& t, const std::vector<std::size_t>& rows);

}  // namespace auxvae::genmodel
