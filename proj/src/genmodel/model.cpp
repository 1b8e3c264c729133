#include "auxvae/genmodel/model.hpp"

#include <algorithm>
#include <sstream>

#include "auxvae/tensor/ops.hpp"

namespace auxvae::genmodel {

using nn::Activation;
using nn::LayerSpec;
using tensor::Shape;
using tensor::Tensor;
using tensor::Var;

std::string to_string(ArchVariant v) { return v == ArchVariant::kMlp ? "mlp" : "conv"; }

ArchVariant parse_arch_variant(const std::string& text) {
  if (text == "mlp") return ArchVariant::kMlp;
  if (text == "conv") return ArchVariant::kConv;
  throw ConfigError("unknown architecture variant '" + text + "' (expected mlp or conv)");
}

ArchitectureDescriptor ArchitectureDescriptor::make(ArchVariant variant, Shape image,
                                                    std::size_t d_z, std::size_t d) {
  if (image.size() != 3) throw ConfigError("architecture: image shape must be C,H,W");
  if (d_z == 0) throw ConfigError("architecture: d_z must be positive");
  ArchitectureDescriptor a;
  a.variant = variant;
  a.image = image;
  a.d_z = d_z;
  a.d = d;
  const std::size_t pixels = tensor::element_count(image);
  if (variant == ArchVariant::kMlp) {
    a.encoder = {LayerSpec::dense(pixels, 512), LayerSpec::act(Activation::kRelu, {512}),
                 LayerSpec::dense(512, 256), LayerSpec::act(Activation::kRelu, {256}),
                 LayerSpec::dense(256, 2 * d_z)};
    a.decoder = {LayerSpec::dense(d_z, 256), LayerSpec::act(Activation::kRelu, {256}),
                 LayerSpec::dense(256, 512), LayerSpec::act(Activation::kRelu, {512}),
                 LayerSpec::dense(512, pixels), LayerSpec::act(Activation::kSigmoid, image)};
  } else {
    if (image != Shape{1, 33, 33}) {
      throw ConfigError("architecture: the conv variant is laid out for 1x33x33 images, got " +
                        tensor::to_string(image));
    }
    std::vector<LayerSpec> enc;
    std::size_t c = 1, s = 33;
    for (std::size_t out : {32, 64, 128, 256}) {
      enc.push_back(LayerSpec::conv2d(c, s, s, out, 4, 2, 1));
      enc.push_back(LayerSpec::act(Activation::kRelu, enc.back().out));
      c = out;
      s = enc.back().out[1];
    }
    const std::size_t flat = c * s * s;
    enc.push_back(LayerSpec::dense(flat, 256));
    enc.push_back(LayerSpec::act(Activation::kRelu, {256}));
    enc.push_back(LayerSpec::dense(256, 2 * d_z));
    a.encoder = std::move(enc);

    std::vector<LayerSpec> dec{LayerSpec::dense(d_z, 32), LayerSpec::act(Activation::kRelu, {32})};
    c = 32;
    s = 1;
    for (std::size_t out : {128, 64, 32}) {
      dec.push_back(LayerSpec::conv_transpose2d(c, s, s, out, 4, 2, 1));
      dec.push_back(LayerSpec::act(Activation::kRelu, dec.back().out));
      c = out;
      s = dec.back().out[1];
    }
    dec.push_back(LayerSpec::conv_transpose2d(c, s, s, 1, 5, 4, 0));
    dec.push_back(LayerSpec::act(Activation::kSigmoid, dec.back().out));
    a.decoder = std::move(dec);
  }
  a.validate();
  return a;
}

void ArchitectureDescriptor::validate() const {
  if (image.size() != 3 || tensor::element_count(image) == 0) {
    throw ConfigError("architecture: image shape must be three positive extents");
  }
  if (d_z == 0) throw ConfigError("architecture: d_z must be positive");
  if (d > d_z) {
    throw ConfigError("architecture: d = " + std::to_string(d) + " exceeds d_z = " +
                      std::to_string(d_z));
  }
  if (encoder.empty() || decoder.empty()) throw ConfigError("architecture: empty layer chain");
  try {
    nn::validate_chain(encoder);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("encoder: ") + e.what());
  }
  try {
    nn::validate_chain(decoder);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("decoder: ") + e.what());
  }
  if (tensor::element_count(encoder.front().in) != tensor::element_count(image)) {
    throw ConfigError("architecture: encoder input does not match the image size");
  }
  if (tensor::element_count(encoder.back().out) != 2 * d_z) {
    throw ConfigError("architecture: encoder output must have 2*d_z = " + std::to_string(2 * d_z) +
                      " features");
  }
  if (tensor::element_count(decoder.front().in) != d_z) {
    throw ConfigError("architecture: decoder input must have d_z features");
  }
  const LayerSpec& last = decoder.back();
  if (last.kind != nn::LayerKind::kActivation || last.activation != Activation::kSigmoid) {
    throw ConfigError("architecture: decoder must end in a sigmoid");
  }
  if (last.out != image) throw ConfigError("architecture: decoder output must equal the image shape");
}

namespace {

std::string extents_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

std::string ArchitectureDescriptor::to_text() const {
  std::ostringstream os;
  os << "variant " << to_string(variant) << '\n';
  os << "image " << extents_text(image) << '\n';
  os << "d_z " << d_z << '\n';
  os << "d " << d << '\n';
  os << "encoder " << encoder.size() << '\n';
  for (const auto& s : encoder) os << nn::to_string(s) << '\n';
  os << "decoder " << decoder.size() << '\n';
  for (const auto& s : decoder) os << nn::to_string(s) << '\n';
  return os.str();
}

ArchitectureDescriptor ArchitectureDescriptor::from_text(const std::string& text) {
  std::istringstream is(text);
  ArchitectureDescriptor a;
  auto expect = [&](const std::string& key) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("architecture text: missing '" + key + "'");
    if (line.rfind(key + " ", 0) != 0) {
      throw ConfigError("architecture text: expected '" + key + "', got '" + line + "'");
    }
    return line.substr(key.size() + 1);
  };
  auto number = [](const std::string& v) -> std::size_t {
    try {
      std::size_t used = 0;
      const auto n = std::stoul(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::logic_error&) {
      throw ConfigError("architecture text: bad number '" + v + "'");
    }
  };
  a.variant = parse_arch_variant(expect("variant"));
  {
    const std::string v = expect("image");
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, 'x')) a.image.push_back(number(part));
  }
  a.d_z = number(expect("d_z"));
  a.d = number(expect("d"));
  for (auto* chain : {&a.encoder, &a.decoder}) {
    const std::size_t n = number(expect(chain == &a.encoder ? "encoder" : "decoder"));
    for (std::size_t i = 0; i < n; ++i) {
      std::string line;
      if (!std::getline(is, line)) throw ConfigError("architecture text: truncated layer list");
      chain->push_back(nn::parse_layer_spec(line));
    }
  }
  a.validate();
  return a;
}

template <typename T>
Model<T> init_model(const ArchitectureDescriptor& arch, std::uint64_t seed) {
  arch.validate();
  Model<T> m{arch, nn::init_params<T>(arch.encoder, seed, kEncoderPrefix)};
  // Distinct stream for the decoder so its draws do not depend on encoder size.
  m.params.append(nn::init_params<T>(arch.decoder, seed ^ 0x9e3779b97f4a7c15ULL, kDecoderPrefix));
  return m;
}

template <typename T>
Posterior<T> encode(const ArchitectureDescriptor& arch, const nn::BoundParams<T>& params,
                    const Var<T>& x) {
  const Shape s = x.shape();
  if (s.size() != 4 || Shape(s.begin() + 1, s.end()) != arch.image) {
    throw ShapeError("encode: input " + tensor::to_string(s) + " does not match image shape " +
                     tensor::to_string(arch.image));
  }
  Var<T> h = nn::forward_chain(arch.encoder, params, kEncoderPrefix, x);
  h = tensor::reshape(h, Shape{s[0], 2 * arch.d_z});
  Posterior<T> p;
  p.mu = tensor::slice(h, 1, 0, arch.d_z);
  p.logvar = tensor::clamp(tensor::slice(h, 1, arch.d_z, 2 * arch.d_z),
                           static_cast<T>(-kLogvarLimit), static_cast<T>(kLogvarLimit));
  return p;
}

template <typename T>
Var<T> reparameterize(const Posterior<T>& post, const Var<T>& noise) {
  if (noise.shape() != post.mu.shape()) {
    throw ShapeError("reparameterize: noise " + tensor::to_string(noise.shape()) +
                     " does not match posterior " + tensor::to_string(post.mu.shape()));
  }
  Var<T> sd = tensor::exp(tensor::scale(post.logvar, static_cast<T>(0.5)));
  return tensor::add(post.mu, tensor::mul(sd, noise));
}

template <typename T>
std::pair<Var<T>, Var<T>> partition(const Var<T>& z, std::size_t d) {
  if (z.shape().size() != 2) throw ShapeError("partition: z must be rank 2, got " +
                                              tensor::to_string(z.shape()));
  const std::size_t d_z = z.shape()[1];
  if (d > d_z) {
    throw ConfigError("partition: d = " + std::to_string(d) + " exceeds d_z = " +
                      std::to_string(d_z));
  }
  return {tensor::slice(z, 1, 0, d), tensor::slice(z, 1, d, d_z)};
}

template <typename T>
Var<T> decode_logits(const ArchitectureDescriptor& arch, const nn::BoundParams<T>& params,
                     const Var<T>& z) {
  const Shape s = z.shape();
  if (s.size() != 2 || s[1] != arch.d_z) {
    throw ShapeError("decode: latent " + tensor::to_string(s) + " does not match d_z = " +
                     std::to_string(arch.d_z));
  }
  // The trailing sigmoid is left out; the likelihood works on logits.
  const std::vector<LayerSpec> body(arch.decoder.begin(), arch.decoder.end() - 1);
  Var<T> h = nn::forward_chain(body, params, kDecoderPrefix, z);
  Shape out{s[0]};
  out.insert(out.end(), arch.image.begin(), arch.image.end());
  return tensor::reshape(h, out);
}

template <typename T>
Var<T> decode(const ArchitectureDescriptor& arch, const nn::BoundParams<T>& params,
              const Var<T>& z) {
  return tensor::sigmoid(decode_logits(arch, params, z));
}

template <typename T>
Tensor<T> take_rows(const Tensor<T>& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin > end || end > t.dim(0)) {
    throw ShapeError("take_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + tensor::to_string(t.shape()));
  }
  Shape s = t.shape();
  const std::size_t row = t.size() / std::max<std::size_t>(s[0], 1);
  s[0] = end - begin;
  std::vector<T> v(t.data() + begin * row, t.data() + end * row);
  return Tensor<T>(s, std::move(v));
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& t, const std::vector<std::size_t>& rows) {
  if (t.rank() == 0) throw ShapeError("gather_rows: scalar input");
  Shape s = t.shape();
  const std::size_t n = s[0];
  const std::size_t row = n == 0 ? 0 : t.size() / n;
  s[0] = rows.size();
  Tensor<T> out(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather_rows: index " + std::to_string(rows[i]) + " out of range");
    std::copy(t.data() + rows[i] * row, t.data() + (rows[i] + 1) * row, out.data() + i * row);
  }
  return out;
}

namespace {

template <typename T>
void write_rows(Tensor<T>& dst, std::size_t begin, const Tensor<T>& src) {
  const std::size_t row = dst.size() / dst.dim(0);
  std::copy(src.data(), src.data() + src.size(), dst.data() + begin * row);
}

}  // namespace

template <typename T>
PosteriorValues<T> encode_values(const Model<T>& model, const Tensor<T>& x, std::size_t chunk) {
  const std::size_t n = x.dim(0);
  PosteriorValues<T> out{Tensor<T>(Shape{n, model.arch.d_z}), Tensor<T>(Shape{n, model.arch.d_z})};
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    tensor::Graph<T> g;
    nn::BoundParams<T> bound(g, model.params, false);
    auto post = encode(model.arch, bound, g.constant(take_rows(x, b, e)));
    write_rows(out.mu, b, post.mu.value());
    write_rows(out.logvar, b, post.logvar.value());
  }
  return out;
}

template <typename T>
Tensor<T> decode_values(const Model<T>& model, const Tensor<T>& z, std::size_t chunk) {
  const std::size_t n = z.dim(0);
  Shape s{n};
  s.insert(s.end(), model.arch.image.begin(), model.arch.image.end());
  Tensor<T> out(s);
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    tensor::Graph<T> g;
    nn::BoundParams<T> bound(g, model.params, false);
    write_rows(out, b, decode(model.arch, bound, g.constant(take_rows(z, b, e))).value());
  }
  return out;
}

template <typename T>
Tensor<T> reconstruct_values(const Model<T>& model, const Tensor<T>& x, std::size_t chunk) {
  return decode_values(model, encode_values(model, x, chunk).mu, chunk);
}

#define AUXVAE_INSTANTIATE_GENMODEL(T)                                                        \
  template Model<T> init_model<T>(const ArchitectureDescriptor&, std::uint64_t);              \
  template Posterior<T> encode(const ArchitectureDescriptor&, const nn::BoundParams<T>&,     \
                               const Var<T>&);                                                \
  template Var<T> reparameterize(const Posterior<T>&, const Var<T>&);                         \
  template std::pair<Var<T>, Var<T>> partition(const Var<T>&, std::size_t);                   \
  template Var<T> decode_logits(const ArchitectureDescriptor&, const nn::BoundParams<T>&,    \
                                const Var<T>&);                                               \
  template Var<T> decode(const ArchitectureDescriptor&, const nn::BoundParams<T>&,           \
                         const Var<T>&);                                                      \
  template PosteriorValues<T> encode_values(const Model<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> decode_values(const Model<T>&, const Tensor<T>&, std::size_t);          \
  template Tensor<T> reconstruct_values(const Model<T>&, const Tensor<T>&, std::size_t);     \
  template Tensor<T> take_rows(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::size_t>&);

AUXVAE_INSTANTIATE_GENMODEL(float)
AUXVAE_INSTANTIATE_GENMODEL(double)

}  // namespace auxvae::genmodel
