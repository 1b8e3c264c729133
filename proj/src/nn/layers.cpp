#include "auxvae/nn/layers.hpp"

#include <sstream>

#include "auxvae/tensor/ops.hpp"

namespace auxvae::nn {

namespace {

std::string join_extents(const tensor::Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

tensor::Shape parse_extents(const std::string& text) {
  if (text.empty() || text.back() == 'x') throw ConfigError("layer spec: bad extent list '" + text + "'");
  tensor::Shape s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      s.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("layer spec: bad extent list '" + text + "'");
    }
  }
  return s;
}

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kConvTranspose2d: return "conv_transpose2d";
    case LayerKind::kActivation: return "activation";
  }
  return "?";
}

}  // namespace

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.in = {in};
  s.out = {out};
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t height, std::size_t width,
                            std::size_t out_channels, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.in = {in_channels, height, width};
  s.out = {out_channels, tensor::conv2d_output_extent(height, kernel, stride, padding),
           tensor::conv2d_output_extent(width, kernel, stride, padding)};
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::conv_transpose2d(std::size_t in_channels, std::size_t height,
                                      std::size_t width, std::size_t out_channels,
                                      std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::kConvTranspose2d;
  s.in = {in_channels, height, width};
  s.out = {out_channels, tensor::conv_transpose2d_output_extent(height, kernel, stride, padding),
           tensor::conv_transpose2d_output_extent(width, kernel, stride, padding)};
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::act(Activation activation, tensor::Shape extents) {
  LayerSpec s;
  s.kind = LayerKind::kActivation;
  s.in = extents;
  s.out = std::move(extents);
  s.activation = activation;
  return s;
}

void LayerSpec::validate() const {
  const std::string what = std::string(kind_name(kind)) + " layer";
  for (const auto* s : {&in, &out}) {
    if (s->empty()) throw ConfigError(what + ": missing extents");
    for (std::size_t e : *s) {
      if (e == 0) throw ConfigError(what + ": extents must be positive");
    }
  }
  switch (kind) {
    case LayerKind::kDense:
      if (in.size() != 1 || out.size() != 1) throw ConfigError(what + ": extents must be rank 1");
      break;
    case LayerKind::kConv2d:
    case LayerKind::kConvTranspose2d: {
      if (in.size() != 3 || out.size() != 3) throw ConfigError(what + ": extents must be C,H,W");
      if (kernel == 0 || stride == 0) throw ConfigError(what + ": kernel and stride must be >= 1");
      auto extent = [&](std::size_t e) {
        return kind == LayerKind::kConv2d
                   ? tensor::conv2d_output_extent(e, kernel, stride, padding)
                   : tensor::conv_transpose2d_output_extent(e, kernel, stride, padding);
      };
      std::size_t h = 0;
      std::size_t w = 0;
      try {
        h = extent(in[1]);
        w = extent(in[2]);
      } catch (const ShapeError& e) {
        throw ConfigError(what + ": " + e.what());
      }
      if (out[1] != h || out[2] != w) {
        throw ConfigError(what + ": declared output " + join_extents(out) +
                          " disagrees with geometry (" + std::to_string(h) + "x" +
                          std::to_string(w) + ")");
      }
      break;
    }
    case LayerKind::kActivation:
      if (in != out) throw ConfigError(what + ": input and output extents differ");
      break;
  }
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kNone: return "none";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
  }
  return "none";
}

Activation parse_activation(const std::string& text) {
  if (text == "none") return Activation::kNone;
  if (text == "relu") return Activation::kRelu;
  if (text == "sigmoid") return Activation::kSigmoid;
  if (text == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + text + "'");
}

std::string to_string(const LayerSpec& spec) {
  std::ostringstream os;
  os << kind_name(spec.kind) << " in=" << join_extents(spec.in) << " out=" << join_extents(spec.out);
  if (spec.kind == LayerKind::kConv2d || spec.kind == LayerKind::kConvTranspose2d) {
    os << " k=" << spec.kernel << " s=" << spec.stride << " p=" << spec.padding;
  }
  os << " act=" << to_string(spec.activation);
  return os.str();
}

LayerSpec parse_layer_spec(const std::string& line) {
  std::istringstream is(line);
  std::string kind;
  is >> kind;
  LayerSpec s;
  if (kind == "dense") {
    s.kind = LayerKind::kDense;
  } else if (kind == "conv2d") {
    s.kind = LayerKind::kConv2d;
  } else if (kind == "conv_transpose2d") {
    s.kind = LayerKind::kConvTranspose2d;
  } else if (kind == "activation") {
    s.kind = LayerKind::kActivation;
  } else {
    throw ConfigError("layer spec: unknown kind '" + kind + "'");
  }
  std::string token;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ConfigError("layer spec: bad token '" + token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    try {
      if (key == "in") {
        s.in = parse_extents(value);
      } else if (key == "out") {
        s.out = parse_extents(value);
      } else if (key == "k") {
        s.kernel = std::stoul(value);
      } else if (key == "s") {
        s.stride = std::stoul(value);
      } else if (key == "p") {
        s.padding = std::stoul(value);
      } else if (key == "act") {
        s.activation = parse_activation(value);
      } else {
        throw ConfigError("layer spec: unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("layer spec: bad value in '" + token + "'");
    }
  }
  s.validate();
  return s;
}

void validate_chain(const std::vector<LayerSpec>& specs) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    try {
      specs[i].validate();
    } catch (const ConfigError& e) {
      throw ConfigError("layer " + std::to_string(i) + ": " + e.what());
    }
    if (i > 0 && tensor::element_count(specs[i - 1].out) != tensor::element_count(specs[i].in)) {
      throw ConfigError("layer chain broken between layer " + std::to_string(i - 1) + " (out " +
                        join_extents(specs[i - 1].out) + ") and layer " + std::to_string(i) +
                        " (in " + join_extents(specs[i].in) + ")");
    }
  }
}

}  // namespace auxvae::nn
