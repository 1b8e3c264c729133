#pragma once

#include "auxvae/nn/params.hpp"

namespace auxvae::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update of every parameter in `store`. Every
// parameter needs a gradient of its own shape in `grads` (ConfigError if
// missing); extra keys are rejected too.
template <typename T>
void adam_step(ParamStore<T>& store, const GradMap<T>& grads, const AdamOptions& options = {});

// Rescales all gradients in place so their joint L2 norm is at most
// max_norm. Returns the norm before clipping.
template <typename T>
double clip_global_norm(GradMap<T>& grads, double max_norm);

}  // namespace auxvae::nn
