#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "alfa/optim.hpp"
#include "alfa/tensor.hpp"

namespace alfa {

struct EncoderConfig {
  std::size_t input_dim = 0;               // flattened image size
  std::vector<std::size_t> hidden = {128, 64};
  std::size_t embed_dim = 32;              // paper preset: 512
};

// Which of the alpha/beta/gamma extractors participate (ablation rows).
struct FeatureMask {
  bool use_alpha = true;
  bool use_beta = true;
  bool use_gamma = true;

  std::size_t active_count() const {
    return (use_alpha ? 1u : 0u) + (use_beta ? 1u : 0u) + (use_gamma ? 1u : 0u);
  }
  std::string tag() const;
};

struct FeatureTriple {
  Tensor z_alpha;
  Tensor z_beta;
  Tensor z_gamma;
};

struct HeadLogits {
  Tensor invariant;   // Delta_beta: batch x N_c
  Tensor specific;    // Delta_gamma: batch x N_h
  Tensor classifier;  // Delta_c: batch x N_c
};

// Builds all parameter tensors: three MLP encoders, the two auxiliary linear
// heads, the classifier over the masked concatenation, and layer-norm
// gain/bias per concatenation site. Names are prefixed "alpha.", "beta.",
// "gamma.", "dbeta.", "dgamma.", "dc.", "ln.<site>.".
ParamSet init_model(const EncoderConfig& cfg, std::size_t n_classes, std::size_t n_domains,
                    const FeatureMask& mask, std::uint64_t seed);

// Forward pass of one MLP encoder ("alpha"/"beta"/"gamma" prefix).
Tensor encode_one(const ParamSet& params, const std::string& prefix, const Tensor& images);

// All three encoders; inactive extractors yield empty tensors.
FeatureTriple encode(const ParamSet& params, const Tensor& images, const FeatureMask& mask);

// Per-row mean-0/var-1 followed by gain and bias (both 1 x d).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Layer-normalized active features concatenated in alpha, beta, gamma order.
Tensor concat_features(const ParamSet& params, const FeatureTriple& t, const FeatureMask& mask);

HeadLogits heads(const ParamSet& params, const FeatureTriple& t, const FeatureMask& mask);

// Checkpoint = one .alfa tensor file per parameter plus a manifest.txt of
// "name shape..." lines.
void save_checkpoint(const std::string& dir, const ParamSet& params);
ParamSet load_checkpoint(const std::string& dir);

std::vector<std::string> params_with_prefix(const ParamSet& params, const std::string& prefix);

}  // namespace alfa
