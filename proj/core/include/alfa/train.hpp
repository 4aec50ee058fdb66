#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "alfa/augment.hpp"
#include "alfa/datasets.hpp"
#include "alfa/losses.hpp"
#include "alfa/model.hpp"
#include "alfa/optim.hpp"

namespace alfa {

struct TrainConfig {
  std::size_t iterations = 3000;
  std::size_t batch = 32;
  double lr = 5e-5;
  double lr_inner = 0.0;  // 0 = same as lr
  FeatureMask mask;
  LossWeights weights;
  AugmentSpec augment;
  EncoderConfig encoder;  // input_dim filled from the dataset when 0
  std::uint64_t seed = 0;
  bool phase2_enabled = true;
  bool interleave = true;      // one meta step after each Phase I step
  double sequential_phase1_frac = 0.8;  // budget split in sequential mode
  std::size_t val_every = 50;
  double meta_frac_tr = 0.5;

  double inner_lr() const { return lr_inner > 0.0 ? lr_inner : lr; }
};

struct EvalResult {
  std::vector<std::size_t> preds;
  std::vector<std::size_t> labels;
  Tensor probs;  // n x N_c
};

struct TrainResult {
  ParamSet params;
  ParamSet best_params;  // best source-validation checkpoint
  std::vector<LossReport> history;
  std::vector<std::pair<std::size_t, double>> val_history;  // (iteration, accuracy %)
};

// One joint update of every non-ablated parameter group from the seven-term
// objective on a domain-stratified batch.
LossReport phase1_step(ParamSet& params, const DomainDataset& ds, const BatchRef& batch,
                       const TrainConfig& cfg, AdamState& adam, std::uint64_t step_seed);

// First-order episodic update of omega = (gamma, ln.gamma, dc) on the given
// meta split; alpha/beta parameters are never touched.
void phase2_meta_step(ParamSet& params, const DomainDataset& ds, const LodoSplit& split,
                      const MetaSplit& meta, const TrainConfig& cfg, AdamState& meta_adam,
                      std::uint64_t step_seed);

// Generic first-order meta gradient: inner SGD step on f_tr, gradient of
// f_te at the inner point, returned as the update direction for omega.
using LossFn = std::function<Tensor(Tape&, const ParamSet& bound)>;
std::map<std::string, Tensor> first_order_meta_grad(const LossFn& f_tr, const LossFn& f_te,
                                                    const ParamSet& omega, double lr_inner,
                                                    ParamSet* inner_point = nullptr);

TrainResult train_run(const DomainDataset& ds, const LodoSplit& split, const TrainConfig& cfg,
                      const std::string& out_dir = "");

// Pooled-source cross-entropy baseline: one beta-architecture encoder plus
// the classifier; domain labels are never consulted.
TrainResult erm_baseline_run(const DomainDataset& ds, const LodoSplit& split,
                             const TrainConfig& cfg, const std::string& out_dir = "");

EvalResult evaluate(const ParamSet& params, const FeatureMask& mask, const DomainDataset& ds,
                    const std::vector<std::pair<std::size_t, std::size_t>>& items);
EvalResult evaluate_domain(const ParamSet& params, const FeatureMask& mask,
                           const DomainDataset& ds, std::size_t domain);

struct AblationRow {
  FeatureMask mask;
  double target_accuracy = 0.0;
};

// The seven extractor-mask configurations, each trained and scored on the
// held-out target.
std::vector<AblationRow> ablation_matrix(const DomainDataset& ds, const LodoSplit& split,
                                         const TrainConfig& cfg);

std::vector<FeatureMask> ablation_masks();

void write_loss_csv(const std::string& path, const std::vector<LossReport>& history);
void write_config_echo(const std::string& path, const TrainConfig& cfg,
                       const LodoSplit& split);

}  // namespace alfa
