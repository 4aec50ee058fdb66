#include "alfa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "alfa/rng.hpp"

namespace fs = std::filesystem;

namespace alfa {

namespace {

struct BatchData {
  Tensor images;  // b x D, flattened
  std::vector<std::size_t> y;
  std::vector<std::size_t> h;
  std::vector<Tensor> raw;  // {3,H,W} views for augmentation
};

BatchData gather(const DomainDataset& ds,
                 const std::vector<std::pair<std::size_t, std::size_t>>& items) {
  if (items.empty()) throw Error("gather: empty batch");
  const Example& first = ds.domains[items[0].first][items[0].second];
  const std::size_t dim = first.image.size();
  BatchData b;
  b.images = Tensor({items.size(), dim});
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Example& ex = ds.domains[items[i].first][items[i].second];
    if (ex.image.size() != dim) throw ShapeError("gather: inconsistent image sizes");
    std::copy(ex.image.data.begin(), ex.image.data.end(),
              b.images.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
    b.y.push_back(ex.y);
    b.h.push_back(ex.h);
    b.raw.push_back(ex.image.detached());
  }
  return b;
}

EncoderConfig resolve_encoder(const DomainDataset& ds, const TrainConfig& cfg) {
  EncoderConfig enc = cfg.encoder;
  if (enc.input_dim == 0) {
    for (const auto& dom : ds.domains)
      if (!dom.empty()) {
        enc.input_dim = dom[0].image.size();
        break;
      }
  }
  if (enc.input_dim == 0) throw Error("train: empty dataset");
  return enc;
}

std::vector<std::string> omega_names(const ParamSet& params) {
  std::vector<std::string> names = params_with_prefix(params, "gamma.");
  for (const auto& n : params_with_prefix(params, "ln.gamma.")) names.push_back(n);
  for (const auto& n : params_with_prefix(params, "dc.")) names.push_back(n);
  return names;
}

// Classifier loss with alpha/beta features taken from `frozen` (untracked)
// and gamma/classifier parameters from `omega`.
Tensor frozen_path_loss(const ParamSet& frozen, const ParamSet& omega, const FeatureMask& mask,
                        const Tensor& images, const std::vector<std::size_t>& y) {
  std::vector<Tensor> parts;
  if (mask.use_alpha) {
    Tensor z = encode_one(frozen, "alpha", images);
    parts.push_back(layer_norm(z, frozen.at("ln.alpha.gain"), frozen.at("ln.alpha.bias")));
  }
  if (mask.use_beta) {
    Tensor z = encode_one(frozen, "beta", images);
    parts.push_back(layer_norm(z, frozen.at("ln.beta.gain"), frozen.at("ln.beta.bias")));
  }
  if (mask.use_gamma) {
    Tensor z = encode_one(omega, "gamma", images);
    parts.push_back(layer_norm(z, omega.at("ln.gamma.gain"), omega.at("ln.gamma.bias")));
  }
  Tensor cat = concat_cols(parts);
  Tensor logits = add_bcast_row(matmul(cat, omega.at("dc.W")), omega.at("dc.b"));
  return cross_entropy(logits, y);
}

std::vector<std::pair<std::size_t, std::size_t>> sample_items(
    std::size_t domain, const std::vector<std::size_t>& pool, std::size_t cap, Rng& rng) {
  std::vector<std::size_t> idx = pool;
  if (idx.size() > cap) {
    rng.shuffle(idx);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t i : idx) items.emplace_back(domain, i);
  return items;
}

}  // namespace

LossReport phase1_step(ParamSet& params, const DomainDataset& ds, const BatchRef& batch,
                       const TrainConfig& cfg, AdamState& adam, std::uint64_t step_seed) {
  BatchData data = gather(ds, batch.items);
  Tape tape;
  ParamSet bound = params.bind(tape);
  const FeatureMask& mask = cfg.mask;
  FeatureTriple feats = encode(bound, data.images, mask);

  LossTerms terms;
  if (mask.use_alpha) {
    TripletBatch tb = make_triplet_batch(data.raw, cfg.augment, batch.items.size(), step_seed);
    Tensor z_anc = encode_one(bound, "alpha", tb.anchors);
    Tensor z_pos = encode_one(bound, "alpha", tb.positives);
    Tensor z_all = concat_rows({z_anc, z_pos});
    std::vector<std::size_t> ids;
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t i = 0; i < tb.count; ++i) ids.push_back(i);
    auto triples = mine_semi_hard(z_all.detached(), ids, cfg.weights.mining_margin);
    std::vector<std::size_t> ai, pi, ni;
    for (const auto& t : triples) {
      ai.push_back(t.anchor);
      pi.push_back(t.positive);
      ni.push_back(t.negative);
    }
    terms.ssl = ssl_triplet_loss(take_rows(z_all, ai), take_rows(z_all, pi),
                                 take_rows(z_all, ni), cfg.weights.margin);
  }
  if (mask.use_beta)
    terms.align = alignment_loss(feats.z_beta, data.y, data.h, bound, cfg.weights, ds.n_classes);
  if (mask.use_gamma) {
    Tensor logits =
        add_bcast_row(matmul(feats.z_gamma, bound.at("dgamma.W")), bound.at("dgamma.b"));
    terms.specific = specific_loss(logits, data.h);
  }
  if (mask.use_alpha && mask.use_beta) terms.cov_ab = cov_loss(feats.z_alpha, feats.z_beta);
  if (mask.use_alpha && mask.use_gamma) terms.cov_ag = cov_loss(feats.z_alpha, feats.z_gamma);
  if (mask.use_beta && mask.use_gamma) terms.cov_bg = cov_loss(feats.z_beta, feats.z_gamma);
  Tensor cat = concat_features(bound, feats, mask);
  Tensor logits = add_bcast_row(matmul(cat, bound.at("dc.W")), bound.at("dc.b"));
  terms.cls = classification_loss(logits, data.y);

  LossReport report;
  Tensor total = total_loss(terms, cfg.weights, report);
  tape.backward(total);
  adam_step(params, bound, tape, adam);
  return report;
}

std::map<std::string, Tensor> first_order_meta_grad(const LossFn& f_tr, const LossFn& f_te,
                                                    const ParamSet& omega, double lr_inner,
                                                    ParamSet* inner_point) {
  Tape tape_tr;
  ParamSet bound_tr = omega.bind(tape_tr);
  Tensor loss_tr = f_tr(tape_tr, bound_tr);
  tape_tr.backward(loss_tr);

  ParamSet inner;
  for (const auto& [name, t] : omega.tensors) {
    Tensor stepped = t.detached();
    const auto& g = tape_tr.grad_buf(bound_tr.at(name).node);
    for (std::size_t i = 0; i < stepped.size(); ++i) stepped.data[i] -= lr_inner * g[i];
    inner.insert(name, std::move(stepped));
  }
  if (inner_point) *inner_point = inner;

  Tape tape_te;
  ParamSet bound_te = inner.bind(tape_te);
  Tensor loss_te = f_te(tape_te, bound_te);
  tape_te.backward(loss_te);

  std::map<std::string, Tensor> grads;
  for (const auto& [name, t] : inner.tensors)
    grads.emplace(name, tape_te.grad_tensor(bound_te.at(name)));
  return grads;
}

void phase2_meta_step(ParamSet& params, const DomainDataset& ds, const LodoSplit& split,
                      const MetaSplit& meta, const TrainConfig& cfg, AdamState& meta_adam,
                      std::uint64_t step_seed) {
  if (!cfg.phase2_enabled) throw Error("phase2_meta_step: phase 2 disabled in config");
  ParamSet omega;
  for (const auto& name : omega_names(params)) omega.insert(name, params.at(name).detached());

  Rng rng(step_seed);
  std::map<std::string, Tensor> acc;
  std::size_t counted = 0;
  for (std::size_t k : split.sources) {
    if (meta.meta_test[k].empty()) {
      std::cerr << "phase2_meta_step: empty meta-test split for domain " << k << ", skipping\n";
      continue;
    }
    Rng krng = rng.derive(k);
    BatchData tr = gather(ds, sample_items(k, meta.meta_train[k], cfg.batch, krng));
    BatchData te = gather(ds, sample_items(k, meta.meta_test[k], cfg.batch, krng));
    auto f_tr = [&](Tape&, const ParamSet& bound) {
      return frozen_path_loss(params, bound, cfg.mask, tr.images, tr.y);
    };
    auto f_te = [&](Tape&, const ParamSet& bound) {
      return frozen_path_loss(params, bound, cfg.mask, te.images, te.y);
    };
    auto grads = first_order_meta_grad(f_tr, f_te, omega, cfg.inner_lr());
    for (auto& [name, g] : grads) {
      auto it = acc.find(name);
      if (it == acc.end()) {
        acc.emplace(name, std::move(g));
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
      }
    }
    ++counted;
  }
  if (counted == 0) return;
  for (auto& [name, g] : acc)
    for (auto& v : g.data) v /= static_cast<double>(counted);
  adam_step_grads(params, acc, meta_adam);
}

EvalResult evaluate(const ParamSet& params, const FeatureMask& mask, const DomainDataset& ds,
                    const std::vector<std::pair<std::size_t, std::size_t>>& items) {
  BatchData data = gather(ds, items);
  FeatureTriple feats = encode(params, data.images, mask);
  Tensor cat = concat_features(params, feats, mask);
  Tensor logits = add_bcast_row(matmul(cat, params.at("dc.W")), params.at("dc.b"));
  EvalResult out;
  out.probs = softmax_rows(logits);
  out.labels = data.y;
  for (std::size_t i = 0; i < out.probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < out.probs.cols(); ++c)
      if (out.probs.at(i, c) > out.probs.at(i, best)) best = c;
    out.preds.push_back(best);
  }
  return out;
}

EvalResult evaluate_domain(const ParamSet& params, const FeatureMask& mask,
                           const DomainDataset& ds, std::size_t domain) {
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t i = 0; i < ds.domains[domain].size(); ++i) items.emplace_back(domain, i);
  return evaluate(params, mask, ds, items);
}

namespace {

double source_val_accuracy(const ParamSet& params, const FeatureMask& mask,
                           const DomainDataset& ds, const LodoSplit& split) {
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t k : split.sources)
    for (std::size_t i : split.val[k]) items.emplace_back(k, i);
  if (items.empty()) return 0.0;
  EvalResult ev = evaluate(params, mask, ds, items);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ev.preds.size(); ++i)
    if (ev.preds[i] == ev.labels[i]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(ev.preds.size());
}

TrainResult run_loop(const DomainDataset& ds, const LodoSplit& split, const TrainConfig& cfg,
                     const std::string& out_dir, bool erm) {
  TrainConfig local = cfg;
  local.encoder = resolve_encoder(ds, cfg);
  if (erm) {
    local.mask = FeatureMask{false, true, false};
    local.phase2_enabled = false;
  }
  ParamSet params =
      init_model(local.encoder, ds.n_classes, ds.n_domains(), local.mask, Rng(cfg.seed).next_u64());
  AdamState adam;
  adam.lr = cfg.lr;
  AdamState meta_adam;
  meta_adam.lr = cfg.lr;

  Rng seeds(cfg.seed ^ 0x5eedULL);
  TrainResult result;
  double best_val = -1.0;
  result.best_params = params;

  std::vector<BatchRef> batches;
  std::size_t epoch = 0, cursor = 0;
  const std::size_t phase1_budget =
      (!local.phase2_enabled || local.interleave)
          ? local.iterations
          : static_cast<std::size_t>(
                std::lround(local.sequential_phase1_frac * static_cast<double>(local.iterations)));

  for (std::size_t iter = 0; iter < local.iterations; ++iter) {
    const bool do_phase1 = iter < phase1_budget;
    const bool do_phase2 =
        local.phase2_enabled && (local.interleave ? true : iter >= phase1_budget);
    try {
      if (do_phase1) {
        if (batches.empty() || cursor >= batches.size()) {
          batches = batch_iter(ds, split, local.batch, cfg.seed ^ 0xba7cULL, epoch++, !erm);
          cursor = 0;
        }
        if (erm) {
          // plain pooled cross-entropy; no triplet batch, no domain labels
          BatchData data = gather(ds, batches[cursor].items);
          Tape tape;
          ParamSet bound = params.bind(tape);
          Tensor z = encode_one(bound, "beta", data.images);
          Tensor cat = layer_norm(z, bound.at("ln.beta.gain"), bound.at("ln.beta.bias"));
          Tensor logits = add_bcast_row(matmul(cat, bound.at("dc.W")), bound.at("dc.b"));
          Tensor loss = cross_entropy(logits, data.y);
          tape.backward(loss);
          std::vector<std::string> group = params_with_prefix(params, "beta.");
          for (const auto& n : params_with_prefix(params, "ln.beta.")) group.push_back(n);
          for (const auto& n : params_with_prefix(params, "dc.")) group.push_back(n);
          adam_step(params, bound, tape, adam, group);
          LossReport rep;
          rep.l_c = loss.value();
          rep.total = rep.l_c;
          result.history.push_back(rep);
        } else {
          result.history.push_back(
              phase1_step(params, ds, batches[cursor], local, adam, seeds.derive(iter).next_u64()));
        }
        ++cursor;
      }
      if (do_phase2) {
        MetaSplit meta =
            meta_split(ds, split, local.meta_frac_tr, Rng(cfg.seed ^ 0x3e7aULL).derive(iter).next_u64());
        phase2_meta_step(params, ds, split, meta, local, meta_adam,
                         seeds.derive(iter ^ 0x9999ULL).next_u64());
      }
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(iter) + ": " + e.what());
    }
    if ((iter + 1) % local.val_every == 0 || iter + 1 == local.iterations) {
      const double acc = source_val_accuracy(params, local.mask, ds, split);
      result.val_history.emplace_back(iter + 1, acc);
      if (acc > best_val) {
        best_val = acc;
        result.best_params = params;
      }
    }
  }
  result.params = params;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_config_echo((fs::path(out_dir) / "config.txt").string(), local, split);
    write_loss_csv((fs::path(out_dir) / "losses.csv").string(), result.history);
    save_checkpoint((fs::path(out_dir) / "checkpoint_final").string(), result.params);
    save_checkpoint((fs::path(out_dir) / "checkpoint_best").string(), result.best_params);
  }
  return result;
}

}  // namespace

TrainResult train_run(const DomainDataset& ds, const LodoSplit& split, const TrainConfig& cfg,
                      const std::string& out_dir) {
  return run_loop(ds, split, cfg, out_dir, false);
}

TrainResult erm_baseline_run(const DomainDataset& ds, const LodoSplit& split,
                             const TrainConfig& cfg, const std::string& out_dir) {
  return run_loop(ds, split, cfg, out_dir, true);
}

std::vector<FeatureMask> ablation_masks() {
  return {
      {true, false, false}, {false, true, false}, {false, false, true}, {true, true, false},
      {true, false, true},  {false, true, true},  {true, true, true},
  };
}

std::vector<AblationRow> ablation_matrix(const DomainDataset& ds, const LodoSplit& split,
                                         const TrainConfig& cfg) {
  std::vector<AblationRow> rows;
  std::size_t run = 0;
  for (const FeatureMask& mask : ablation_masks()) {
    TrainConfig c = cfg;
    c.mask = mask;
    c.seed = Rng(cfg.seed).derive(run++).next_u64();
    TrainResult r = train_run(ds, split, c);
    EvalResult ev = evaluate_domain(r.best_params, mask, ds, split.target);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ev.preds.size(); ++i)
      if (ev.preds[i] == ev.labels[i]) ++correct;
    rows.push_back(
        {mask, 100.0 * static_cast<double>(correct) / static_cast<double>(ev.preds.size())});
  }
  return rows;
}

void write_loss_csv(const std::string& path, const std::vector<LossReport>& history) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "step,l_ssl,l_i,l_s,l_ab,l_ag,l_bg,l_c,total\n";
  char buf[256];
  for (std::size_t i = 0; i < history.size(); ++i) {
    const LossReport& r = history[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", i, r.l_ssl,
                  r.l_i, r.l_s, r.l_ab, r.l_ag, r.l_bg, r.l_c, r.total);
    os << buf;
  }
}

void write_config_echo(const std::string& path, const TrainConfig& cfg, const LodoSplit& split) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "iterations=" << cfg.iterations << "\n";
  os << "batch=" << cfg.batch << "\n";
  os << "lr=" << cfg.lr << "\n";
  os << "lr_inner=" << cfg.inner_lr() << "\n";
  os << "mask=" << cfg.mask.tag() << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "phase2=" << (cfg.phase2_enabled ? 1 : 0) << "\n";
  os << "interleave=" << (cfg.interleave ? 1 : 0) << "\n";
  os << "target=" << split.target << "\n";
  os << "val_frac=" << split.val_frac << "\n";
  os << "embed_dim=" << cfg.encoder.embed_dim << "\n";
}

}  // namespace alfa
