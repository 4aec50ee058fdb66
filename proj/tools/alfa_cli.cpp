// Command-line driver: dataset synthesis, LODO training, ablation matrix,
// embedding export, and metrics aggregation. Exit codes: 0 success, 2
// configuration/usage error, 1 runtime failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alfa/datasets.hpp"
#include "alfa/metrics.hpp"
#include "alfa/model.hpp"
#include "alfa/rng.hpp"
#include "alfa/train.hpp"

using namespace alfa;
namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

FeatureMask parse_mask(const std::string& s) {
  FeatureMask m{false, false, false};
  for (char c : s) {
    if (c == 'a') m.use_alpha = true;
    else if (c == 'b') m.use_beta = true;
    else if (c == 'g') m.use_gamma = true;
    else throw ConfigError("mask must be a combination of 'a', 'b', 'g': " + s);
  }
  if (m.active_count() == 0) throw ConfigError("mask selects no extractor");
  return m;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct MetricsRow {
  std::string target;
  std::uint64_t seed = 0;
  std::string mask;
  bool phase2 = false;
  double accuracy = 0, auroc = 0, recall = 0;
};

void write_metrics(const std::string& path, const std::vector<MetricsRow>& rows,
                   bool with_average) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "target,seed,mask,phase2,accuracy,auroc,recall\n";
  for (const auto& r : rows)
    os << r.target << "," << r.seed << "," << r.mask << "," << (r.phase2 ? 1 : 0) << ","
       << fmt6(r.accuracy) << "," << fmt6(r.auroc) << "," << fmt6(r.recall) << "\n";
  if (with_average && !rows.empty()) {
    auto stat = [&](double MetricsRow::*f) {
      double mean = 0;
      for (const auto& r : rows) mean += r.*f;
      mean /= static_cast<double>(rows.size());
      double var = 0;
      for (const auto& r : rows) var += (r.*f - mean) * (r.*f - mean);
      var /= static_cast<double>(rows.size());  // population std
      return fmt6(mean) + "±" + fmt6(std::sqrt(var));
    };
    os << "average±std_pop," << rows[0].seed << "," << rows[0].mask << ","
       << (rows[0].phase2 ? 1 : 0) << "," << stat(&MetricsRow::accuracy) << ","
       << stat(&MetricsRow::auroc) << "," << stat(&MetricsRow::recall) << "\n";
  }
}

MetricsRow score_target(const ParamSet& params, const FeatureMask& mask, const DomainDataset& ds,
                        std::size_t target, std::uint64_t seed, bool phase2) {
  EvalResult ev = evaluate_domain(params, mask, ds, target);
  MetricsRow row;
  row.target = ds.domain_names[target];
  row.seed = seed;
  row.mask = mask.tag();
  row.phase2 = phase2;
  row.accuracy = accuracy(ev.preds, ev.labels);
  row.auroc = auroc_macro(ev.probs, ev.labels);
  row.recall = macro_recall(ev.preds, ev.labels, ds.n_classes);
  return row;
}

// options shared by train/lodo/ablate; CLI11's config-file support handles the
// key=value file, command-line flags override it
struct RunOptions {
  std::string data;
  std::string out;
  std::size_t iterations = 3000;
  std::size_t batch = 32;
  double lr = 5e-5;
  double lr_inner = 0.0;
  std::string mask = "abg";
  std::uint64_t seed = 0;
  bool no_phase2 = false;
  bool sequential = false;
  double hed_theta = 0.05;
  std::size_t embed_dim = 32;
  std::vector<std::size_t> hidden = {128, 64};
  double val_frac = 0.2;

  TrainConfig to_config() const {
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.batch = batch;
    cfg.lr = lr;
    cfg.lr_inner = lr_inner;
    cfg.mask = parse_mask(mask);
    cfg.seed = seed;
    cfg.phase2_enabled = !no_phase2;
    cfg.interleave = !sequential;
    cfg.augment.hed_theta = hed_theta;
    cfg.encoder.embed_dim = embed_dim;
    cfg.encoder.hidden = hidden;
    return cfg;
  }
};

void add_run_options(CLI::App* cmd, RunOptions& opt) {
  cmd->add_option("--data", opt.data, "dataset directory")->required();
  cmd->add_option("--out", opt.out, "output directory")->required();
  cmd->add_option("--iterations", opt.iterations, "training iterations");
  cmd->add_option("--batch", opt.batch, "batch size");
  cmd->add_option("--lr", opt.lr, "learning rate");
  cmd->add_option("--lr-inner", opt.lr_inner, "inner meta learning rate (0 = same as --lr)");
  cmd->add_option("--mask", opt.mask, "active extractors, e.g. abg, ab, b");
  cmd->add_option("--seed", opt.seed, "random seed");
  cmd->add_flag("--no-phase2", opt.no_phase2, "disable the episodic meta phase");
  cmd->add_flag("--sequential", opt.sequential, "run phase 2 after phase 1 instead of interleaved");
  cmd->add_option("--hed-theta", opt.hed_theta, "stain jitter range for the pretext task");
  cmd->add_option("--embed-dim", opt.embed_dim, "embedding width per extractor");
  cmd->add_option("--hidden", opt.hidden, "hidden layer widths")->delimiter(',');
  cmd->add_option("--val-frac", opt.val_frac, "per-domain validation fraction");
  cmd->set_config("--config", "", "key=value configuration file");
}

int cmd_synth(const std::string& out, std::size_t n, const std::vector<double>& thetas,
              std::size_t classes, std::size_t size, std::uint64_t seed) {
  DomainDataset ds = synth_generate(n, thetas, classes, size, seed);
  save_image_dir(out, ds);
  std::printf("wrote %zu domains x %zu samples to %s\n", ds.n_domains(), n, out.c_str());
  return 0;
}

int cmd_train(const RunOptions& opt, long target) {
  DomainDataset ds = load_image_dir(opt.data);
  if (target < 0 || static_cast<std::size_t>(target) >= ds.n_domains())
    throw ConfigError("--target out of range");
  TrainConfig cfg = opt.to_config();
  LodoSplit split = lodo_split(ds, static_cast<std::size_t>(target), opt.val_frac, opt.seed);
  TrainResult r = train_run(ds, split, cfg, opt.out);
  MetricsRow row = score_target(r.best_params, cfg.mask, ds, split.target, opt.seed,
                                cfg.phase2_enabled);
  write_metrics((fs::path(opt.out) / "metrics.csv").string(), {row}, false);
  std::printf("%s: accuracy %s auroc %s recall %s\n", row.target.c_str(), fmt6(row.accuracy).c_str(),
              fmt6(row.auroc).c_str(), fmt6(row.recall).c_str());
  return 0;
}

int cmd_lodo(const RunOptions& opt) {
  DomainDataset ds = load_image_dir(opt.data);
  TrainConfig cfg = opt.to_config();
  std::vector<MetricsRow> rows;
  for (std::size_t target = 0; target < ds.n_domains(); ++target) {
    LodoSplit split = lodo_split(ds, target, opt.val_frac, opt.seed);
    fs::path run_dir = fs::path(opt.out) / ("target_" + ds.domain_names[target]);
    TrainResult r = train_run(ds, split, cfg, run_dir.string());
    rows.push_back(
        score_target(r.best_params, cfg.mask, ds, target, opt.seed, cfg.phase2_enabled));
    std::printf("%s: accuracy %s\n", rows.back().target.c_str(),
                fmt6(rows.back().accuracy).c_str());
  }
  write_metrics((fs::path(opt.out) / "metrics.csv").string(), rows, true);
  return 0;
}

int cmd_ablate(const RunOptions& opt, long target) {
  DomainDataset ds = load_image_dir(opt.data);
  if (target < 0 || static_cast<std::size_t>(target) >= ds.n_domains())
    throw ConfigError("--target out of range");
  TrainConfig cfg = opt.to_config();
  LodoSplit split = lodo_split(ds, static_cast<std::size_t>(target), opt.val_frac, opt.seed);
  fs::create_directories(opt.out);
  std::vector<MetricsRow> rows;
  std::size_t run = 0;
  for (const FeatureMask& mask : ablation_masks()) {
    TrainConfig c = cfg;
    c.mask = mask;
    c.seed = Rng(cfg.seed).derive(run++).next_u64();
    TrainResult r = train_run(ds, split, c);
    rows.push_back(score_target(r.best_params, mask, ds, split.target, opt.seed,
                                c.phase2_enabled));
    std::printf("mask %s: accuracy %s\n", mask.tag().c_str(), fmt6(rows.back().accuracy).c_str());
  }
  write_metrics((fs::path(opt.out) / "ablation.csv").string(), rows, false);
  return 0;
}

int cmd_embed(const std::string& data, const std::string& checkpoint, const std::string& out,
              const std::string& extractor) {
  if (extractor != "alpha" && extractor != "beta" && extractor != "gamma" && extractor != "all")
    throw ConfigError("--extractor must be alpha, beta, gamma or all");
  DomainDataset ds = load_image_dir(data);
  ParamSet params = load_checkpoint(checkpoint);
  FeatureMask mask{!params_with_prefix(params, "alpha.").empty(),
                   !params_with_prefix(params, "beta.").empty(),
                   !params_with_prefix(params, "gamma.").empty()};
  if ((extractor == "alpha" && !mask.use_alpha) || (extractor == "beta" && !mask.use_beta) ||
      (extractor == "gamma" && !mask.use_gamma))
    throw ConfigError("checkpoint has no " + extractor + " extractor");

  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t k = 0; k < ds.n_domains(); ++k)
    for (std::size_t i = 0; i < ds.domains[k].size(); ++i) items.emplace_back(k, i);
  const std::size_t dim = ds.domains[items[0].first][items[0].second].image.size();
  Tensor images({items.size(), dim});
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Tensor& img = ds.domains[items[i].first][items[i].second].image;
    std::copy(img.data.begin(), img.data.end(),
              images.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  FeatureTriple t = encode(params, images, mask);
  Tensor feats;
  if (extractor == "alpha") feats = t.z_alpha;
  else if (extractor == "beta") feats = t.z_beta;
  else if (extractor == "gamma") feats = t.z_gamma;
  else feats = concat_features(params, t, mask);
  Tensor proj = pca_project(feats);

  std::ofstream os(out);
  if (!os) throw Error("cannot write " + out);
  os << "x,y,class,domain,extractor\n";
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Example& ex = ds.domains[items[i].first][items[i].second];
    os << fmt6(proj.at(i, 0)) << "," << fmt6(proj.at(i, 1)) << "," << ds.class_names[ex.y] << ","
       << ds.domain_names[ex.h] << "," << extractor << "\n";
  }
  std::printf("wrote %zu embeddings to %s\n", items.size(), out.c_str());
  return 0;
}

int cmd_report(const std::string& in, const std::string& out) {
  std::ifstream is(in);
  if (!is) throw Error("cannot read " + in);
  std::string line;
  if (!std::getline(is, line) || line != "target,seed,mask,phase2,accuracy,auroc,recall")
    throw ConfigError("unexpected metrics header in " + in);
  struct Group {
    std::vector<double> acc, auroc, recall;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ConfigError("malformed metrics row: " + line);
    if (f[0].rfind("average", 0) == 0) continue;  // skip pre-aggregated rows
    Group& g = groups[{f[2], f[3]}];
    g.acc.push_back(std::stod(f[4]));
    g.auroc.push_back(std::stod(f[5]));
    g.recall.push_back(std::stod(f[6]));
  }
  if (groups.empty()) throw ConfigError("no metric rows in " + in);
  std::ofstream os(out);
  if (!os) throw Error("cannot write " + out);
  os << "mask,phase2,n,accuracy_mean,accuracy_std_pop,auroc_mean,auroc_std_pop,"
        "recall_mean,recall_std_pop\n";
  auto stats = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return std::make_pair(mean, std::sqrt(var));
  };
  for (const auto& [key, g] : groups) {
    auto [am, as] = stats(g.acc);
    auto [um, us] = stats(g.auroc);
    auto [rm, rs] = stats(g.recall);
    os << key.first << "," << key.second << "," << g.acc.size() << "," << fmt6(am) << ","
       << fmt6(as) << "," << fmt6(um) << "," << fmt6(us) << "," << fmt6(rm) << "," << fmt6(rs)
       << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"disentangled-feature LODO training harness"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic stain-shift dataset");
  std::string synth_out;
  std::size_t synth_n = 400, synth_classes = 2, synth_size = 12;
  std::uint64_t synth_seed = 0;
  std::vector<double> synth_thetas = {0.0, 0.01, 0.05, 0.5};
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n", synth_n, "samples per domain");
  synth->add_option("--thetas", synth_thetas, "per-domain stain jitter magnitudes")->delimiter(',');
  synth->add_option("--classes", synth_classes, "number of classes");
  synth->add_option("--size", synth_size, "image side length");
  synth->add_option("--seed", synth_seed, "random seed");

  // train
  auto* train = app.add_subcommand("train", "one leave-one-domain-out run");
  RunOptions train_opt;
  long train_target = 0;
  add_run_options(train, train_opt);
  train->add_option("--target", train_target, "held-out domain index")->required();

  // lodo
  auto* lodo = app.add_subcommand("lodo", "train against every hold-out target");
  RunOptions lodo_opt;
  add_run_options(lodo, lodo_opt);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train the seven extractor-mask configurations");
  RunOptions ablate_opt;
  long ablate_target = 0;
  add_run_options(ablate, ablate_opt);
  ablate->add_option("--target", ablate_target, "held-out domain index")->required();

  // embed
  auto* embed = app.add_subcommand("embed", "export 2-d PCA embeddings from a checkpoint");
  std::string embed_data, embed_ckpt, embed_out, embed_extractor = "all";
  embed->add_option("--data", embed_data, "dataset directory")->required();
  embed->add_option("--checkpoint", embed_ckpt, "checkpoint directory")->required();
  embed->add_option("--out", embed_out, "output CSV path")->required();
  embed->add_option("--extractor", embed_extractor, "alpha | beta | gamma | all");

  // report
  auto* report = app.add_subcommand("report", "aggregate a metrics CSV into mean/std rows");
  std::string report_in, report_out;
  report->add_option("--in", report_in, "metrics CSV to aggregate")->required();
  report->add_option("--out", report_out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help text is a success, anything else is usage
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_n, synth_thetas, synth_classes, synth_size, synth_seed);
    if (train->parsed()) return cmd_train(train_opt, train_target);
    if (lodo->parsed()) return cmd_lodo(lodo_opt);
    if (ablate->parsed()) return cmd_ablate(ablate_opt, ablate_target);
    if (embed->parsed()) return cmd_embed(embed_data, embed_ckpt, embed_out, embed_extractor);
    if (report->parsed()) return cmd_report(report_in, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
