#include "alfa/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "alfa/rng.hpp"

namespace fs = std::filesystem;

namespace alfa {

std::string FeatureMask::tag() const {
  std::string s;
  if (use_alpha) s += "a";
  if (use_beta) s += "b";
  if (use_gamma) s += "g";
  return s.empty() ? "-" : s;
}

namespace {

Tensor he_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor w({fan_in, fan_out});
  for (auto& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

void add_mlp(ParamSet& ps, const std::string& prefix, const EncoderConfig& cfg, Rng& rng) {
  std::vector<std::size_t> widths;
  widths.push_back(cfg.input_dim);
  for (std::size_t h : cfg.hidden) widths.push_back(h);
  widths.push_back(cfg.embed_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    ps.insert(prefix + ".W" + std::to_string(l), he_uniform(widths[l], widths[l + 1], rng));
    ps.insert(prefix + ".b" + std::to_string(l), Tensor({1, widths[l + 1]}));
  }
}

void add_linear(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng) {
  ps.insert(prefix + ".W", he_uniform(in, out, rng));
  ps.insert(prefix + ".b", Tensor({1, out}));
}

void add_layer_norm(ParamSet& ps, const std::string& site, std::size_t d) {
  ps.insert("ln." + site + ".gain", Tensor({1, d}, 1.0));
  ps.insert("ln." + site + ".bias", Tensor({1, d}));
}

}  // namespace

ParamSet init_model(const EncoderConfig& cfg, std::size_t n_classes, std::size_t n_domains,
                    const FeatureMask& mask, std::uint64_t seed) {
  if (mask.active_count() == 0) throw Error("init_model: at least one extractor must be active");
  if (cfg.input_dim == 0) throw Error("init_model: input_dim not set");
  ParamSet ps;
  Rng rng(seed);
  Rng r_alpha = rng.derive(1), r_beta = rng.derive(2), r_gamma = rng.derive(3);
  Rng r_heads = rng.derive(4);
  if (mask.use_alpha) {
    add_mlp(ps, "alpha", cfg, r_alpha);
    add_layer_norm(ps, "alpha", cfg.embed_dim);
  }
  if (mask.use_beta) {
    add_mlp(ps, "beta", cfg, r_beta);
    add_layer_norm(ps, "beta", cfg.embed_dim);
    add_linear(ps, "dbeta", cfg.embed_dim, n_classes, r_heads);
  }
  if (mask.use_gamma) {
    add_mlp(ps, "gamma", cfg, r_gamma);
    add_layer_norm(ps, "gamma", cfg.embed_dim);
    add_linear(ps, "dgamma", cfg.embed_dim, n_domains, r_heads);
  }
  add_linear(ps, "dc", mask.active_count() * cfg.embed_dim, n_classes, r_heads);
  return ps;
}

Tensor encode_one(const ParamSet& params, const std::string& prefix, const Tensor& images) {
  Tensor x = images;
  for (std::size_t l = 0;; ++l) {
    const std::string wname = prefix + ".W" + std::to_string(l);
    if (!params.contains(wname)) break;
    const Tensor& w = params.at(wname);
    if (l == 0 && x.cols() != w.rows())
      throw ShapeError("encode: input width " + std::to_string(x.cols()) +
                       " does not match " + prefix + " input size " + std::to_string(w.rows()));
    x = add_bcast_row(matmul(x, w), params.at(prefix + ".b" + std::to_string(l)));
    if (params.contains(prefix + ".W" + std::to_string(l + 1))) x = relu(x);
  }
  return x;
}

FeatureTriple encode(const ParamSet& params, const Tensor& images, const FeatureMask& mask) {
  FeatureTriple t;
  if (mask.use_alpha) t.z_alpha = encode_one(params, "alpha", images);
  if (mask.use_beta) t.z_beta = encode_one(params, "beta", images);
  if (mask.use_gamma) t.z_gamma = encode_one(params, "gamma", images);
  return t;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Tensor centered = sub_bcast_col(x, mean_axis1(x));
  Tensor var = mean_axis1(mul(centered, centered));
  Tensor denom = sqrt(add_scalar(var, eps));
  Tensor normed = div_bcast_col(centered, denom);
  return add_bcast_row(mul_bcast_row(normed, gain), bias);
}

Tensor concat_features(const ParamSet& params, const FeatureTriple& t, const FeatureMask& mask) {
  std::vector<Tensor> parts;
  if (mask.use_alpha)
    parts.push_back(layer_norm(t.z_alpha, params.at("ln.alpha.gain"), params.at("ln.alpha.bias")));
  if (mask.use_beta)
    parts.push_back(layer_norm(t.z_beta, params.at("ln.beta.gain"), params.at("ln.beta.bias")));
  if (mask.use_gamma)
    parts.push_back(layer_norm(t.z_gamma, params.at("ln.gamma.gain"), params.at("ln.gamma.bias")));
  if (parts.empty()) throw Error("concat_features: all extractors masked out");
  return concat_cols(parts);
}

HeadLogits heads(const ParamSet& params, const FeatureTriple& t, const FeatureMask& mask) {
  HeadLogits out;
  if (mask.use_beta)
    out.invariant = add_bcast_row(matmul(t.z_beta, params.at("dbeta.W")), params.at("dbeta.b"));
  if (mask.use_gamma)
    out.specific = add_bcast_row(matmul(t.z_gamma, params.at("dgamma.W")), params.at("dgamma.b"));
  Tensor cat = concat_features(params, t, mask);
  const Tensor& w = params.at("dc.W");
  if (cat.cols() != w.rows())
    throw ShapeError("heads: concatenation width " + std::to_string(cat.cols()) +
                     " does not match classifier input " + std::to_string(w.rows()));
  out.classifier = add_bcast_row(matmul(cat, w), params.at("dc.b"));
  return out;
}

void save_checkpoint(const std::string& dir, const ParamSet& params) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw Error("cannot write checkpoint manifest in " + dir);
  for (const auto& [name, t] : params.tensors) {
    manifest << name;
    for (std::size_t e : t.shape) manifest << " " << e;
    manifest << "\n";
    save_tensor((fs::path(dir) / (name + ".alfa")).string(), t);
  }
}

ParamSet load_checkpoint(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw Error("missing checkpoint manifest in " + dir);
  ParamSet ps;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name;
    is >> name;
    Tensor t = load_tensor((fs::path(dir) / (name + ".alfa")).string());
    ps.insert(name, std::move(t));
  }
  return ps;
}

std::vector<std::string> params_with_prefix(const ParamSet& params, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& [name, _] : params.tensors)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

}  // namespace alfa
