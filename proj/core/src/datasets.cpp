#include "alfa/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "alfa/augment.hpp"
#include "alfa/rng.hpp"

namespace fs = std::filesystem;

namespace alfa {

namespace {

// Smooth value-noise plane in [0,1]: coarse grid, bilinear upsample.
std::vector<double> smooth_noise(std::size_t size, Rng& rng) {
  const std::size_t g = std::max<std::size_t>(2, size / 4);
  std::vector<double> grid((g + 1) * (g + 1));
  for (auto& v : grid) v = rng.uniform();
  std::vector<double> out(size * size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double gy = static_cast<double>(r) / static_cast<double>(size) * g;
      const double gx = static_cast<double>(c) / static_cast<double>(size) * g;
      const std::size_t y0 = static_cast<std::size_t>(gy), x0 = static_cast<std::size_t>(gx);
      const double fy = gy - y0, fx = gx - x0;
      const double v = grid[y0 * (g + 1) + x0] * (1 - fx) * (1 - fy) +
                       grid[y0 * (g + 1) + x0 + 1] * fx * (1 - fy) +
                       grid[(y0 + 1) * (g + 1) + x0] * (1 - fx) * fy +
                       grid[(y0 + 1) * (g + 1) + x0 + 1] * fx * fy;
      out[r * size + c] = v;
    }
  }
  return out;
}

// Class identity = blob count and eccentricity; stain is left to the domain
// jitter so that domain is never a class cue.
Tensor draw_base_image(std::size_t cls, std::size_t size, Rng& rng) {
  Tensor img({3, size, size});
  const double bg[3] = {0.88, 0.72, 0.82};   // eosin-like background
  const double fg[3] = {0.38, 0.26, 0.56};   // hematoxylin-like blobs
  const std::vector<double> tex = smooth_noise(size, rng);
  const std::size_t hw = size * size;
  for (std::size_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch)
      img.data[ch * hw + p] = std::min(1.0, std::max(0.0, bg[ch] + 0.08 * (tex[p] - 0.5)));

  const std::size_t n_blobs = cls + 1;
  const double ecc = 1.0 + 0.6 * static_cast<double>(cls);
  for (std::size_t b = 0; b < n_blobs; ++b) {
    const double s = static_cast<double>(size);
    const double cx = rng.uniform(0.2 * s, 0.8 * s);
    const double cy = rng.uniform(0.2 * s, 0.8 * s);
    // area-preserving stretch: count drives stained mass, ecc only shape
    const double r0 = rng.uniform(s / 6.0, s / 5.0);
    const double rx = r0 * std::sqrt(ecc);
    const double ry = r0 / std::sqrt(ecc) * rng.uniform(0.9, 1.1);
    const double ang = rng.uniform(0.0, 3.14159265358979323846);
    const double ca = std::cos(ang), sa = std::sin(ang);
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double x = static_cast<double>(c) - cx, y = static_cast<double>(r) - cy;
        const double u = (ca * x + sa * y) / rx;
        const double v = (-sa * x + ca * y) / ry;
        const double d = u * u + v * v;
        if (d < 1.44) {
          const double alpha = d < 1.0 ? 1.0 : (1.44 - d) / 0.44;  // soft rim
          for (int ch = 0; ch < 3; ++ch) {
            double& px = img.data[static_cast<std::size_t>(ch) * hw + r * size + c];
            px = std::min(1.0, std::max(0.0, px * (1.0 - alpha) + fg[ch] * alpha));
          }
        }
      }
    }
  }
  return img;
}

std::vector<std::vector<std::size_t>> group_by_class(const std::vector<Example>& dom,
                                                     const std::vector<std::size_t>& indices,
                                                     std::size_t n_classes) {
  std::vector<std::vector<std::size_t>> groups(n_classes);
  for (std::size_t i : indices) groups[dom[i].y].push_back(i);
  return groups;
}

}  // namespace

DomainDataset synth_generate(std::size_t n_per_domain, const std::vector<double>& thetas,
                             std::size_t n_classes, std::size_t image_size, std::uint64_t seed) {
  if (image_size < 8) throw Error("synth_generate: image_size must be >= 8");
  if (n_classes < 2) throw Error("synth_generate: need >= 2 classes");
  if (thetas.empty()) throw Error("synth_generate: need >= 1 domain theta");
  std::set<double> distinct(thetas.begin(), thetas.end());
  if (distinct.size() != thetas.size()) throw Error("synth_generate: thetas must be distinct");

  DomainDataset ds;
  ds.n_classes = n_classes;
  Rng root(seed);
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    Rng dom_rng = root.derive(k);
    std::vector<Example> dom;
    dom.reserve(n_per_domain);
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      Example ex;
      ex.y = i % n_classes;  // balanced within +-1
      ex.h = k;
      Rng img_rng = dom_rng.derive(i);
      ex.image = draw_base_image(ex.y, image_size, img_rng);
      ex.image = hed_jitter(ex.image, thetas[k], img_rng);
      dom.push_back(std::move(ex));
    }
    ds.domains.push_back(std::move(dom));
    ds.domain_names.push_back("theta=" + std::to_string(thetas[k]));
  }
  for (std::size_t c = 0; c < n_classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
  return ds;
}

LodoSplit lodo_split(const DomainDataset& ds, std::size_t target, double val_frac,
                     std::uint64_t seed) {
  if (target >= ds.n_domains()) throw Error("lodo_split: target domain out of range");
  if (ds.n_domains() < 2) throw Error("lodo_split: need >= 2 domains (no sources left)");
  if (!(val_frac > 0.0 && val_frac < 0.5)) throw Error("lodo_split: val_frac must be in (0, 0.5)");
  LodoSplit split;
  split.target = target;
  split.val_frac = val_frac;
  split.train.resize(ds.n_domains());
  split.val.resize(ds.n_domains());
  Rng rng(seed);
  for (std::size_t k = 0; k < ds.n_domains(); ++k) {
    Rng krng = rng.derive(k);
    if (k == target) continue;
    split.sources.push_back(k);
    std::vector<std::size_t> all(ds.domains[k].size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto groups = group_by_class(ds.domains[k], all, ds.n_classes);
    for (auto& g : groups) {
      krng.shuffle(g);
      const std::size_t nval =
          static_cast<std::size_t>(std::lround(val_frac * static_cast<double>(g.size())));
      for (std::size_t i = 0; i < g.size(); ++i)
        (i < nval ? split.val[k] : split.train[k]).push_back(g[i]);
    }
    std::sort(split.train[k].begin(), split.train[k].end());
    std::sort(split.val[k].begin(), split.val[k].end());
  }
  return split;
}

MetaSplit meta_split(const DomainDataset& ds, const LodoSplit& split, double frac_tr,
                     std::uint64_t seed) {
  if (!(frac_tr > 0.0 && frac_tr < 1.0)) throw Error("meta_split: frac_tr must be in (0, 1)");
  MetaSplit ms;
  ms.meta_train.resize(ds.n_domains());
  ms.meta_test.resize(ds.n_domains());
  Rng rng(seed);
  for (std::size_t k : split.sources) {
    Rng krng = rng.derive(k);
    auto groups = group_by_class(ds.domains[k], split.train[k], ds.n_classes);
    for (auto& g : groups) {
      if (g.size() < 2)
        throw Error("meta_split: domain " + std::to_string(k) +
                    " has < 2 training examples of some class");
      krng.shuffle(g);
      const std::size_t ntr = std::max<std::size_t>(
          1, std::min(g.size() - 1, static_cast<std::size_t>(std::lround(
                                        frac_tr * static_cast<double>(g.size())))));
      for (std::size_t i = 0; i < g.size(); ++i)
        (i < ntr ? ms.meta_train[k] : ms.meta_test[k]).push_back(g[i]);
    }
  }
  return ms;
}

void save_image_dir(const std::string& root, const DomainDataset& ds) {
  for (std::size_t k = 0; k < ds.n_domains(); ++k) {
    for (std::size_t i = 0; i < ds.domains[k].size(); ++i) {
      const Example& ex = ds.domains[k][i];
      fs::path dir = fs::path(root) / ds.domain_names[k] / ds.class_names[ex.y];
      fs::create_directories(dir);
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu.alfa", i);
      save_tensor((dir / name).string(), ex.image);
    }
  }
}

DomainDataset load_image_dir(const std::string& root) {
  if (!fs::is_directory(root)) throw Error("load_image_dir: not a directory: " + root);
  std::vector<std::string> domain_names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) domain_names.push_back(e.path().filename().string());
  std::sort(domain_names.begin(), domain_names.end());
  if (domain_names.empty()) throw Error("load_image_dir: no domain directories under " + root);

  DomainDataset ds;
  ds.domain_names = domain_names;
  std::vector<std::string> class_names;
  for (std::size_t k = 0; k < domain_names.size(); ++k) {
    const fs::path dpath = fs::path(root) / domain_names[k];
    std::vector<std::string> classes;
    for (const auto& e : fs::directory_iterator(dpath))
      if (e.is_directory()) classes.push_back(e.path().filename().string());
    std::sort(classes.begin(), classes.end());
    if (k == 0) {
      class_names = classes;
      if (class_names.empty())
        throw Error("load_image_dir: no class directories in domain " + domain_names[k]);
    } else if (classes != class_names) {
      throw Error("load_image_dir: inconsistent class set in domain " + domain_names[k]);
    }
    std::vector<Example> dom;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(dpath / classes[c]))
        if (e.path().extension() == ".alfa") files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        Example ex;
        try {
          ex.image = load_tensor(f);
        } catch (const Error& err) {
          throw Error("load_image_dir: malformed file " + f + ": " + err.what());
        }
        ex.y = c;
        ex.h = k;
        dom.push_back(std::move(ex));
      }
    }
    ds.domains.push_back(std::move(dom));
  }
  ds.class_names = class_names;
  ds.n_classes = class_names.size();
  return ds;
}

std::vector<BatchRef> batch_iter(const DomainDataset& ds, const LodoSplit& split,
                                 std::size_t batch, std::uint64_t seed, std::size_t epoch,
                                 bool stratify_by_domain) {
  if (stratify_by_domain && batch < 2)
    throw Error("batch_iter: stratified batches need batch >= 2");
  Rng rng = Rng(seed).derive(epoch);
  std::vector<BatchRef> out;
  if (stratify_by_domain) {
    std::vector<std::vector<std::size_t>> queues;
    for (std::size_t k : split.sources) {
      auto q = split.train[k];
      rng.derive(k).shuffle(q);
      queues.push_back(std::move(q));
    }
    std::vector<std::size_t> pos(queues.size(), 0);
    bool remaining = true;
    while (remaining) {
      BatchRef b;
      std::size_t d = 0;
      while (b.items.size() < batch) {
        bool took = false;
        for (std::size_t tries = 0; tries < queues.size(); ++tries) {
          const std::size_t k = (d + tries) % queues.size();
          if (pos[k] < queues[k].size()) {
            b.items.emplace_back(split.sources[k], queues[k][pos[k]++]);
            d = k + 1;
            took = true;
            break;
          }
        }
        if (!took) break;
      }
      remaining = false;
      for (std::size_t k = 0; k < queues.size(); ++k)
        if (pos[k] < queues[k].size()) remaining = true;
      if (!b.items.empty()) out.push_back(std::move(b));
    }
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> flat;
    for (std::size_t k : split.sources)
      for (std::size_t i : split.train[k]) flat.emplace_back(k, i);
    rng.shuffle(flat);
    for (std::size_t off = 0; off < flat.size(); off += batch) {
      BatchRef b;
      for (std::size_t i = off; i < std::min(off + batch, flat.size()); ++i)
        b.items.push_back(flat[i]);
      out.push_back(std::move(b));
    }
  }
  return out;
}

}  // namespace alfa
