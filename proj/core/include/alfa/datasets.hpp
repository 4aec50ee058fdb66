#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alfa/tensor.hpp"

namespace alfa {

struct Example {
  Tensor image;       // {3,H,W}
  std::size_t y = 0;  // class index
  std::size_t h = 0;  // domain index
};

struct DomainDataset {
  std::vector<std::vector<Example>> domains;  // indexed by h
  std::size_t n_classes = 0;
  std::vector<std::string> domain_names;
  std::vector<std::string> class_names;

  std::size_t n_domains() const { return domains.size(); }
};

struct LodoSplit {
  std::size_t target = 0;
  std::vector<std::size_t> sources;
  // Per source domain: indices into ds.domains[k].
  std::vector<std::vector<std::size_t>> train;  // indexed by domain id
  std::vector<std::vector<std::size_t>> val;
  double val_frac = 0.2;
};

struct MetaSplit {
  // Per source domain: disjoint partitions of that domain's train indices.
  std::vector<std::vector<std::size_t>> meta_train;  // indexed by domain id
  std::vector<std::vector<std::size_t>> meta_test;
};

// Procedural stain-shift benchmark: class identity is carried by shape
// statistics (blob count / eccentricity), domain identity only by the HED
// jitter magnitude applied at generation time.
DomainDataset synth_generate(std::size_t n_per_domain, const std::vector<double>& thetas,
                             std::size_t n_classes, std::size_t image_size, std::uint64_t seed);

LodoSplit lodo_split(const DomainDataset& ds, std::size_t target, double val_frac,
                     std::uint64_t seed);

MetaSplit meta_split(const DomainDataset& ds, const LodoSplit& split, double frac_tr,
                     std::uint64_t seed);

// Layout: root/<domain>/<class>/<file>.alfa (binary tensor format).
DomainDataset load_image_dir(const std::string& root);
void save_image_dir(const std::string& root, const DomainDataset& ds);

struct BatchRef {
  std::vector<std::pair<std::size_t, std::size_t>> items;  // (domain, index-in-domain)
};

// Epoch-reshuffled batches over the split's train indices. When stratified,
// per-batch counts are near-equal across source domains.
std::vector<BatchRef> batch_iter(const DomainDataset& ds, const LodoSplit& split,
                                 std::size_t batch, std::uint64_t seed, std::size_t epoch,
                                 bool stratify_by_domain);

}  // namespace alfa
