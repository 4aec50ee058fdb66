#pragma once

#include <vector>

#include "alfa/tensor.hpp"

namespace alfa {

// Fraction correct, as a percentage.
double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels);

// Macro-averaged recall over classes present in `labels`, as a percentage.
double macro_recall(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                    std::size_t n_classes);

// One-vs-rest AUROC via the Mann-Whitney rank statistic with midrank ties,
// macro-averaged over classes having both positives and negatives.
double auroc_macro(const Tensor& scores, const std::vector<std::size_t>& labels);

// 2-d PCA projection: mean-center, eigendecompose the covariance, keep the
// two leading components with a deterministic sign convention.
Tensor pca_project(const Tensor& features, std::size_t out_dim = 2);

}  // namespace alfa
