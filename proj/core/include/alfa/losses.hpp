#pragma once

#include <array>
#include <optional>
#include <vector>

#include "alfa/model.hpp"
#include "alfa/tensor.hpp"

namespace alfa {

struct LossWeights {
  std::array<double, 7> a = {1, 1, 1, 1, 1, 1, 1};  // ssl, align, specific, ab, ag, bg, cls
  double margin = 1.5;          // triplet margin M
  double mining_margin = 0.7;   // semi-hard band width
  double tau = 2.0;             // soft-confusion temperature, > 1
  double zeta = 0.9;            // soft-label off-target constant, in (0, 1)
  bool normalize_pc = true;     // divide Eq.-style soft label by 1 + zeta
  bool printed_cov_sign = false;  // reproduce the negated covariance penalty
};

struct LossReport {
  double l_ssl = 0, l_i = 0, l_s = 0, l_ab = 0, l_ag = 0, l_bg = 0, l_c = 0;
  double total = 0;
};

// Forward-path loss terms still attached to the tape. Inactive terms are
// left disengaged (empty optional) and contribute zero to the total.
struct LossTerms {
  std::optional<Tensor> ssl, align, specific, cov_ab, cov_ag, cov_bg, cls;
};

// D_KL(p || q) with q floored at 1e-12 and 0*log0 = 0. Differentiable in
// both arguments.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

// Mean over rows of max(||a-p|| - ||a-n|| + margin, 0).
Tensor ssl_triplet_loss(const Tensor& z_anchor, const Tensor& z_pos, const Tensor& z_neg,
                        double margin);

struct TripletIdx {
  std::size_t anchor, positive, negative;
};

// Semi-hard negative selection: per same-pseudo-class (anchor, positive)
// pair, the nearest negative with d(a,p) < d(a,n) < d(a,p) + margin;
// fallback is the hardest (closest) negative.
std::vector<TripletIdx> mine_semi_hard(const Tensor& z, const std::vector<std::size_t>& pseudo_ids,
                                       double mining_margin);

// Soft class label p_c: 1 at the target class, zeta/(n_c - 1) elsewhere;
// optionally normalized by (1 + zeta) to a proper distribution.
Tensor soft_class_label(std::size_t c, std::size_t n_c, double zeta, bool normalize);

// Tempered class-mean prediction s_c^(k) = softmax(head(mean z) / tau).
// Returns nothing when the (domain, class) slice is empty.
std::optional<Tensor> soft_confusion_row(const Tensor& z_beta, const std::vector<std::size_t>& y,
                                         const std::vector<std::size_t>& h, std::size_t domain,
                                         std::size_t cls, const ParamSet& params, double tau);

// Soft class-domain alignment: symmetric KLs between per-domain confusion
// rows and the soft class label, averaged over countable (pair, class)
// terms. `warned` is set when no term was countable.
Tensor alignment_loss(const Tensor& z_beta, const std::vector<std::size_t>& y,
                      const std::vector<std::size_t>& h, const ParamSet& params,
                      const LossWeights& w, std::size_t n_classes, bool* warned = nullptr);

// Domain-label cross-entropy on the specific head.
Tensor specific_loss(const Tensor& logits_dgamma, const std::vector<std::size_t>& h);

// Frobenius norm of the cross-covariance between two feature blocks.
Tensor cov_loss(const Tensor& z_a, const Tensor& z_b);

// Class-label cross-entropy on the aggregated classifier.
Tensor classification_loss(const Tensor& logits_dc, const std::vector<std::size_t>& y);

// Weighted aggregation; returns the tracked total and fills `report`.
Tensor total_loss(const LossTerms& terms, const LossWeights& w, LossReport& report);

}  // namespace alfa
