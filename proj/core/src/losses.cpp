#include "alfa/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace alfa {

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.size() != q.size())
    throw ShapeError("kl_divergence: length mismatch " + p.shape_str() + " vs " + q.shape_str());
  // p * (log p - log q); the clamp inside log keeps 0*log0 at 0.
  return sum_all(mul(p, sub(log_clamped(p), log_clamped(q))));
}

Tensor ssl_triplet_loss(const Tensor& z_anchor, const Tensor& z_pos, const Tensor& z_neg,
                        double margin) {
  if (z_anchor.shape != z_pos.shape || z_anchor.shape != z_neg.shape)
    throw ShapeError("ssl_triplet_loss: shape mismatch");
  Tensor d_pos = rowwise_l2norm(sub(z_anchor, z_pos));
  Tensor d_neg = rowwise_l2norm(sub(z_anchor, z_neg));
  return mean_all(relu(add_scalar(sub(d_pos, d_neg), margin)));
}

std::vector<TripletIdx> mine_semi_hard(const Tensor& z, const std::vector<std::size_t>& pseudo_ids,
                                       double mining_margin) {
  const std::size_t n = z.rows(), d = z.cols();
  if (pseudo_ids.size() != n) throw Error("mine_semi_hard: id count != row count");
  std::set<std::size_t> distinct(pseudo_ids.begin(), pseudo_ids.end());
  if (distinct.size() < 2) throw Error("mine_semi_hard: need >= 2 pseudo-classes");

  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = z.data[i * d + k] - z.data[j * d + k];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  std::vector<TripletIdx> out;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (a == p || pseudo_ids[a] != pseudo_ids[p]) continue;
      const double dp = dist(a, p);
      std::size_t best_band = n, best_hard = n;
      double best_band_d = std::numeric_limits<double>::infinity();
      double best_hard_d = std::numeric_limits<double>::infinity();
      for (std::size_t neg = 0; neg < n; ++neg) {
        if (pseudo_ids[neg] == pseudo_ids[a]) continue;
        const double dn = dist(a, neg);
        if (dn > dp && dn < dp + mining_margin && dn < best_band_d) {
          best_band_d = dn;
          best_band = neg;
        }
        if (dn < best_hard_d) {
          best_hard_d = dn;
          best_hard = neg;
        }
      }
      const std::size_t chosen = best_band < n ? best_band : best_hard;
      if (chosen < n) out.push_back({a, p, chosen});
    }
  }
  return out;
}

Tensor soft_class_label(std::size_t c, std::size_t n_c, double zeta, bool normalize) {
  if (n_c < 2) throw Error("soft_class_label: need >= 2 classes");
  if (c >= n_c) throw Error("soft_class_label: class index out of range");
  Tensor p({1, n_c}, zeta / static_cast<double>(n_c - 1));
  p.data[c] = 1.0;
  if (normalize)
    for (auto& v : p.data) v /= (1.0 + zeta);
  return p;
}

std::optional<Tensor> soft_confusion_row(const Tensor& z_beta, const std::vector<std::size_t>& y,
                                         const std::vector<std::size_t>& h, std::size_t domain,
                                         std::size_t cls, const ParamSet& params, double tau) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (h[i] == domain && y[i] == cls) idx.push_back(i);
  if (idx.empty()) return std::nullopt;
  Tensor mean = mean_axis0(take_rows(z_beta, idx));
  Tensor logits = add_bcast_row(matmul(mean, params.at("dbeta.W")), params.at("dbeta.b"));
  return softmax_rows(scale(logits, 1.0 / tau));
}

Tensor alignment_loss(const Tensor& z_beta, const std::vector<std::size_t>& y,
                      const std::vector<std::size_t>& h, const ParamSet& params,
                      const LossWeights& w, std::size_t n_classes, bool* warned) {
  std::set<std::size_t> doms(h.begin(), h.end());
  if (doms.size() < 2) throw Error("alignment_loss: batch must span >= 2 source domains");
  if (warned) *warned = false;

  std::vector<std::size_t> domains(doms.begin(), doms.end());
  // rows[d][c]
  std::vector<std::vector<std::optional<Tensor>>> rows(domains.size());
  for (std::size_t di = 0; di < domains.size(); ++di) {
    rows[di].resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c)
      rows[di][c] = soft_confusion_row(z_beta, y, h, domains[di], c, params, w.tau);
  }

  std::optional<Tensor> acc;
  std::size_t count = 0;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    for (std::size_t j = i + 1; j < domains.size(); ++j) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        if (!rows[i][c] || !rows[j][c]) continue;
        const Tensor& s1 = *rows[i][c];
        const Tensor& s2 = *rows[j][c];
        Tensor pc = soft_class_label(c, n_classes, w.zeta, w.normalize_pc);
        Tensor term = add(add(kl_divergence(s1, s2), kl_divergence(s2, s1)),
                          add(add(kl_divergence(pc, s2), kl_divergence(s2, pc)),
                              add(kl_divergence(s1, pc), kl_divergence(pc, s1))));
        term = scale(term, 1.0 / 6.0);
        acc = acc ? add(*acc, term) : term;
        ++count;
      }
    }
  }
  if (count == 0) {
    if (warned) *warned = true;
    return Tensor::scalar(0.0);
  }
  return scale(*acc, 1.0 / static_cast<double>(count));
}

Tensor specific_loss(const Tensor& logits_dgamma, const std::vector<std::size_t>& h) {
  return cross_entropy(logits_dgamma, h);
}

Tensor cov_loss(const Tensor& z_a, const Tensor& z_b) {
  if (z_a.rows() != z_b.rows()) throw ShapeError("cov_loss: batch size mismatch");
  const std::size_t n = z_a.rows();
  if (n < 2) throw Error("cov_loss: need batch >= 2");
  Tensor ca = sub_bcast_row(z_a, mean_axis0(z_a));
  Tensor cb = sub_bcast_row(z_b, mean_axis0(z_b));
  Tensor cov = scale(matmul(transpose(ca), cb), 1.0 / static_cast<double>(n - 1));
  return frobenius_norm(cov);
}

Tensor classification_loss(const Tensor& logits_dc, const std::vector<std::size_t>& y) {
  return cross_entropy(logits_dc, y);
}

Tensor total_loss(const LossTerms& terms, const LossWeights& w, LossReport& report) {
  const double cov_sign = w.printed_cov_sign ? -1.0 : 1.0;
  report = LossReport{};
  std::optional<Tensor> total;
  auto accumulate = [&](const std::optional<Tensor>& t, double coeff, double& slot) {
    if (!t) return;
    slot = t->value();
    Tensor weighted = scale(*t, coeff);
    total = total ? add(*total, weighted) : weighted;
  };
  accumulate(terms.ssl, w.a[0], report.l_ssl);
  accumulate(terms.align, w.a[1], report.l_i);
  accumulate(terms.specific, w.a[2], report.l_s);
  accumulate(terms.cov_ab, w.a[3] * cov_sign, report.l_ab);
  accumulate(terms.cov_ag, w.a[4] * cov_sign, report.l_ag);
  accumulate(terms.cov_bg, w.a[5] * cov_sign, report.l_bg);
  accumulate(terms.cls, w.a[6], report.l_c);
  Tensor result = total ? *total : Tensor::scalar(0.0);
  report.total = result.value();
  return result;
}

}  // namespace alfa
