#include "alfa/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alfa {

double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw Error("accuracy: empty or mismatched inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.size());
}

double macro_recall(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                    std::size_t n_classes) {
  if (preds.empty() || preds.size() != labels.size())
    throw Error("macro_recall: empty or mismatched inputs");
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = 0, total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      ++total;
      if (preds[i] == c) ++tp;
    }
    if (total == 0) continue;  // absent classes are excluded from the mean
    sum += static_cast<double>(tp) / static_cast<double>(total);
    ++present;
  }
  if (present == 0) throw Error("macro_recall: no class present in labels");
  return 100.0 * sum / static_cast<double>(present);
}

namespace {

// Binary AUROC from scores and 0/1 positives, midrank tie handling.
double auroc_binary(const std::vector<double>& scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (positive[k]) {
      rank_sum += rank[k];
      ++npos;
    }
  }
  const std::size_t nneg = n - npos;
  const double u = rank_sum - static_cast<double>(npos) * (static_cast<double>(npos) + 1.0) / 2.0;
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

}  // namespace

double auroc_macro(const Tensor& scores, const std::vector<std::size_t>& labels) {
  const std::size_t n = scores.rows(), m = scores.cols();
  if (labels.size() != n || n == 0) throw Error("auroc_macro: empty or mismatched inputs");
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < m; ++c) {
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    std::size_t npos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores.at(i, c);
      pos[i] = labels[i] == c;
      if (pos[i]) ++npos;
    }
    if (npos == 0 || npos == n) continue;
    sum += auroc_binary(s, pos);
    ++counted;
  }
  if (counted == 0) throw Error("auroc_macro: no class with both positives and negatives");
  return 100.0 * sum / static_cast<double>(counted);
}

Tensor pca_project(const Tensor& features, std::size_t out_dim) {
  const std::size_t n = features.rows(), d = features.cols();
  if (n < 3 || d < 2) throw Error("pca_project: need n >= 3 and d >= 2");

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features.at(i, j);
  Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n - 1);
  if (cov.norm() == 0.0) throw Error("pca_project: rank-0 input");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues ascending; take the top min(50, d), keep the leading out_dim
  const std::size_t keep = std::min<std::size_t>({50, d, out_dim});
  Tensor out({n, keep});
  for (std::size_t k = 0; k < keep; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - k));
    // sign convention: largest-magnitude loading positive
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < n; ++i) out.at(i, k) = proj(static_cast<Eigen::Index>(i));
  }
  return out;
}

}  // namespace alfa
