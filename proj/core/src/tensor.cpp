#include "alfa/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace alfa {

namespace {

constexpr double kLogFloor = 1e-12;

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw Error(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

Tape* resolve_tape(const Tensor& a, const Tensor& b) {
  if (a.tape && b.tape && a.tape != b.tape) {
    throw Error("operands belong to different tapes");
  }
  return a.tape ? a.tape : b.tape;
}

void require(bool cond, const char* op, const Tensor& a, const Tensor& b) {
  if (!cond) {
    throw ShapeError(std::string("shape mismatch in '") + op + "': " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

void require(bool cond, const char* op, const Tensor& a) {
  if (!cond) {
    throw ShapeError(std::string("shape mismatch in '") + op + "': " + a.shape_str());
  }
}

// Registers the output on the tape and pushes the backward record.
void record(Tensor& out, Tape* tape, std::function<void(Tape&, int)> back) {
  if (!tape) return;
  out.tape = tape;
  out.node = tape->fresh_node(out.size());
  tape->push_record(out.node, std::move(back));
}

void axpy(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shp, double fill) : shape(std::move(shp)) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("zero extent in tensor shape");
    n *= e;
  }
  data.assign(n, fill);
}

Tensor::Tensor(std::vector<std::size_t> shp, std::vector<double> vals)
    : shape(std::move(shp)), data(std::move(vals)) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  if (n != data.size()) throw ShapeError("shape/data length mismatch in tensor constructor");
}

Tensor Tensor::row(std::vector<double> vals) {
  std::size_t n = vals.size();
  return Tensor({1, n}, std::move(vals));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> vals) {
  return Tensor({r, c}, std::move(vals));
}

double Tensor::value() const {
  if (!is_scalar()) throw ShapeError("value() on non-scalar tensor " + shape_str());
  return data[0];
}

std::size_t Tensor::rows() const {
  if (rank() <= 1) return 1;
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() == 0) return size();
  if (rank() == 1) return shape[0];
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
  return c;
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

Tensor Tensor::detached() const {
  Tensor t;
  t.shape = shape;
  t.data = data;
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---- Tape ----

int Tape::fresh_node(std::size_t n) {
  sizes_.push_back(n);
  grads_.emplace_back();
  return static_cast<int>(sizes_.size()) - 1;
}

Tensor Tape::track(const Tensor& t) {
  Tensor out = t.detached();
  out.tape = this;
  out.node = fresh_node(out.size());
  return out;
}

void Tape::backward(const Tensor& root) {
  if (!root.tracked() || root.tape != this) throw Error("backward: root is not tracked on this tape");
  if (!root.is_scalar()) throw Error("backward: root must be scalar, got " + root.shape_str());
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    grads_[i].assign(sizes_[i], 0.0);
  }
  grads_[static_cast<std::size_t>(root.node)][0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->fn(*this, it->node);
  }
}

bool Tape::has_grad(const Tensor& t) const {
  return t.tape == this && t.node >= 0 &&
         static_cast<std::size_t>(t.node) < grads_.size() &&
         !grads_[static_cast<std::size_t>(t.node)].empty();
}

Tensor Tape::grad_tensor(const Tensor& t) const {
  if (!has_grad(t)) throw Error("no gradient recorded for tensor");
  return Tensor(t.shape, grads_[static_cast<std::size_t>(t.node)]);
}

void Tape::reset() {
  records_.clear();
  grads_.clear();
  sizes_.clear();
}

// ---- elementwise binary ----

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "add", a, b);
  Tape* tape = resolve_tape(a, b);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  check_finite(out, "add");
  record(out, tape, [an = a.node, bn = b.node](Tape& t, int on) {
    const auto& g = t.grad_buf(on);
    if (an >= 0) axpy(t.grad_buf(an), g);
    if (bn >= 0) axpy(t.grad_buf(bn), g);
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "sub", a, b);
  Tape* tape = resolve_tape(a, b);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  check_finite(out, "sub");
  record(out, tape, [an = a.node, bn = b.node](Tape& t, int on) {
    const auto& g = t.grad_buf(on);
    if (an >= 0) axpy(t.grad_buf(an), g);
    if (bn >= 0) {
      auto& gb = t.grad_buf(bn);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "mul", a, b);
  Tape* tape = resolve_tape(a, b);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  check_finite(out, "mul");
  record(out, tape, [an = a.node, bn = b.node, av = a.data, bv = b.data](Tape& t, int on) {
    const auto& g = t.grad_buf(on);
    if (an >= 0) {
      auto& ga = t.grad_buf(an);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (bn >= 0) {
      auto& gb = t.grad_buf(bn);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * s;
  check_finite(out, "scale");
  record(out, a.tape, [an = a.node, s](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * s;
  });
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + s;
  check_finite(out, "add_scalar");
  record(out, a.tape, [an = a.node](Tape& t, int on) {
    if (an >= 0) axpy(t.grad_buf(an), t.grad_buf(on));
  });
  return out;
}

// ---- matmul / transpose ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2, "matmul", a);
  require(b.rank() == 2, "matmul", b);
  require(a.shape[1] == b.shape[0], "matmul", a, b);
  Tape* tape = resolve_tape(a, b);
  const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
  Tensor out({n, m});
  ConstMatMap A(a.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  ConstMatMap B(b.data.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  MatMap O(out.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  O.noalias() = A * B;
  check_finite(out, "matmul");
  record(out, tape,
         [an = a.node, bn = b.node, av = a.data, bv = b.data, n, k, m](Tape& t, int on) {
           ConstMatMap G(t.grad_buf(on).data(), static_cast<Eigen::Index>(n),
                         static_cast<Eigen::Index>(m));
           if (an >= 0) {
             ConstMatMap B(bv.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
             MatMap GA(t.grad_buf(an).data(), static_cast<Eigen::Index>(n),
                       static_cast<Eigen::Index>(k));
             GA.noalias() += G * B.transpose();
           }
           if (bn >= 0) {
             ConstMatMap A(av.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
             MatMap GB(t.grad_buf(bn).data(), static_cast<Eigen::Index>(k),
                       static_cast<Eigen::Index>(m));
             GB.noalias() += A.transpose() * G;
           }
         });
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose", a);
  const std::size_t n = a.shape[0], m = a.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[j * n + i] = a.data[i * m + j];
  record(out, a.tape, [an = a.node, n, m](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j * n + i];
  });
  return out;
}

// ---- elementwise unary ----

Tensor relu(const Tensor& a) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] > 0.0 ? a.data[i] : 0.0;
  record(out, a.tape, [an = a.node, av = a.data](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];  // subgradient at 0 is 0
  });
  return out;
}

Tensor log_clamped(const Tensor& a) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data[i] = std::log(a.data[i] > kLogFloor ? a.data[i] : kLogFloor);
  check_finite(out, "log");
  record(out, a.tape, [an = a.node, av = a.data](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += g[i] / (av[i] > kLogFloor ? av[i] : kLogFloor);
  });
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = std::exp(a.data[i]);
  check_finite(out, "exp");
  record(out, a.tape, [an = a.node, ov = out.data](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * ov[i];
  });
  return out;
}

Tensor sqrt(const Tensor& a) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = std::sqrt(a.data[i]);
  check_finite(out, "sqrt");
  record(out, a.tape, [an = a.node, ov = out.data](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (ov[i] > 0.0) ga[i] += g[i] / (2.0 * ov[i]);
  });
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out(a.shape);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, a.data[i * m + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(a.data[i * m + j] - mx);
    for (std::size_t j = 0; j < m; ++j)
      out.data[i * m + j] = std::exp(a.data[i * m + j] - mx) / denom;
  }
  check_finite(out, "softmax");
  record(out, a.tape, [an = a.node, ov = out.data, n, m](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * ov[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        ga[i * m + j] += ov[i * m + j] * (g[i * m + j] - dot);
    }
  });
  return out;
}

// ---- reductions ----

Tensor sum_all(const Tensor& a) {
  double s = std::accumulate(a.data.begin(), a.data.end(), 0.0);
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  record(out, a.tape, [an = a.node](Tape& t, int on) {
    if (an < 0) return;
    const double g = t.grad_buf(on)[0];
    for (auto& v : t.grad_buf(an)) v += g;
  });
  return out;
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_axis0(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({1, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[j] += a.data[i * m + j];
  check_finite(out, "sum_axis0");
  record(out, a.tape, [an = a.node, n, m](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j];
  });
  return out;
}

Tensor mean_axis0(const Tensor& a) {
  return scale(sum_axis0(a), 1.0 / static_cast<double>(a.rows()));
}

Tensor mean_axis1(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a.data[i * m + j];
    out.data[i] = s / static_cast<double>(m);
  }
  check_finite(out, "mean_axis1");
  record(out, a.tape, [an = a.node, n, m](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i] / static_cast<double>(m);
  });
  return out;
}

Tensor rowwise_l2norm(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a.data[i * m + j] * a.data[i * m + j];
    out.data[i] = std::sqrt(s);
  }
  check_finite(out, "rowwise_l2norm");
  record(out, a.tape, [an = a.node, av = a.data, ov = out.data, n, m](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < n; ++i) {
      if (ov[i] == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i] * av[i * m + j] / ov[i];
    }
  });
  return out;
}

Tensor frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  Tensor out = Tensor::scalar(std::sqrt(s));
  check_finite(out, "frobenius_norm");
  record(out, a.tape, [an = a.node, av = a.data, nv = out.data[0]](Tape& t, int on) {
    if (an < 0 || nv == 0.0) return;
    const double g = t.grad_buf(on)[0];
    auto& ga = t.grad_buf(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * av[i] / nv;
  });
  return out;
}

// ---- structure ----

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("concat: empty input list");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    require(p.rows() == n, "concat", parts[0], p);
    total += p.cols();
    if (p.tape) {
      if (tape && tape != p.tape) throw Error("concat: operands on different tapes");
      tape = p.tape;
    }
  }
  Tensor out({n, total});
  std::size_t off = 0;
  std::vector<int> nodes;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const std::size_t m = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out.data[i * total + off + j] = p.data[i * m + j];
    nodes.push_back(p.node);
    widths.push_back(m);
    off += m;
  }
  record(out, tape, [nodes, widths, n, total](Tape& t, int on) {
    const auto& g = t.grad_buf(on);
    std::size_t off = 0;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      const std::size_t m = widths[p];
      if (nodes[p] >= 0) {
        auto& ga = t.grad_buf(nodes[p]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i * total + off + j];
      }
      off += m;
    }
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("concat_rows: empty input list");
  const std::size_t m = parts[0].cols();
  std::size_t total = 0;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    require(p.cols() == m, "concat_rows", parts[0], p);
    total += p.rows();
    if (p.tape) {
      if (tape && tape != p.tape) throw Error("concat_rows: operands on different tapes");
      tape = p.tape;
    }
  }
  Tensor out({total, m});
  std::size_t off = 0;
  std::vector<int> nodes;
  std::vector<std::size_t> counts;
  for (const auto& p : parts) {
    std::copy(p.data.begin(), p.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off * m));
    nodes.push_back(p.node);
    counts.push_back(p.rows());
    off += p.rows();
  }
  record(out, tape, [nodes, counts, m](Tape& t, int on) {
    const auto& g = t.grad_buf(on);
    std::size_t off = 0;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      if (nodes[p] >= 0) {
        auto& ga = t.grad_buf(nodes[p]);
        for (std::size_t i = 0; i < counts[p] * m; ++i) ga[i] += g[off * m + i];
      }
      off += counts[p];
    }
  });
  return out;
}

Tensor take_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  const std::size_t n = a.rows(), m = a.cols();
  if (idx.empty()) throw Error("take_rows: empty index list");
  for (std::size_t i : idx)
    if (i >= n) throw Error("take_rows: index out of range");
  Tensor out({idx.size(), m});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < m; ++j) out.data[r * m + j] = a.data[idx[r] * m + j];
  record(out, a.tape, [an = a.node, idx, m](Tape& t, int on) {
    if (an < 0) return;
    const auto& g = t.grad_buf(on);
    auto& ga = t.grad_buf(an);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < m; ++j) ga[idx[r] * m + j] += g[r * m + j];
  });
  return out;
}

// ---- broadcasts ----

namespace {

Tensor bcast_row_op(const Tensor& a, const Tensor& r, const char* name, double sign,
                    bool multiply) {
  require(a.rank() == 2 && r.rows() == 1 && r.cols() == a.cols(), name, a, r);
  Tape* tape = resolve_tape(a, r);
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.data[i * m + j] =
          multiply ? a.data[i * m + j] * r.data[j] : a.data[i * m + j] + sign * r.data[j];
  check_finite(out, name);
  record(out, tape,
         [an = a.node, rn = r.node, av = a.data, rv = r.data, n, m, sign,
          multiply](Tape& t, int on) {
           const auto& g = t.grad_buf(on);
           if (an >= 0) {
             auto& ga = t.grad_buf(an);
             for (std::size_t i = 0; i < n * m; ++i)
               ga[i] += multiply ? g[i] * rv[i % m] : g[i];
           }
           if (rn >= 0) {
             auto& gr = t.grad_buf(rn);
             for (std::size_t i = 0; i < n; ++i)
               for (std::size_t j = 0; j < m; ++j)
                 gr[j] += multiply ? g[i * m + j] * av[i * m + j] : sign * g[i * m + j];
           }
         });
  return out;
}

}  // namespace

Tensor sub_bcast_row(const Tensor& a, const Tensor& r) {
  return bcast_row_op(a, r, "sub_bcast_row", -1.0, false);
}
Tensor add_bcast_row(const Tensor& a, const Tensor& r) {
  return bcast_row_op(a, r, "add_bcast_row", 1.0, false);
}
Tensor mul_bcast_row(const Tensor& a, const Tensor& r) {
  return bcast_row_op(a, r, "mul_bcast_row", 0.0, true);
}

Tensor sub_bcast_col(const Tensor& a, const Tensor& c) {
  require(a.rank() == 2 && c.cols() == 1 && c.rows() == a.rows(), "sub_bcast_col", a, c);
  Tape* tape = resolve_tape(a, c);
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] = a.data[i * m + j] - c.data[i];
  check_finite(out, "sub_bcast_col");
  record(out, tape, [an = a.node, cn = c.node, n, m](Tape& t, int on) {
    const auto& g = t.grad_buf(on);
    if (an >= 0) axpy(t.grad_buf(an), g);
    if (cn >= 0) {
      auto& gc = t.grad_buf(cn);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gc[i] -= g[i * m + j];
    }
  });
  return out;
}

Tensor div_bcast_col(const Tensor& a, const Tensor& c) {
  require(a.rank() == 2 && c.cols() == 1 && c.rows() == a.rows(), "div_bcast_col", a, c);
  Tape* tape = resolve_tape(a, c);
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] = a.data[i * m + j] / c.data[i];
  check_finite(out, "div_bcast_col");
  record(out, tape,
         [an = a.node, cn = c.node, av = a.data, cv = c.data, n, m](Tape& t, int on) {
           const auto& g = t.grad_buf(on);
           if (an >= 0) {
             auto& ga = t.grad_buf(an);
             for (std::size_t i = 0; i < n; ++i)
               for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[i * m + j] / cv[i];
           }
           if (cn >= 0) {
             auto& gc = t.grad_buf(cn);
             for (std::size_t i = 0; i < n; ++i)
               for (std::size_t j = 0; j < m; ++j)
                 gc[i] -= g[i * m + j] * av[i * m + j] / (cv[i] * cv[i]);
           }
         });
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  const std::size_t n = logits.rows(), m = logits.cols();
  if (labels.size() != n) throw Error("cross_entropy: label count != batch size");
  for (std::size_t y : labels)
    if (y >= m) throw Error("cross_entropy: label out of range");
  Tensor probs = softmax_rows(logits.detached());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double p = probs.data[i * m + labels[i]];
    loss -= std::log(p > kLogFloor ? p : kLogFloor);
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(n));
  check_finite(out, "cross_entropy");
  record(out, logits.tape,
         [ln = logits.node, pv = probs.data, labels, n, m](Tape& t, int on) {
           if (ln < 0) return;
           const double g = t.grad_buf(on)[0] / static_cast<double>(n);
           auto& gl = t.grad_buf(ln);
           for (std::size_t i = 0; i < n; ++i)
             for (std::size_t j = 0; j < m; ++j)
               gl[i * m + j] += g * (pv[i * m + j] - (j == labels[i] ? 1.0 : 0.0));
         });
  return out;
}

// ---- grad check ----

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  if (eps < 1e-7 || eps > 1e-3) throw Error("grad_check: eps outside [1e-7, 1e-3]");
  Tape tape;
  Tensor xt = tape.track(x);
  Tensor y = f(xt);
  if (!y.is_scalar()) throw Error("grad_check: function must return a scalar");
  tape.backward(y);
  Tensor analytic = tape.grad_tensor(xt);

  double max_err = 0.0;
  Tensor probe = x.detached();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + eps;
    const double fp = f(probe).value();
    probe.data[i] = orig - eps;
    const double fm = f(probe).value();
    probe.data[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    max_err = std::max(max_err, std::fabs(a - numeric) / denom);
  }
  return max_err;
}

// ---- binary tensor file ----

namespace {

constexpr char kMagic[4] = {'A', 'L', 'F', 'A'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_le<std::uint16_t>(os, kVersion);
  write_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.rank()));
  for (std::size_t e : t.shape) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  for (double v : t.data) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_le<std::uint32_t>(os, bits);
  }
  if (!os) throw Error("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw Error("bad magic in tensor file: " + path);
  const std::uint16_t version = read_le<std::uint16_t>(is);
  if (version != kVersion) throw Error("unsupported tensor file version in " + path);
  const std::uint16_t rank = read_le<std::uint16_t>(is);
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (auto& e : shape) {
    e = read_le<std::uint32_t>(is);
    n *= e;
  }
  std::vector<double> data(n);
  for (auto& v : data) {
    std::uint32_t bits = read_le<std::uint32_t>(is);
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<double>(f);
  }
  if (!is) throw Error("truncated tensor file: " + path);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace alfa
