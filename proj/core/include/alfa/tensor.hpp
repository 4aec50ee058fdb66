#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace alfa {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

class Tape;

// Dense row-major tensor of doubles. Value-semantic; when `tape` is set the
// tensor participates in reverse-mode differentiation through that tape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shp, double fill = 0.0);
  Tensor(std::vector<std::size_t> shp, std::vector<double> vals);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::vector<double> vals);
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> vals);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool tracked() const { return tape != nullptr; }
  bool is_scalar() const { return size() == 1; }
  double value() const;

  // 2-d accessors; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  Tensor detached() const;
  std::string shape_str() const;
};

// Dynamic tape: forward ops append records, backward replays them in reverse.
class Tape {
 public:
  Tensor track(const Tensor& t);

  // Accumulates d(root)/d(leaf) into per-node buffers. Root must be a tracked
  // scalar. Buffers are reset at each call.
  void backward(const Tensor& root);

  bool has_grad(const Tensor& t) const;
  Tensor grad_tensor(const Tensor& t) const;

  std::size_t num_records() const { return records_.size(); }
  void reset();

  // Op plumbing.
  int fresh_node(std::size_t n);
  std::vector<double>& grad_buf(int id) { return grads_[static_cast<std::size_t>(id)]; }
  const std::vector<double>& grad_buf(int id) const { return grads_[static_cast<std::size_t>(id)]; }
  void push_record(int node, std::function<void(Tape&, int)> fn) {
    records_.push_back({node, std::move(fn)});
  }

 private:
  struct Record {
    int node;
    std::function<void(Tape&, int)> fn;
  };
  std::vector<Record> records_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::size_t> sizes_;
};

// ---- forward ops (each records a tape node when an input is tracked) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log_clamped(const Tensor& a);  // log(max(a, 1e-12))
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor softmax_rows(const Tensor& a);  // log-sum-exp stabilized
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axis0(const Tensor& a);   // n x d -> 1 x d
Tensor mean_axis0(const Tensor& a);  // n x d -> 1 x d
Tensor mean_axis1(const Tensor& a);  // n x d -> n x 1
Tensor rowwise_l2norm(const Tensor& a);  // n x d -> n x 1
Tensor frobenius_norm(const Tensor& a);  // scalar
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor take_rows(const Tensor& a, const std::vector<std::size_t>& idx);
Tensor sub_bcast_row(const Tensor& a, const Tensor& r);  // a - r, r is 1 x d
Tensor sub_bcast_col(const Tensor& a, const Tensor& c);  // a - c, c is n x 1
Tensor add_bcast_row(const Tensor& a, const Tensor& r);
Tensor mul_bcast_row(const Tensor& a, const Tensor& r);
Tensor div_bcast_col(const Tensor& a, const Tensor& c);
// Mean NLL of softmax(logits) at the given labels; fused softmax backward.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

// Central-difference check of backward() for a tensor-to-scalar function.
// Returns max elementwise relative error, denominator max(|a|,|b|,1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps);

// ---- binary tensor file: "ALFA", u16 version, u16 rank, u32 extents, f32 payload ----
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace alfa
