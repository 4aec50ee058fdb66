#pragma once

#include <map>
#include <string>
#include <vector>

#include "alfa/tensor.hpp"

namespace alfa {

// Named collection of parameter tensors; ordered so that iteration (and thus
// every serialized artifact) is deterministic.
struct ParamSet {
  std::map<std::string, Tensor> tensors;

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  void insert(const std::string& name, Tensor t);
  std::vector<std::string> names() const;

  // Tracked copies bound to `tape`; the returned set is what forward passes read.
  ParamSet bind(Tape& tape) const;
};

struct AdamState {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One Adam update over `group` (subset of params' names; empty = all).
// Gradients are read from `tape` via the bound tensors in `bound`.
void adam_step(ParamSet& params, const ParamSet& bound, Tape& tape, AdamState& state,
               const std::vector<std::string>& group = {});

// Same update from an explicit gradient map (used by the meta step).
void adam_step_grads(ParamSet& params, const std::map<std::string, Tensor>& grads,
                     AdamState& state);

}  // namespace alfa
