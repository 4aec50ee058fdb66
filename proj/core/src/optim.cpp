#include "alfa/optim.hpp"

#include <cmath>

namespace alfa {

Tensor& ParamSet::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

void ParamSet::insert(const std::string& name, Tensor t) {
  if (contains(name)) throw Error("duplicate parameter: " + name);
  tensors.emplace(name, std::move(t));
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(tensors.size());
  for (const auto& [name, _] : tensors) out.push_back(name);
  return out;
}

ParamSet ParamSet::bind(Tape& tape) const {
  ParamSet bound;
  for (const auto& [name, t] : tensors) bound.tensors.emplace(name, tape.track(t));
  return bound;
}

namespace {

void adam_update_one(Tensor& p, const std::vector<double>& g, AdamState& st,
                     const std::string& name) {
  if (g.size() != p.size()) throw Error("gradient shape mismatch for parameter " + name);
  auto& m = st.m.try_emplace(name, Tensor(p.shape)).first->second;
  auto& v = st.v.try_emplace(name, Tensor(p.shape)).first->second;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m.data[i] = st.beta1 * m.data[i] + (1.0 - st.beta1) * g[i];
    v.data[i] = st.beta2 * v.data[i] + (1.0 - st.beta2) * g[i] * g[i];
    const double mhat = m.data[i] / bc1;
    const double vhat = v.data[i] / bc2;
    p.data[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

}  // namespace

void adam_step(ParamSet& params, const ParamSet& bound, Tape& tape, AdamState& state,
               const std::vector<std::string>& group) {
  ++state.step;
  const std::vector<std::string> names = group.empty() ? params.names() : group;
  for (const auto& name : names) {
    Tensor& p = params.at(name);
    const Tensor& b = bound.at(name);
    if (!tape.has_grad(b)) throw Error("missing gradient for tracked parameter " + name);
    adam_update_one(p, tape.grad_buf(b.node), state, name);
  }
}

void adam_step_grads(ParamSet& params, const std::map<std::string, Tensor>& grads,
                     AdamState& state) {
  ++state.step;
  for (const auto& [name, g] : grads) {
    adam_update_one(params.at(name), g.data, state, name);
  }
}

}  // namespace alfa
