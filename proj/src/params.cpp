// SPDX-License-Identifier: Apache-2.0
#include "semsplit/params.hpp"

#include "semsplit/error.hpp"

namespace semsplit {

void ParamStore::add(const std::string& name, Tensor value) {
  if (!arrays_.emplace(name, std::move(value)).second) throw ConfigError("duplicate parameter name " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw InputError("unknown parameter " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw InputError("unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::total_elements() const { return elements_with_prefix(""); }

std::size_t ParamStore::elements_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : arrays_) {
    if (name.compare(0, prefix.size(), prefix) == 0) n += t.size();
  }
  return n;
}

ag::Var ParamBinding::operator()(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  ag::Var leaf(store_->at(name), trainable_);
  leaves_.emplace(name, leaf);
  return leaf;
}

ParamStore ParamBinding::gradients() const {
  ParamStore grads;
  for (const auto& [name, value] : *store_) {
    auto it = leaves_.find(name);
    grads.add(name, it != leaves_.end() ? it->second.grad() : Tensor(value.shape(), 0.0));
  }
  return grads;
}

}  // namespace semsplit
