// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "semsplit/autograd.hpp"
#include "semsplit/tensor.hpp"

namespace semsplit {

/// Named trainable arrays in a stable (lexicographic) order.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return arrays_.size(); }
  std::size_t total_elements() const;
  /// Parameter count under a name prefix such as "theta_c/".
  std::size_t elements_with_prefix(const std::string& prefix) const;

  Map::const_iterator begin() const { return arrays_.begin(); }
  Map::const_iterator end() const { return arrays_.end(); }
  Map::iterator begin() { return arrays_.begin(); }
  Map::iterator end() { return arrays_.end(); }

  bool operator==(const ParamStore& other) const = default;

 private:
  Map arrays_;
};

/// Exposes a ParamStore as autograd leaves for one forward/backward pass.
/// Leaves are created on first use and cached; not thread-safe.
class ParamBinding {
 public:
  ParamBinding(const ParamStore& store, bool trainable) : store_(&store), trainable_(trainable) {}

  ag::Var operator()(const std::string& name) const;

  /// Gradients for every stored array (zeros for arrays never used).
  ParamStore gradients() const;

 private:
  const ParamStore* store_;
  bool trainable_;
  mutable std::map<std::string, ag::Var> leaves_;
};

}  // namespace semsplit
