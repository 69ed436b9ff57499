#pragma once

#include <string>
#include <vector>

#include "unicorn/rng.hpp"
#include "unicorn/tensor.hpp"

namespace unicorn {

struct NamedParam {
  std::string name;
  Tensor value;
  // Decoupled weight decay applies to matrices and tokens, never to biases or
  // layer-norm parameters.
  bool decay = true;
};

// Ordered list of every learned tensor of a model. Order is registration
// order and is what checkpoints and optimizer state follow.
class ParamRegistry {
 public:
  Tensor& add(std::string name, Tensor value, bool decay);

  const std::vector<NamedParam>& entries() const { return entries_; }
  std::vector<NamedParam>& entries() { return entries_; }
  const NamedParam* find(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Deep copies of every value, in registry order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<NamedParam> entries_;
};

// Helpers for parameter construction.
Tensor truncated_normal_param(Shape shape, double stddev, Rng& rng);
Tensor constant_param(Shape shape, double value);

}  // namespace unicorn
