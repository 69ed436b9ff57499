#include "unicorn/params.hpp"

#include <algorithm>

#include "unicorn/error.hpp"

namespace unicorn {

Tensor& ParamRegistry::add(std::string name, Tensor value, bool decay) {
  if (find(name) != nullptr) fail(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
  entries_.push_back({std::move(name), std::move(value), decay});
  return entries_.back().value;
}

const NamedParam* ParamRegistry::find(const std::string& name) const {
  const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const NamedParam& p) { return p.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.numel();
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& p : entries_) p.value.zero_grad();
}

std::vector<std::vector<double>> ParamRegistry::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& p : entries_) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void ParamRegistry::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) fail(ErrorCode::kShape, "snapshot size does not match registry");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = entries_[i].value.mutable_data();
    if (dst.size() != values[i].size()) fail(ErrorCode::kShape, "snapshot extent mismatch for " + entries_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

Tensor truncated_normal_param(Shape shape, double stddev, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.truncated_normal(stddev);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor constant_param(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

}  // namespace unicorn
