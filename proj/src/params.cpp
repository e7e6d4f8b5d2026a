#include "mtb/params.hpp"

#include "mtb/error.hpp"

namespace mtb {

Tensor ParamStore::add(const std::string& name, const std::string& group, Tensor t) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.push_back({name, group, std::move(t)});
  return entries_.back().tensor;
}

Tensor ParamStore::normal(const std::string& name, const std::string& group, Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return add(name, group, Tensor::from(std::move(shape), std::move(v)));
}

Tensor ParamStore::zeros(const std::string& name, const std::string& group, Shape shape) {
  return add(name, group, Tensor::zeros(std::move(shape)));
}

Tensor ParamStore::ones(const std::string& name, const std::string& group, Shape shape) {
  return add(name, group, Tensor::full(std::move(shape), 1.0));
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

std::vector<Tensor> ParamStore::in_group(const std::string& group) const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.group == group) out.push_back(e.tensor);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::set_trainable(const std::string& group, bool flag) {
  for (auto& e : entries_)
    if (e.group == group) e.tensor.set_requires_grad(flag);
}

}  // namespace mtb
