#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtb/rng.hpp"
#include "mtb/tensor.hpp"

namespace mtb {

/// Named trainable tensors in registration order. Each parameter carries a
/// group tag ("shared", "sst", "gen", ...) used to route gradients.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::string group;
    Tensor tensor;
  };

  Tensor add(const std::string& name, const std::string& group, Tensor t);
  Tensor normal(const std::string& name, const std::string& group, Shape shape, double stddev, Rng& rng);
  Tensor zeros(const std::string& name, const std::string& group, Shape shape);
  Tensor ones(const std::string& name, const std::string& group, Shape shape);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> in_group(const std::string& group) const;
  std::size_t total_size() const;

  void zero_grad();
  /// Toggle gradient tracking for one group (e.g. to treat the discriminator
  /// as constant during the generator step).
  void set_trainable(const std::string& group, bool flag);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace mtb
