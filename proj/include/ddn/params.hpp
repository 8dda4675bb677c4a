#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddn/tensor.hpp"

namespace ddn {

// Named tensor registry with stable insertion order. Trainable entries are
// optimizer-visible; non-trainable entries hold persistent buffers such as
// batch-norm running statistics.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, Tensor value, bool trainable = true) {
    if (index_.count(name))
      throw std::invalid_argument("ParamSet: duplicate name " + name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(value), trainable});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name); }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::out_of_range("ParamSet: no entry named " + name);
    return entries_[it->second].value;
  }
  const Tensor& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }
  bool trainable(const std::string& name) const {
    return entries_[index_.at(name)].trainable;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace ddn
