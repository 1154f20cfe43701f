#pragma once

#include <map>
#include <string>

#include "dsf/array.hpp"

namespace dsf::inline DSF_PREC {

/// Named learnable tensors, each with a gradient slot of the same shape.
/// Iteration order is lexicographic by name, which fixes serialization order.
class ParamStore {
 public:
  struct Entry {
    Array value;
    Array grad;
    bool touched = false;  // set when a backward pass wrote into grad
  };

  Entry& add(const std::string& name, Array init);
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  void zero_grad();
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const noexcept;
  double grad_norm() const;

  std::map<std::string, Entry>& entries() noexcept { return entries_; }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace dsf::inline DSF_PREC
