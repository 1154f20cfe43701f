#include "dsf/params.hpp"

#include <cmath>

namespace dsf::inline DSF_PREC {

ParamStore::Entry& ParamStore::add(const std::string& name, Array init) {
  if (entries_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  Entry e;
  e.grad = Array(init.shape());
  e.value = std::move(init);
  return entries_.emplace(name, std::move(e)).first->second;
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) {
    e.grad.fill(Real{0});
    e.touched = false;
  }
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const auto& [name, e] : entries_) {
    for (Real g : e.grad.values()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

}  // namespace dsf::inline DSF_PREC
