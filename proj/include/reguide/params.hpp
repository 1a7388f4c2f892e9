#pragma once

#include <string>
#include <vector>

#include "reguide/rng.hpp"
#include "reguide/tape.hpp"
#include "reguide/tensor.hpp"

namespace reguide {

// Ordered named parameter set. The order of add() calls defines both the
// flat serialization layout and the gradient ordering, so model code adds
// parameters once in a fixed sequence.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  int add(std::string name, Tensor t) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
    return static_cast<int>(tensors.size()) - 1;
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(count()));
    for (const auto& t : tensors) out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
  }

  void unflatten(const std::vector<double>& flat) {
    if (flat.size() != static_cast<size_t>(count()))
      throw std::invalid_argument("ParamStore::unflatten: size mismatch");
    size_t k = 0;
    for (auto& t : tensors)
      for (auto& v : t.data) v = flat[k++];
  }
};

// Gaussian init helper, sigma-scaled.
inline Tensor randn_init(std::vector<int> shape, double sigma, RngStream& stream) {
  Tensor t = sample_gaussian(shape, stream);
  for (auto& v : t.data) v *= sigma;
  return t;
}

// Parameters registered on a tape, index-aligned with the store.
struct LiftedParams {
  std::vector<Value> v;
  Value operator[](int i) const { return v[static_cast<size_t>(i)]; }
};

inline LiftedParams lift(Tape& tape, const ParamStore& ps, bool requires_grad) {
  LiftedParams lp;
  lp.v.reserve(ps.tensors.size());
  for (const auto& t : ps.tensors) lp.v.push_back(tape.leaf(t, requires_grad));
  return lp;
}

}  // namespace reguide
