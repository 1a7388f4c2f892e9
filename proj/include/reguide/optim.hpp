#pragma once

#include <cmath>
#include <vector>

#include "reguide/params.hpp"
#include "reguide/tensor.hpp"

namespace reguide {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when > 0
};

// Adam/AdamW over a ParamStore, moments kept per scalar.
class Adam {
 public:
  Adam(ParamStore& ps, AdamConfig cfg) : ps_(ps), cfg_(cfg) {
    m_.assign(static_cast<size_t>(ps.count()), 0.0);
    v_.assign(static_cast<size_t>(ps.count()), 0.0);
  }

  void step(const std::vector<Tensor>& grads) {
    if (grads.size() != ps_.tensors.size())
      throw std::invalid_argument("Adam::step: gradient count mismatch");
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    size_t k = 0;
    for (size_t p = 0; p < ps_.tensors.size(); ++p) {
      Tensor& w = ps_.tensors[p];
      const Tensor& g = grads[p];
      if (!w.same_shape(g))
        throw std::invalid_argument("Adam::step: gradient shape mismatch at " + ps_.names[p]);
      for (int64_t i = 0; i < w.numel(); ++i, ++k) {
        double gi = g.data[i];
        m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * gi;
        v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * gi * gi;
        double mh = m_[k] / bc1, vh = v_[k] / bc2;
        if (cfg_.weight_decay > 0.0) w.data[i] -= cfg_.lr * cfg_.weight_decay * w.data[i];
        w.data[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    }
  }

 private:
  ParamStore& ps_;
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

// Scales `grads` in place so their global L2 norm is at most `max_norm`;
// returns the pre-clip norm.
inline double clip_global_l2(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g.data) v *= s;
  }
  return norm;
}

}  // namespace reguide
