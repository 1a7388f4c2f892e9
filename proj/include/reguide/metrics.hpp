#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reguide/reward.hpp"
#include "reguide/synthdata.hpp"
#include "reguide/tensor.hpp"

namespace reguide::metrics {

struct FeatureSet {
  Tensor feats;        // [n, d]
  std::string source;  // "real" | "generated"
  uint64_t reward_hash = 0;
};

void validate_features(const Tensor& feats, int min_rows, const std::string& what);

// Per shuffled batch of `batch`, rank the batch's condition features by
// Euclidean distance to each motion feature; hit when the true condition is
// in the top k. Averaged over all full batches.
double r_precision(const Tensor& motion_feats, const Tensor& cond_feats, int batch, int k,
                   uint64_t seed);

// ||mu_A - mu_B||^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}); unbiased sample
// covariances, symmetric-eigendecomposition matrix square roots with
// eigenvalues below 1e-10 clamped to 0.
double frechet_distance(const Tensor& a, const Tensor& b);

// Mean Euclidean distance between paired motion/condition features.
double mm_dist(const Tensor& motion_feats, const Tensor& cond_feats);

// Mean Euclidean distance over n_pairs disjoint random pairs.
double diversity(const Tensor& feats, int n_pairs, uint64_t seed);

struct MetricsReport {
  double r_top1 = 0.0, r_top2 = 0.0, r_top3 = 0.0;
  double fid = 0.0;
  double mm = 0.0;
  double diversity_generated = 0.0;
  double diversity_real = 0.0;
  double diversity_gap = 0.0;
  int n_generated = 0;
  int n_real = 0;
  uint64_t seed = 0;

  std::string summary() const;  // aligned plain-text table
};

// Embeds motions (timestep token 0) / conditions with the reward model.
Tensor motion_features(const reward::RewardNet& net, const std::vector<Tensor>& motions);
Tensor condition_features(const reward::RewardNet& net, const std::vector<synth::Condition>& conds);

// Full suite: R-Precision top-1/2/3 and MM Dist on the generated pairs, FID
// between real and generated motion features, diversity of both sides.
MetricsReport compute_metrics(const Tensor& real_feats, const Tensor& gen_feats,
                              const Tensor& cond_feats, uint64_t seed);

}  // namespace reguide::metrics
