#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reguide/diffusion.hpp"
#include "reguide/reward.hpp"
#include "reguide/synthdata.hpp"
#include "reguide/tensor.hpp"

namespace reguide::retrieval {

struct IndexEntry {
  synth::Condition cond;
  uint64_t pair_seed = 0;
  Tensor frames;    // clean motion [N, dim]
  Tensor z_motion;  // clean-motion embedding [1, d_z]
  Tensor z_cond;    // condition embedding [1, d_z]
};

struct RetrievalIndex {
  uint64_t reward_hash = 0;  // hash of the reward checkpoint that embedded the entries
  int n_frames = 0;
  int dim = 0;
  int d_z = 0;
  std::vector<IndexEntry> entries;
};

RetrievalIndex build_index(const reward::RewardNet& net, const synth::Dataset& data,
                           uint64_t reward_hash);

// Binary container: magic "RGIX", version, reward hash, shapes, entries,
// trailing CRC32.
std::vector<uint8_t> serialize_index(const RetrievalIndex& idx);
RetrievalIndex deserialize_index(const std::vector<uint8_t>& bytes);
void save_index(const std::string& path, const RetrievalIndex& idx);
RetrievalIndex load_index(const std::string& path);

// Loud mismatch when an index built under one reward model is queried with
// another.
void check_index_hash(const RetrievalIndex& idx, uint64_t reward_hash);

struct AnchorResult {
  int ordinal = -1;
  double score = 0.0;
};

// Argmax cosine between stored motion embeddings and the query condition
// embedding; exact ties resolve to the lowest ordinal.
AnchorResult retrieve_anchor(const RetrievalIndex& idx, const Tensor& z_cond);
AnchorResult retrieve_anchor(const RetrievalIndex& idx, const reward::RewardNet& net,
                             const synth::Condition& c);

constexpr std::array<int, 5> kRetrievalKs = {1, 2, 3, 5, 10};

struct RetrievalReport {
  std::array<double, 5> motion_to_cond{};  // R@k, k in kRetrievalKs
  std::array<double, 5> cond_to_motion{};
  int batch = 0;
  int n_batches = 0;
  int queries = 0;
  int noise_t = 0;
  uint64_t seed = 0;
};

// Batched bidirectional retrieval over shuffled full batches; motions may be
// forward-noised to `noise_t` first (0 = clean), and are embedded with that
// same timestep token. Ranking is by cosine similarity.
RetrievalReport retrieval_eval(const reward::RewardNet& net, const synth::Dataset& data,
                               int batch, int noise_t, const diffusion::NoiseSchedule* sched,
                               uint64_t seed);

}  // namespace reguide::retrieval
