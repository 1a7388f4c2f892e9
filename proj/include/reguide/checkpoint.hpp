#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reguide/diffusion.hpp"
#include "reguide/reward.hpp"

namespace reguide::ckpt {

// Checkpoint container: magic "RGCK", version, component tag, a JSON blob of
// hyperparameters, the flattened weights, and a trailing CRC32.
struct Checkpoint {
  std::string component;  // "denoiser" | "reward"
  std::string hyper_json;
  std::vector<double> weights;
};

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes);

// Loads and checks the component tag; mismatch is an IoError, not a garbage
// model.
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_component);
void save_checkpoint(const std::string& path, const Checkpoint& c);

// Content hash of the serialized checkpoint (FNV-1a 64); used to bind
// retrieval indexes to the reward model that produced them.
uint64_t checkpoint_hash(const std::vector<uint8_t>& bytes);
uint64_t file_checkpoint_hash(const std::string& path);

Checkpoint denoiser_to_checkpoint(const diffusion::DenoiserNet& net);
diffusion::DenoiserNet denoiser_from_checkpoint(const Checkpoint& c);

Checkpoint reward_to_checkpoint(const reward::RewardNet& net);
reward::RewardNet reward_from_checkpoint(const Checkpoint& c);

}  // namespace reguide::ckpt
