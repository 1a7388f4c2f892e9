#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reguide/tensor.hpp"

namespace reguide::synth {

// Eight closed-form trajectory families standing in for a motion dataset.
constexpr int kNumClasses = 8;
enum MotionClass {
  kLine = 0,
  kArcLeft = 1,
  kArcRight = 2,
  kZigzag = 3,
  kSpiral = 4,
  kStopGo = 5,
  kSine = 6,
  kFigureEight = 7,
};

const char* class_name(int class_id);
int class_id_from_name(const std::string& name);

// Documented parameter ranges; build_dataset samples uniformly inside them,
// generate_motion accepts any finite values.
constexpr double kSpeedMin = 0.05, kSpeedMax = 0.15;
constexpr double kCurvMin = 0.02, kCurvMax = 0.2;
constexpr double kAmpMin = 0.5, kAmpMax = 1.5;

// Token vocabulary: 8 class tokens, then 8 quantization bins per parameter.
constexpr int kParamBins = 8;
constexpr int kCondTokens = 4;  // [class, speed bin, curvature bin, amplitude bin]
constexpr int kVocabSize = kNumClasses + 3 * kParamBins;  // 32

struct Condition {
  int class_id = 0;
  double speed = 0.1;
  double curvature = 0.1;
  double amplitude = 1.0;
};

// Deterministic token rendering of (class, quantized params).
std::vector<int> condition_tokens(const Condition& c);

// Content hash of a condition (class + raw parameter bits); keys per-condition
// RNG streams so results depend on the condition, not its batch position.
uint64_t condition_hash(const Condition& c);

// Closed-form trajectory for `c` plus seeded Gaussian jitter. Frames are
// emitted first and state advances after, so frame 0 sits at the origin.
Tensor generate_motion(const Condition& c, int n_frames, uint64_t seed,
                       double jitter_sigma = 0.01);

struct Pair {
  Condition cond;
  uint64_t seed = 0;  // jitter seed; regenerates frames bit-exactly
  Tensor frames;      // [N, 2]
};

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

struct Dataset {
  int n_frames = 16;
  int dim = 2;
  Split split = Split::kTrain;
  uint64_t base_seed = 0;
  std::vector<Pair> pairs;

  bool operator==(const Dataset& o) const;
};

struct DatasetSpec {
  std::vector<int> class_counts;  // size kNumClasses, pairs per class
  int n_frames = 16;
};

// Samples conditions uniformly over the documented ranges and generates one
// motion per condition. Pair seeds are drawn from disjoint per-split stream
// ranges so splits built from the same base seed never share a pair.
Dataset build_dataset(const DatasetSpec& spec, uint64_t seed, Split split = Split::kTrain);

struct Splits {
  Dataset train, val, test;
};

// Round-robins `n_*` pairs over all eight classes.
Splits build_splits(int n_train, int n_val, int n_test, int n_frames, uint64_t seed);

std::vector<uint8_t> serialize_dataset(const Dataset& d);
Dataset deserialize_dataset(const std::vector<uint8_t>& bytes, const std::string& what);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace reguide::synth
