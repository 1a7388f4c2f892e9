#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reguide/diffusion.hpp"
#include "reguide/retrieval.hpp"
#include "reguide/reward.hpp"
#include "reguide/rng.hpp"
#include "reguide/synthdata.hpp"
#include "reguide/tensor.hpp"

namespace reguide::guided {

enum class Mode { kOff, kUnweighted, kTheorem3 };

Mode mode_from_string(const std::string& s);  // "off" | "unweighted" | "theorem3"
std::string mode_to_string(Mode m);

struct GuidanceConfig {
  double mu = 1.0;          // text-alignment weight
  double eta = 0.0;         // motion-alignment (anchor) weight
  double cfg_scale = 1.0;
  std::vector<int> steps;   // strictly decreasing timesteps in [1, T]
  Mode mode = Mode::kUnweighted;
  double grad_clip = 1.0;   // per-step L2 clip of the reward gradient; <= 0 disables
  bool record_x = false;    // keep per-step x snapshots in the trace
  bool reward_at_t0 = false;  // ablation: evaluate the reward with timestep token 0
};

// Evenly strided decreasing timesteps ending at 1 (the schedule the plain
// sampler uses internally): steps[i] = floor((n-1-i)*T/n) + 1.
std::vector<int> sampling_steps(int T, int n);
void validate_steps(const std::vector<int>& steps, int T);

struct StepRecord {
  int t = 0;
  double reward = 0.0;     // reward value at x_t before the step (0 when unguided)
  double grad_norm = 0.0;  // pre-clip L2 norm of the reward gradient
  std::optional<Tensor> x;
};

struct SampleTrace {
  std::vector<StepRecord> steps;
  Tensor final_motion;
  uint64_t seed = 0;
  uint64_t stream_id = 0;
};

struct GradEval {
  double value = 0.0;
  Tensor grad;
};

using EpsFn = std::function<Tensor(const Tensor& x, int t)>;
using GradFn = std::function<GradEval(const Tensor& x, int t)>;
using NoiseFn = std::function<Tensor(const std::vector<int>& shape)>;

// One reverse-step update from t_hi down to t_lo:
//   x_lo = (x - (beta_eff/sqrt(1-abar_hi)) eps_hat + sqrt(beta_eff) noise) / sqrt(alpha_eff)
//        [+ w * grad]
// with alpha_eff = abar(t_hi)/abar(t_lo), w = beta_eff/sqrt(alpha_eff) in
// theorem3 mode and 1 in unweighted mode. The unguided part is arithmetic-
// identical to the plain sampler's update, so mode=off reduces bit-exactly.
Tensor guided_step_core(const Tensor& x, int t_hi, int t_lo, const Tensor& eps_hat,
                        const Tensor* grad, Mode mode, const diffusion::NoiseSchedule& sched,
                        const Tensor& noise);

// Full-schedule step (t -> t-1) against learned models; draws its own noise
// for t > 1. rnet may be null when the mode or weights disable the reward.
Tensor guided_step(const Tensor& x_t, int t, const synth::Condition& c,
                   const diffusion::DenoiserNet& den, const reward::RewardNet* rnet,
                   const Tensor* z_anchor, const diffusion::NoiseSchedule& sched,
                   const GuidanceConfig& gcfg, RngStream& stream);

// Generic reverse chain over gcfg.steps with injectable model, reward, and
// noise sources; the analytic oracle drives this directly.
Tensor sample_core(const std::vector<int>& shape, const EpsFn& eps_fn, const GradFn* grad_fn,
                   const diffusion::NoiseSchedule& sched, const GuidanceConfig& gcfg,
                   const NoiseFn& noise_fn, SampleTrace* trace);

struct SampleResult {
  Tensor motion;
  SampleTrace trace;
};

// Reward-guided sampling for one condition: anchor retrieved once, condition
// embedding computed once, then the reverse chain over gcfg.steps.
SampleResult sample(const synth::Condition& c, const diffusion::DenoiserNet& den,
                    const reward::RewardNet* rnet, const retrieval::RetrievalIndex* index,
                    const diffusion::NoiseSchedule& sched, const GuidanceConfig& gcfg,
                    RngStream stream);

// Independent per-condition streams keyed by condition content (identical
// conditions repeat identical chains); output order matches input order and
// is unaffected by `workers`.
std::vector<SampleResult> batch_sample(const std::vector<synth::Condition>& conds,
                                       const diffusion::DenoiserNet& den,
                                       const reward::RewardNet* rnet,
                                       const retrieval::RetrievalIndex* index,
                                       const diffusion::NoiseSchedule& sched,
                                       const GuidanceConfig& gcfg, uint64_t seed, int workers);

}  // namespace reguide::guided
