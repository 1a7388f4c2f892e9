#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "reguide/params.hpp"
#include "reguide/rng.hpp"
#include "reguide/synthdata.hpp"
#include "reguide/tape.hpp"
#include "reguide/tensor.hpp"

namespace reguide::diffusion {

// Discrete-time variance schedule. beta/alpha/alpha_bar are indexed 1..T;
// alpha_bar(0) is defined as 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // beta[t-1] = beta_t
  std::vector<double> alpha;      // alpha_t = 1 - beta_t
  std::vector<double> alpha_bar;  // running product of alpha

  double beta_at(int t) const { return beta[static_cast<size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<size_t>(t - 1)]; }
  double alpha_bar_at(int t) const {  // accepts t = 0
    return t == 0 ? 1.0 : alpha_bar[static_cast<size_t>(t - 1)];
  }
};

NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// eps_uncond + s (eps_cond - eps_uncond).
Tensor cfg_epsilon(const Tensor& eps_cond, const Tensor& eps_uncond, double s);

// xbar_{t-1} = x_t - (beta_t / sqrt(1 - abar_t)) eps_pred, for 1 <= t <= T.
Tensor ddpm_mean(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& sched);

// Sinusoidal embedding of an integer timestep, dimension d (even).
Tensor timestep_embedding(int t, int d);

struct DenoiserConfig {
  int n_frames = 16;
  int dim = 2;
  int t_emb = 32;
  int tok_emb = 8;  // condition = kCondTokens token embeddings concatenated
  int hidden = 128;
  int vocab = synth::kVocabSize;
  int T = 1000;
};

// Residual MLP noise predictor over (flattened x_t, sinusoidal t, condition
// embedding), with a learned null-condition embedding for CFG.
struct DenoiserNet {
  DenoiserConfig cfg;
  ParamStore ps;
  int tok_table, null_emb, w_in, b_in, w_b1, b_b1, w_b2, b_b2, w_out, b_out;

  static DenoiserNet init(const DenoiserConfig& cfg, uint64_t seed);

  // Tape-level forward; tokens == nullptr selects the null-condition path.
  Value forward(Tape& tape, const LiftedParams& lp, Value x_flat, int t,
                const std::vector<int>* tokens) const;

  // Eager single-motion prediction, [N, D] in and out.
  Tensor predict(const Tensor& x, int t, const std::vector<int>* tokens) const;

  // CFG-combined prediction; s = 1 evaluates the conditional branch only and
  // s = 0 the unconditional branch only.
  Tensor predict_cfg(const Tensor& x, int t, const std::vector<int>& tokens, double s) const;
};

struct TrainDenoiserConfig {
  int steps = 2500;
  int batch = 32;
  double lr = 1e-3;
  double p_uncond = 0.1;
  double grad_clip = 5.0;  // global L2; <= 0 disables
  uint64_t seed = 0;
  int log_every = 100;
  // Optional externally-owned snapshot hook: called at these step numbers.
  std::vector<int> snapshot_steps;
  std::function<void(int step, const DenoiserNet&)> on_snapshot;
};

struct DenoiserTrainLog {
  std::vector<double> step_loss;   // every log_every steps
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

DenoiserNet train_denoiser(const synth::Dataset& train, const NoiseSchedule& sched,
                           const TrainDenoiserConfig& cfg, DenoiserTrainLog* log = nullptr);

// Independent vanilla DDPM chain (the mu = eta = 0 case), kept as a separate
// implementation so the guided sampler's reduction mode has an oracle to
// match bit-for-bit. `n_steps` selects an evenly strided sub-schedule.
Tensor vanilla_sample(const DenoiserNet& net, const std::vector<int>& tokens, double cfg_scale,
                      const NoiseSchedule& sched, int n_steps, RngStream stream);

}  // namespace reguide::diffusion
