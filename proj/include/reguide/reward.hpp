#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "reguide/diffusion.hpp"
#include "reguide/params.hpp"
#include "reguide/synthdata.hpp"
#include "reguide/tape.hpp"
#include "reguide/tensor.hpp"

namespace reguide::reward {

struct RewardConfig {
  int n_frames = 16;
  int dim = 2;
  int d_model = 32;
  int d_z = 32;
  int n_heads = 2;
  int n_layers = 2;
  int d_ffn = 64;
  int T = 1000;       // timestep-token table has T+1 rows; row 0 = clean token
  int vocab = synth::kVocabSize;
  int cond_tokens = synth::kCondTokens;
  int tok_emb = 16;
};

// Step-aware dual encoder: a small self-attention motion encoder over
// [timestep token, frame tokens, readout token], a token-MLP condition
// encoder, and a shared motion decoder used by the representation loss.
struct RewardNet {
  RewardConfig cfg;
  ParamStore ps;

  struct LayerIds {
    int ln1_g, ln1_b, wq, wk, wv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  int w_frame, b_frame, t_table, readout, pos_table;
  std::vector<LayerIds> layers;
  int lnf_g, lnf_b, w_z, b_z;
  int c_table, c_w1, c_b1, c_w2, c_b2;
  int d_w1, d_b1, d_w2, d_b2;

  static RewardNet init(const RewardConfig& cfg, uint64_t seed);

  std::vector<int> encoder_param_ids() const;
  std::vector<int> condition_param_ids() const;
  std::vector<int> decoder_param_ids() const;

  // Graph builders; every forward pass (training and inference) goes through
  // these so there is exactly one definition of each network.
  Value encode_motion_on(Tape& tape, const LiftedParams& lp, Value x, int t) const;
  Value encode_condition_on(Tape& tape, const LiftedParams& lp,
                            const std::vector<int>& tokens) const;
  Value decode_on(Tape& tape, const LiftedParams& lp, Value z) const;  // -> [1, N*dim]
};

// Lift only the listed parameter ids onto the tape (constants); other slots
// stay detached. Keeps single-network passes from copying unrelated weights.
LiftedParams lift_subset(Tape& tape, const ParamStore& ps, const std::vector<int>& ids);

// Eager embeddings, both deterministic.
Tensor encode_motion(const RewardNet& net, const Tensor& x_t, int t);
Tensor encode_condition(const RewardNet& net, const synth::Condition& c);
Tensor encode_condition_tokens(const RewardNet& net, const std::vector<int>& tokens);
Tensor decode_embedding(const RewardNet& net, const Tensor& z);  // -> [N, dim]

// cos(a, b); zero-norm input -> error.
double cosine(const Tensor& a, const Tensor& b);
double reward_text(const Tensor& z_x, const Tensor& z_c);
double reward_motion(const Tensor& z_x, const Tensor& z_anchor);

// R = mu R_phi + eta R_m. z_anchor may be null when eta = 0.
double reward_total(const RewardNet& net, const Tensor& x_t, int t, const synth::Condition& c,
                    const Tensor* z_anchor, double mu, double eta);

struct RewardEval {
  double value = 0.0;
  Tensor grad;  // d(reward_total)/d(x_t), motion shape
};

// Value and gradient w.r.t. x_t only; params, t, and the anchor are constants.
// z_c is the precomputed condition embedding (kept fixed across a sampling
// run); mu = eta = 0 short-circuits to a zero gradient without evaluation.
RewardEval reward_value_and_grad(const RewardNet& net, const Tensor& x_t, int t,
                                 const Tensor& z_c, const Tensor* z_anchor, double mu,
                                 double eta);

Tensor reward_grad(const RewardNet& net, const Tensor& x_t, int t, const synth::Condition& c,
                   const Tensor* z_anchor, double mu, double eta);

// Pairs (i, j), i != j, whose condition-embedding cosine exceeds `threshold`
// are masked out of the InfoNCE negatives (additive -1e9 entries).
Tensor negative_filter_mask(const Tensor& z_cond_rows, double threshold);

// Symmetric InfoNCE over cosine/tau logits with the additive mask above.
Value contrastive_loss_on(Tape& tape, Value z_motion, Value z_cond, double tau,
                          const Tensor& mask);
double contrastive_loss(const Tensor& z_motion, const Tensor& z_cond, double tau,
                        double threshold);

// smoothL1(dec_x, x0) + smoothL1(dec_c, x0) + L1(z_x, z_c), all element-sums.
Value representation_loss_on(Tape& tape, Value dec_x, Value dec_c, Value z_x, Value z_c,
                             Value x0_flat);
double representation_loss(const RewardNet& net, const Tensor& x_t, int t, const Tensor& x0,
                           const synth::Condition& c);

struct RewardTrainConfig {
  double omega = 0.5;       // clean-motion probability
  int t_min = 1;
  int t_max = -1;           // -1 resolves to sched.T
  double neg_threshold = 0.9;
  double tau = 0.1;
  double lc_weight = 1.0;
  double lr_weight = 1.0;
  int epochs = 30;
  int batch = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double grad_clip = 5.0;
  uint64_t seed = 0;
};

struct RewardTrainStats {
  std::vector<double> epoch_loss;
  std::vector<double> val_contrastive;  // index 0 = before training
  int64_t clean_count = 0;
  int64_t total_count = 0;
  std::vector<int> noised_t_values;  // distinct t values drawn for noised samples
};

RewardNet train_reward_model(const synth::Dataset& train, const synth::Dataset* val,
                             const diffusion::NoiseSchedule& sched, const RewardTrainConfig& cfg,
                             RewardTrainStats* stats = nullptr);

// Mean clean (t = 0) contrastive loss over a split in batches of `batch`;
// the validation signal tracked during training.
double clean_contrastive_loss(const RewardNet& net, const synth::Dataset& data, double tau,
                              double threshold, int batch = 32);

}  // namespace reguide::reward
