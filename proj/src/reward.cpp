#include "reguide/reward.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "reguide/optim.hpp"
#include "reguide/rng.hpp"

namespace reguide::reward {

namespace {

constexpr double kMaskValue = -1e9;

Value cosine_on(Tape& tape, Value a, Value b) {
  Value dot = tape.sum(tape.mul(a, b));
  Value na = tape.sqrt_t(tape.sum(tape.mul(a, a)));
  Value nb = tape.sqrt_t(tape.sum(tape.mul(b, b)));
  return tape.div(dot, tape.mul(na, nb));
}

Tensor flatten_row(const Tensor& x) {
  Tensor out = x;
  out.shape = {1, static_cast<int>(x.data.size())};
  return out;
}

}  // namespace

RewardNet RewardNet::init(const RewardConfig& cfg, uint64_t seed) {
  if (cfg.d_model % cfg.n_heads != 0)
    throw std::invalid_argument("reward model width must divide across heads");
  if (cfg.n_frames < 1 || cfg.dim < 1 || cfg.n_layers < 1 || cfg.T < 1)
    throw std::invalid_argument("bad reward model config");
  RewardNet net;
  net.cfg = cfg;
  RngStream init_stream(seed, 0x52455741u);
  auto w = [&](std::string name, int fan_in, std::vector<int> shape) {
    return net.ps.add(std::move(name),
                      randn_init(std::move(shape), 1.0 / std::sqrt(double(fan_in)), init_stream));
  };
  auto table = [&](std::string name, std::vector<int> shape) {
    return net.ps.add(std::move(name), randn_init(std::move(shape), 0.02, init_stream));
  };
  auto zeros = [&](std::string name, std::vector<int> shape) {
    return net.ps.add(std::move(name), Tensor::zeros(std::move(shape)));
  };
  auto ones = [&](std::string name, std::vector<int> shape) {
    return net.ps.add(std::move(name), Tensor::full(std::move(shape), 1.0));
  };

  const int dm = cfg.d_model;
  net.w_frame = w("w_frame", cfg.dim, {cfg.dim, dm});
  net.b_frame = zeros("b_frame", {1, dm});
  net.t_table = table("t_table", {cfg.T + 1, dm});
  net.readout = table("readout", {1, dm});
  net.pos_table = table("pos_table", {cfg.n_frames + 2, dm});
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string p = "enc." + std::to_string(l) + ".";
    LayerIds ids;
    ids.ln1_g = ones(p + "ln1_g", {1, dm});
    ids.ln1_b = zeros(p + "ln1_b", {1, dm});
    ids.wq = w(p + "wq", dm, {dm, dm});
    ids.wk = w(p + "wk", dm, {dm, dm});
    ids.wv = w(p + "wv", dm, {dm, dm});
    ids.wo = w(p + "wo", dm, {dm, dm});
    ids.bo = zeros(p + "bo", {1, dm});
    ids.ln2_g = ones(p + "ln2_g", {1, dm});
    ids.ln2_b = zeros(p + "ln2_b", {1, dm});
    ids.w1 = w(p + "w1", dm, {dm, cfg.d_ffn});
    ids.b1 = zeros(p + "b1", {1, cfg.d_ffn});
    ids.w2 = w(p + "w2", cfg.d_ffn, {cfg.d_ffn, dm});
    ids.b2 = zeros(p + "b2", {1, dm});
    net.layers.push_back(ids);
  }
  net.lnf_g = ones("lnf_g", {1, dm});
  net.lnf_b = zeros("lnf_b", {1, dm});
  net.w_z = w("w_z", dm, {dm, cfg.d_z});
  net.b_z = zeros("b_z", {1, cfg.d_z});

  net.c_table = table("c_table", {cfg.vocab, cfg.tok_emb});
  const int c_in = cfg.cond_tokens * cfg.tok_emb;
  net.c_w1 = w("c_w1", c_in, {c_in, 64});
  net.c_b1 = zeros("c_b1", {1, 64});
  net.c_w2 = w("c_w2", 64, {64, cfg.d_z});
  net.c_b2 = zeros("c_b2", {1, cfg.d_z});

  net.d_w1 = w("d_w1", cfg.d_z, {cfg.d_z, 64});
  net.d_b1 = zeros("d_b1", {1, 64});
  net.d_w2 = w("d_w2", 64, {64, cfg.n_frames * cfg.dim});
  net.d_b2 = zeros("d_b2", {1, cfg.n_frames * cfg.dim});
  return net;
}

std::vector<int> RewardNet::encoder_param_ids() const {
  std::vector<int> ids = {w_frame, b_frame, t_table, readout, pos_table};
  for (const auto& l : layers) {
    for (int id : {l.ln1_g, l.ln1_b, l.wq, l.wk, l.wv, l.wo, l.bo, l.ln2_g, l.ln2_b, l.w1, l.b1,
                   l.w2, l.b2})
      ids.push_back(id);
  }
  ids.push_back(lnf_g);
  ids.push_back(lnf_b);
  ids.push_back(w_z);
  ids.push_back(b_z);
  return ids;
}

std::vector<int> RewardNet::condition_param_ids() const {
  return {c_table, c_w1, c_b1, c_w2, c_b2};
}

std::vector<int> RewardNet::decoder_param_ids() const { return {d_w1, d_b1, d_w2, d_b2}; }

LiftedParams lift_subset(Tape& tape, const ParamStore& ps, const std::vector<int>& ids) {
  LiftedParams lp;
  lp.v.resize(ps.tensors.size());
  for (int id : ids) lp.v[id] = tape.constant(ps.tensors[id]);
  return lp;
}

Value RewardNet::encode_motion_on(Tape& tape, const LiftedParams& lp, Value x, int t) const {
  if (t < 0 || t > cfg.T)
    throw std::invalid_argument("encode_motion: t=" + std::to_string(t) + " outside [0, " +
                                std::to_string(cfg.T) + "]");
  const Tensor& xv = tape.val(x);
  if (xv.rows() != cfg.n_frames || xv.cols() != cfg.dim)
    throw std::invalid_argument("encode_motion: motion shape " + xv.shape_str() +
                                " does not match model [" + std::to_string(cfg.n_frames) + "," +
                                std::to_string(cfg.dim) + "]");
  const int dm = cfg.d_model;
  const int hd = dm / cfg.n_heads;
  Value frames = tape.add_rowvec(tape.matmul(x, lp[w_frame]), lp[b_frame]);
  Value t_row = tape.embedding_rows(lp[t_table], {t});
  Value seq = tape.concat_rows({t_row, frames, lp[readout]});
  seq = tape.add(seq, lp[pos_table]);
  for (const auto& l : layers) {
    Value h = tape.add_rowvec(tape.mul_rowvec(tape.layernorm_rows(seq), lp[l.ln1_g]), lp[l.ln1_b]);
    Value q = tape.matmul(h, lp[l.wq]);
    Value k = tape.matmul(h, lp[l.wk]);
    Value v = tape.matmul(h, lp[l.wv]);
    std::vector<Value> heads;
    for (int hidx = 0; hidx < cfg.n_heads; ++hidx) {
      Value qh = tape.slice_cols(q, hidx * hd, hd);
      Value kh = tape.slice_cols(k, hidx * hd, hd);
      Value vh = tape.slice_cols(v, hidx * hd, hd);
      Value att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(double(hd))));
      heads.push_back(tape.matmul(att, vh));
    }
    Value o = tape.add_rowvec(tape.matmul(tape.concat_cols(heads), lp[l.wo]), lp[l.bo]);
    seq = tape.add(seq, o);
    Value h2 = tape.add_rowvec(tape.mul_rowvec(tape.layernorm_rows(seq), lp[l.ln2_g]), lp[l.ln2_b]);
    Value f = tape.add_rowvec(
        tape.matmul(tape.tanh_t(tape.add_rowvec(tape.matmul(h2, lp[l.w1]), lp[l.b1])), lp[l.w2]),
        lp[l.b2]);
    seq = tape.add(seq, f);
  }
  Value fin = tape.add_rowvec(tape.mul_rowvec(tape.layernorm_rows(seq), lp[lnf_g]), lp[lnf_b]);
  Value r = tape.slice_rows(fin, cfg.n_frames + 1, 1);
  return tape.add(tape.matmul(r, lp[w_z]), lp[b_z]);
}

Value RewardNet::encode_condition_on(Tape& tape, const LiftedParams& lp,
                                     const std::vector<int>& tokens) const {
  if (static_cast<int>(tokens.size()) != cfg.cond_tokens)
    throw std::invalid_argument("encode_condition: expected " + std::to_string(cfg.cond_tokens) +
                                " tokens, got " + std::to_string(tokens.size()));
  for (int tok : tokens)
    if (tok < 0 || tok >= cfg.vocab)
      throw std::invalid_argument("encode_condition: token " + std::to_string(tok) +
                                  " outside vocabulary of " + std::to_string(cfg.vocab));
  Value rows = tape.embedding_rows(lp[c_table], tokens);
  Value flat = tape.reshape(rows, {1, cfg.cond_tokens * cfg.tok_emb});
  Value h = tape.tanh_t(tape.add(tape.matmul(flat, lp[c_w1]), lp[c_b1]));
  return tape.add(tape.matmul(h, lp[c_w2]), lp[c_b2]);
}

Value RewardNet::decode_on(Tape& tape, const LiftedParams& lp, Value z) const {
  Value h = tape.tanh_t(tape.add(tape.matmul(z, lp[d_w1]), lp[d_b1]));
  return tape.add(tape.matmul(h, lp[d_w2]), lp[d_b2]);
}

Tensor encode_motion(const RewardNet& net, const Tensor& x_t, int t) {
  Tape tape;
  LiftedParams lp = lift_subset(tape, net.ps, net.encoder_param_ids());
  Value z = net.encode_motion_on(tape, lp, tape.constant(x_t), t);
  return tape.val(z);
}

Tensor encode_condition_tokens(const RewardNet& net, const std::vector<int>& tokens) {
  Tape tape;
  LiftedParams lp = lift_subset(tape, net.ps, net.condition_param_ids());
  Value z = net.encode_condition_on(tape, lp, tokens);
  return tape.val(z);
}

Tensor encode_condition(const RewardNet& net, const synth::Condition& c) {
  return encode_condition_tokens(net, synth::condition_tokens(c));
}

Tensor decode_embedding(const RewardNet& net, const Tensor& z) {
  Tape tape;
  LiftedParams lp = lift_subset(tape, net.ps, net.decoder_param_ids());
  Value out = net.decode_on(tape, lp, tape.constant(z));
  Tensor flat = tape.val(out);
  flat.shape = {net.cfg.n_frames, net.cfg.dim};
  return flat;
}

double cosine(const Tensor& a, const Tensor& b) {
  if (a.data.size() != b.data.size())
    throw std::invalid_argument("cosine: size mismatch " + a.shape_str() + " vs " + b.shape_str());
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    dot += a.data[i] * b.data[i];
    na += a.data[i] * a.data[i];
    nb += b.data[i] * b.data[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm input");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double reward_text(const Tensor& z_x, const Tensor& z_c) { return cosine(z_x, z_c); }

double reward_motion(const Tensor& z_x, const Tensor& z_anchor) { return cosine(z_x, z_anchor); }

double reward_total(const RewardNet& net, const Tensor& x_t, int t, const synth::Condition& c,
                    const Tensor* z_anchor, double mu, double eta) {
  if (eta != 0.0 && z_anchor == nullptr)
    throw std::invalid_argument("reward_total: motion-alignment weight set but no anchor given");
  if (mu == 0.0 && eta == 0.0) return 0.0;
  Tensor z_x = encode_motion(net, x_t, t);
  double r = 0.0;
  if (mu != 0.0) r += mu * reward_text(z_x, encode_condition(net, c));
  if (eta != 0.0) r += eta * reward_motion(z_x, *z_anchor);
  return r;
}

RewardEval reward_value_and_grad(const RewardNet& net, const Tensor& x_t, int t,
                                 const Tensor& z_c, const Tensor* z_anchor, double mu,
                                 double eta) {
  RewardEval out;
  out.grad = Tensor::zeros(x_t.shape);
  if (mu == 0.0 && eta == 0.0) return out;
  if (eta != 0.0 && z_anchor == nullptr)
    throw std::invalid_argument("reward gradient: motion-alignment weight set but no anchor given");
  Tape tape;
  LiftedParams lp = lift_subset(tape, net.ps, net.encoder_param_ids());
  Value x = tape.leaf(x_t, /*requires_grad=*/true);
  Value z_x = net.encode_motion_on(tape, lp, x, t);
  Value total;
  bool have = false;
  if (mu != 0.0) {
    total = tape.scale(cosine_on(tape, z_x, tape.constant(z_c)), mu);
    have = true;
  }
  if (eta != 0.0) {
    Value rm = tape.scale(cosine_on(tape, z_x, tape.constant(*z_anchor)), eta);
    total = have ? tape.add(total, rm) : rm;
  }
  out.value = tape.val(total)(0, 0);
  out.grad = tape.grad(total, {x})[0];
  return out;
}

Tensor reward_grad(const RewardNet& net, const Tensor& x_t, int t, const synth::Condition& c,
                   const Tensor* z_anchor, double mu, double eta) {
  Tensor z_c;
  if (mu != 0.0) z_c = encode_condition(net, c);
  return reward_value_and_grad(net, x_t, t, z_c, z_anchor, mu, eta).grad;
}

Tensor negative_filter_mask(const Tensor& z_cond_rows, double threshold) {
  const int b = z_cond_rows.rows();
  const int d = z_cond_rows.cols();
  Tensor mask = Tensor::zeros({b, b});
  std::vector<double> norms(b, 0.0);
  for (int i = 0; i < b; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += z_cond_rows(i, k) * z_cond_rows(i, k);
    norms[i] = std::sqrt(s);
  }
  for (int i = 0; i < b; ++i) {
    for (int j = i + 1; j < b; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += z_cond_rows(i, k) * z_cond_rows(j, k);
      double denom = norms[i] * norms[j];
      double sim = denom > 0.0 ? dot / denom : 0.0;
      if (sim > threshold) {
        mask(i, j) = kMaskValue;
        mask(j, i) = kMaskValue;
      }
    }
  }
  return mask;
}

Value contrastive_loss_on(Tape& tape, Value z_motion, Value z_cond, double tau,
                          const Tensor& mask) {
  if (tau <= 0.0) throw std::invalid_argument("contrastive loss: tau must be positive");
  const Tensor& zm = tape.val(z_motion);
  const int b = zm.rows();
  if (mask.rows() != b || mask.cols() != b)
    throw std::invalid_argument("contrastive loss: mask shape " + mask.shape_str() +
                                " does not match batch " + std::to_string(b));
  auto normalize = [&](Value z) {
    Value n = tape.sqrt_t(tape.row_sum(tape.mul(z, z)));
    return tape.div_colvec(z, n);
  };
  Value zmn = normalize(z_motion);
  Value zcn = normalize(z_cond);
  Value mask_c = tape.constant(mask);
  auto direction = [&](Value a, Value bv) {
    Value logits = tape.add(tape.scale(tape.matmul_nt(a, bv), 1.0 / tau), mask_c);
    Value lse = tape.logsumexp_rows(logits);
    Value diag = tape.take_diag(logits);
    return tape.scale(tape.sum(tape.sub(lse, diag)), 1.0 / double(b));
  };
  return tape.scale(tape.add(direction(zmn, zcn), direction(zcn, zmn)), 0.5);
}

double contrastive_loss(const Tensor& z_motion, const Tensor& z_cond, double tau,
                        double threshold) {
  Tape tape;
  Tensor mask = negative_filter_mask(z_cond, threshold);
  Value loss =
      contrastive_loss_on(tape, tape.constant(z_motion), tape.constant(z_cond), tau, mask);
  return tape.val(loss)(0, 0);
}

Value representation_loss_on(Tape& tape, Value dec_x, Value dec_c, Value z_x, Value z_c,
                             Value x0_flat) {
  Value rec = tape.add(tape.smooth_l1_sum(dec_x, x0_flat), tape.smooth_l1_sum(dec_c, x0_flat));
  return tape.add(rec, tape.l1_sum(z_x, z_c));
}

double representation_loss(const RewardNet& net, const Tensor& x_t, int t, const Tensor& x0,
                           const synth::Condition& c) {
  if (x0.rows() != net.cfg.n_frames || x0.cols() != net.cfg.dim)
    throw std::invalid_argument("representation loss: clean motion shape " + x0.shape_str() +
                                " does not match model");
  Tape tape;
  std::vector<int> ids = net.encoder_param_ids();
  for (int id : net.condition_param_ids()) ids.push_back(id);
  for (int id : net.decoder_param_ids()) ids.push_back(id);
  LiftedParams lp = lift_subset(tape, net.ps, ids);
  Value z_x = net.encode_motion_on(tape, lp, tape.constant(x_t), t);
  Value z_c = net.encode_condition_on(tape, lp, synth::condition_tokens(c));
  Value loss = representation_loss_on(tape, net.decode_on(tape, lp, z_x),
                                      net.decode_on(tape, lp, z_c), z_x, z_c,
                                      tape.constant(flatten_row(x0)));
  return tape.val(loss)(0, 0);
}

double clean_contrastive_loss(const RewardNet& net, const synth::Dataset& data, double tau,
                              double threshold, int batch) {
  if (data.pairs.empty()) throw std::invalid_argument("clean contrastive loss: empty dataset");
  if (batch < 2) throw std::invalid_argument("clean contrastive loss: batch must be >= 2");
  const int n = static_cast<int>(data.pairs.size());
  double weighted = 0.0;
  int counted = 0;
  for (int start = 0; start < n; start += batch) {
    const int b = std::min(batch, n - start);
    if (b < 2) break;
    Tensor zm = Tensor::zeros({b, net.cfg.d_z});
    Tensor zc = Tensor::zeros({b, net.cfg.d_z});
    for (int i = 0; i < b; ++i) {
      const auto& pr = data.pairs[start + i];
      Tensor zx = encode_motion(net, pr.frames, 0);
      Tensor zcv = encode_condition(net, pr.cond);
      for (int k = 0; k < net.cfg.d_z; ++k) {
        zm(i, k) = zx.data[k];
        zc(i, k) = zcv.data[k];
      }
    }
    weighted += contrastive_loss(zm, zc, tau, threshold) * b;
    counted += b;
  }
  return weighted / double(counted);
}

RewardNet train_reward_model(const synth::Dataset& train, const synth::Dataset* val,
                             const diffusion::NoiseSchedule& sched, const RewardTrainConfig& cfg,
                             RewardTrainStats* stats) {
  if (train.pairs.empty()) throw std::invalid_argument("reward training: empty dataset");
  if (cfg.omega < 0.0 || cfg.omega > 1.0)
    throw std::invalid_argument("reward training: clean-motion probability must be in [0, 1]");
  const int t_max = cfg.t_max < 0 ? sched.T : cfg.t_max;
  if (cfg.t_min < 0 || cfg.t_min > t_max || t_max > sched.T)
    throw std::invalid_argument("reward training: need 0 <= t_min <= t_max <= T");
  if (cfg.batch < 2) throw std::invalid_argument("reward training: batch must be >= 2");

  RewardConfig rc;
  rc.n_frames = train.n_frames;
  rc.dim = train.dim;
  rc.T = sched.T;
  RewardNet net = RewardNet::init(rc, cfg.seed);

  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.weight_decay = cfg.weight_decay;
  Adam opt(net.ps, ac);

  RngStream shuffle_stream(cfg.seed, 0x53485546u);
  RngStream branch_stream(cfg.seed, 0x4252414Eu);
  RngStream noise_stream(cfg.seed, 0x4E4F4953u);

  std::set<int> seen_t;
  int64_t clean_count = 0, total_count = 0;
  if (stats != nullptr && val != nullptr)
    stats->val_contrastive.push_back(
        clean_contrastive_loss(net, *val, cfg.tau, cfg.neg_threshold));

  const int n = static_cast<int>(train.pairs.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  double initial_epoch_loss = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_stream.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }
    double epoch_weighted = 0.0;
    int epoch_counted = 0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int b = std::min(cfg.batch, n - start);
      if (b < 2) break;
      Tape tape;
      LiftedParams lp = lift(tape, net.ps, /*requires_grad=*/true);
      std::vector<Value> zx_rows, zc_rows;
      Value rep_sum;
      bool have_rep = false;
      Tensor zc_vals = Tensor::zeros({b, rc.d_z});
      for (int i = 0; i < b; ++i) {
        const auto& pr = train.pairs[order[start + i]];
        double u = branch_stream.uniform01_open();
        int t = u <= cfg.omega ? 0 : static_cast<int>(branch_stream.uniform_int(cfg.t_min, t_max));
        ++total_count;
        if (t == 0)
          ++clean_count;
        else
          seen_t.insert(t);
        Tensor x_t = pr.frames;
        if (t > 0) {
          Tensor eps = Tensor::zeros(pr.frames.shape);
          for (double& e : eps.data) e = noise_stream.gaussian();
          x_t = diffusion::forward_noise(pr.frames, t, eps, sched);
        }
        Value z_x = net.encode_motion_on(tape, lp, tape.constant(x_t), t);
        Value z_c = net.encode_condition_on(tape, lp, synth::condition_tokens(pr.cond));
        Value rep = representation_loss_on(tape, net.decode_on(tape, lp, z_x),
                                           net.decode_on(tape, lp, z_c), z_x, z_c,
                                           tape.constant(flatten_row(pr.frames)));
        rep_sum = have_rep ? tape.add(rep_sum, rep) : rep;
        have_rep = true;
        zx_rows.push_back(z_x);
        zc_rows.push_back(z_c);
        const Tensor& zcv = tape.val(z_c);
        for (int k = 0; k < rc.d_z; ++k) zc_vals(i, k) = zcv.data[k];
      }
      Value zm = tape.concat_rows(zx_rows);
      Value zc = tape.concat_rows(zc_rows);
      Tensor mask = negative_filter_mask(zc_vals, cfg.neg_threshold);
      Value lc = contrastive_loss_on(tape, zm, zc, cfg.tau, mask);
      Value loss = tape.add(tape.scale(lc, cfg.lc_weight),
                            tape.scale(rep_sum, cfg.lr_weight / double(b)));
      double lv = tape.val(loss)(0, 0);
      if (!std::isfinite(lv))
        throw std::runtime_error("reward training hit a non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(start / cfg.batch));
      std::vector<Tensor> grads = tape.grad(loss, lp.v);
      if (cfg.grad_clip > 0.0) clip_global_l2(grads, cfg.grad_clip);
      opt.step(grads);
      epoch_weighted += lv * b;
      epoch_counted += b;
    }
    double epoch_loss = epoch_weighted / double(epoch_counted);
    if (epoch == 0) initial_epoch_loss = epoch_loss;
    if (epoch > 0 && std::isfinite(initial_epoch_loss) &&
        epoch_loss > 10.0 * std::max(initial_epoch_loss, 1e-6))
      throw std::runtime_error("reward training diverged at epoch " + std::to_string(epoch) +
                               " (loss " + std::to_string(epoch_loss) + " vs initial " +
                               std::to_string(initial_epoch_loss) + ")");
    if (stats != nullptr) {
      stats->epoch_loss.push_back(epoch_loss);
      if (val != nullptr)
        stats->val_contrastive.push_back(
            clean_contrastive_loss(net, *val, cfg.tau, cfg.neg_threshold));
    }
  }
  if (stats != nullptr) {
    stats->clean_count = clean_count;
    stats->total_count = total_count;
    stats->noised_t_values.assign(seen_t.begin(), seen_t.end());
  }
  return net;
}

}  // namespace reguide::reward
