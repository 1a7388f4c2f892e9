#include "reguide/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "reguide/optim.hpp"

namespace reguide::diffusion {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<size_t>(T));
  s.alpha.resize(static_cast<size_t>(T));
  s.alpha_bar.resize(static_cast<size_t>(T));
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    double b = T == 1 ? beta_start
                      : beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(T - 1);
    s.beta[static_cast<size_t>(t - 1)] = b;
    s.alpha[static_cast<size_t>(t - 1)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<size_t>(t - 1)] = prod;
  }
  for (int t = 2; t <= T; ++t)
    if (!(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1)))
      throw std::runtime_error("make_schedule: alpha_bar not strictly decreasing");
  return s;
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t < 0 || t > sched.T)
    throw std::invalid_argument("forward_noise: t=" + std::to_string(t) + " outside [0," +
                                std::to_string(sched.T) + "]");
  if (!x0.same_shape(eps))
    throw std::invalid_argument("forward_noise: eps shape " + eps.shape_str() +
                                " does not match x0 " + x0.shape_str());
  double ab = sched.alpha_bar_at(t);
  double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
  Tensor out = x0;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = c0 * x0.data[i] + c1 * eps.data[i];
  return out;
}

Tensor cfg_epsilon(const Tensor& eps_cond, const Tensor& eps_uncond, double s) {
  if (!eps_cond.same_shape(eps_uncond))
    throw std::invalid_argument("cfg_epsilon: shape mismatch");
  Tensor out = eps_uncond;
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data[i] = eps_uncond.data[i] + s * (eps_cond.data[i] - eps_uncond.data[i]);
  return out;
}

Tensor ddpm_mean(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T)
    throw std::invalid_argument("ddpm_mean: t=" + std::to_string(t) + " outside [1," +
                                std::to_string(sched.T) + "]");
  if (!x_t.same_shape(eps_pred)) throw std::invalid_argument("ddpm_mean: shape mismatch");
  double c = sched.beta_at(t) / std::sqrt(1.0 - sched.alpha_bar_at(t));
  Tensor out = x_t;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = x_t.data[i] - c * eps_pred.data[i];
  return out;
}

Tensor timestep_embedding(int t, int d) {
  if (d < 2 || d % 2 != 0) throw std::invalid_argument("timestep_embedding: d must be even");
  Tensor e({1, d});
  int half = d / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * i / static_cast<double>(half));
    e.at(0, 2 * i) = std::sin(t * freq);
    e.at(0, 2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

DenoiserNet DenoiserNet::init(const DenoiserConfig& cfg, uint64_t seed) {
  DenoiserNet net;
  net.cfg = cfg;
  RngStream s(seed, 0xDE401u);
  int in = cfg.n_frames * cfg.dim + cfg.t_emb + synth::kCondTokens * cfg.tok_emb;
  auto w = [&](int a, int b) { return randn_init({a, b}, 1.0 / std::sqrt(a), s); };
  net.tok_table = net.ps.add("tok_table", randn_init({cfg.vocab, cfg.tok_emb}, 0.02, s));
  net.null_emb =
      net.ps.add("null_emb", randn_init({1, synth::kCondTokens * cfg.tok_emb}, 0.02, s));
  net.w_in = net.ps.add("w_in", w(in, cfg.hidden));
  net.b_in = net.ps.add("b_in", Tensor::zeros({1, cfg.hidden}));
  net.w_b1 = net.ps.add("w_b1", w(cfg.hidden, cfg.hidden));
  net.b_b1 = net.ps.add("b_b1", Tensor::zeros({1, cfg.hidden}));
  net.w_b2 = net.ps.add("w_b2", w(cfg.hidden, cfg.hidden));
  net.b_b2 = net.ps.add("b_b2", Tensor::zeros({1, cfg.hidden}));
  net.w_out = net.ps.add("w_out", randn_init({cfg.hidden, cfg.n_frames * cfg.dim},
                                             0.1 / std::sqrt(cfg.hidden), s));
  net.b_out = net.ps.add("b_out", Tensor::zeros({1, cfg.n_frames * cfg.dim}));
  return net;
}

Value DenoiserNet::forward(Tape& tape, const LiftedParams& lp, Value x_flat, int t,
                           const std::vector<int>* tokens) const {
  if (t < 0 || t > cfg.T)
    throw std::invalid_argument("denoiser forward: t=" + std::to_string(t) + " outside [0," +
                                std::to_string(cfg.T) + "]");
  Value temb = tape.constant(timestep_embedding(t, cfg.t_emb));
  Value cemb;
  if (tokens == nullptr) {
    cemb = lp[null_emb];
  } else {
    Value rows = tape.embedding_rows(lp[tok_table], *tokens);
    cemb = tape.reshape(rows, {1, static_cast<int>(tokens->size()) * cfg.tok_emb});
  }
  Value in = tape.concat_cols({x_flat, temb, cemb});
  Value h = tape.tanh_t(tape.add(tape.matmul(in, lp[w_in]), lp[b_in]));
  h = tape.add(h, tape.tanh_t(tape.add(tape.matmul(h, lp[w_b1]), lp[b_b1])));
  h = tape.add(h, tape.tanh_t(tape.add(tape.matmul(h, lp[w_b2]), lp[b_b2])));
  return tape.add(tape.matmul(h, lp[w_out]), lp[b_out]);
}

namespace {
// Eager row-vector linear: y[1,b] = x[1,a] * W[a,b] + bias[1,b].
void linear_row(const std::vector<double>& x, const Tensor& W, const Tensor& bias,
                std::vector<double>& y) {
  int a = W.rows(), b = W.cols();
  y.assign(static_cast<size_t>(b), 0.0);
  for (int i = 0; i < a; ++i) {
    double xi = x[static_cast<size_t>(i)];
    if (xi == 0.0) continue;
    const double* wrow = &W.data[static_cast<size_t>(i) * b];
    for (int j = 0; j < b; ++j) y[static_cast<size_t>(j)] += xi * wrow[j];
  }
  for (int j = 0; j < b; ++j) y[static_cast<size_t>(j)] += bias.at(0, j);
}
}  // namespace

Tensor DenoiserNet::predict(const Tensor& x, int t, const std::vector<int>* tokens) const {
  if (x.rows() != cfg.n_frames || x.cols() != cfg.dim)
    throw std::invalid_argument("denoiser predict: x shape " + x.shape_str() +
                                " does not match configured motion shape");
  if (t < 0 || t > cfg.T)
    throw std::invalid_argument("denoiser predict: t=" + std::to_string(t) + " outside [0," +
                                std::to_string(cfg.T) + "]");
  int nd = cfg.n_frames * cfg.dim;
  int in_dim = nd + cfg.t_emb + synth::kCondTokens * cfg.tok_emb;
  std::vector<double> in(static_cast<size_t>(in_dim));
  for (int i = 0; i < nd; ++i) in[static_cast<size_t>(i)] = x.data[static_cast<size_t>(i)];
  Tensor temb = timestep_embedding(t, cfg.t_emb);
  for (int i = 0; i < cfg.t_emb; ++i) in[static_cast<size_t>(nd + i)] = temb.data[static_cast<size_t>(i)];
  int coff = nd + cfg.t_emb;
  if (tokens == nullptr) {
    const Tensor& ne = ps.tensors[static_cast<size_t>(null_emb)];
    for (int i = 0; i < ne.cols(); ++i) in[static_cast<size_t>(coff + i)] = ne.at(0, i);
  } else {
    const Tensor& tt = ps.tensors[static_cast<size_t>(tok_table)];
    for (size_t k = 0; k < tokens->size(); ++k) {
      int id = (*tokens)[k];
      if (id < 0 || id >= tt.rows())
        throw std::invalid_argument("denoiser predict: token id out of range");
      for (int j = 0; j < cfg.tok_emb; ++j)
        in[static_cast<size_t>(coff) + k * static_cast<size_t>(cfg.tok_emb) +
           static_cast<size_t>(j)] = tt.at(id, j);
    }
  }

  std::vector<double> h, tmp;
  linear_row(in, ps.tensors[static_cast<size_t>(w_in)], ps.tensors[static_cast<size_t>(b_in)], h);
  for (auto& v : h) v = std::tanh(v);
  linear_row(h, ps.tensors[static_cast<size_t>(w_b1)], ps.tensors[static_cast<size_t>(b_b1)], tmp);
  for (size_t i = 0; i < h.size(); ++i) h[i] += std::tanh(tmp[i]);
  linear_row(h, ps.tensors[static_cast<size_t>(w_b2)], ps.tensors[static_cast<size_t>(b_b2)], tmp);
  for (size_t i = 0; i < h.size(); ++i) h[i] += std::tanh(tmp[i]);
  std::vector<double> out;
  linear_row(h, ps.tensors[static_cast<size_t>(w_out)], ps.tensors[static_cast<size_t>(b_out)], out);
  return Tensor::from({cfg.n_frames, cfg.dim}, std::move(out));
}

Tensor DenoiserNet::predict_cfg(const Tensor& x, int t, const std::vector<int>& tokens,
                                double s) const {
  if (s == 1.0) return predict(x, t, &tokens);
  Tensor eu = predict(x, t, nullptr);
  if (s == 0.0) return eu;
  Tensor ec = predict(x, t, &tokens);
  return cfg_epsilon(ec, eu, s);
}

DenoiserNet train_denoiser(const synth::Dataset& train, const NoiseSchedule& sched,
                           const TrainDenoiserConfig& cfg, DenoiserTrainLog* log) {
  if (train.pairs.empty()) throw std::invalid_argument("train_denoiser: empty train split");

  DenoiserConfig dc;
  dc.n_frames = train.n_frames;
  dc.dim = train.dim;
  dc.T = sched.T;
  DenoiserNet net = DenoiserNet::init(dc, cfg.seed);
  AdamConfig ac;
  ac.lr = cfg.lr;
  Adam opt(net.ps, ac);
  RngStream stream(cfg.seed, 0xDE402u);
  int nd = dc.n_frames * dc.dim;
  size_t snap_idx = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    Tape tape;
    LiftedParams lp = lift(tape, net.ps, true);
    std::vector<Value> losses;
    losses.reserve(static_cast<size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      const synth::Pair& pair =
          train.pairs[static_cast<size_t>(stream.uniform_int(0, static_cast<int64_t>(train.pairs.size()) - 1))];
      int t = static_cast<int>(stream.uniform_int(1, sched.T));
      Tensor eps = sample_gaussian(pair.frames.shape, stream);
      Tensor x_t = forward_noise(pair.frames, t, eps, sched);
      bool drop = stream.uniform01() < cfg.p_uncond;
      std::vector<int> tokens = synth::condition_tokens(pair.cond);

      Value x_flat = tape.constant(Tensor::from({1, nd}, x_t.data));
      Value pred = net.forward(tape, lp, x_flat, t, drop ? nullptr : &tokens);
      Value eps_v = tape.constant(Tensor::from({1, nd}, eps.data));
      Value diff = tape.sub(pred, eps_v);
      losses.push_back(tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / nd));
    }
    Value loss = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) loss = tape.add(loss, losses[i]);
    loss = tape.scale(loss, 1.0 / cfg.batch);

    double lv = tape.val(loss).data[0];
    if (!std::isfinite(lv))
      throw std::runtime_error("train_denoiser: non-finite loss at step " + std::to_string(step));
    if (log) {
      if (step == 0) log->initial_loss = lv;
      if (step % cfg.log_every == 0) log->step_loss.push_back(lv);
      log->final_loss = lv;
    }

    std::vector<Tensor> grads = tape.grad(loss, lp.v);
    if (cfg.grad_clip > 0.0) clip_global_l2(grads, cfg.grad_clip);
    opt.step(grads);

    if (cfg.on_snapshot && snap_idx < cfg.snapshot_steps.size() &&
        step + 1 == cfg.snapshot_steps[snap_idx]) {
      cfg.on_snapshot(step + 1, net);
      ++snap_idx;
    }
  }
  return net;
}

Tensor vanilla_sample(const DenoiserNet& net, const std::vector<int>& tokens, double cfg_scale,
                      const NoiseSchedule& sched, int n_steps, RngStream stream) {
  if (n_steps < 1 || n_steps > sched.T)
    throw std::invalid_argument("vanilla_sample: n_steps outside [1, T]");
  // Evenly strided decreasing timesteps ending at 1.
  std::vector<int> ts(static_cast<size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i)
    ts[static_cast<size_t>(i)] =
        static_cast<int>(static_cast<int64_t>(n_steps - 1 - i) * sched.T / n_steps) + 1;

  Tensor x = sample_gaussian({net.cfg.n_frames, net.cfg.dim}, stream);
  for (size_t k = 0; k < ts.size(); ++k) {
    int t_hi = ts[k];
    int t_lo = k + 1 < ts.size() ? ts[k + 1] : 0;
    double ab_hi = sched.alpha_bar_at(t_hi);
    double a_eff = ab_hi / sched.alpha_bar_at(t_lo);
    double b_eff = 1.0 - a_eff;
    Tensor eps_pred = net.predict_cfg(x, t_hi, tokens, cfg_scale);
    Tensor noise = t_hi > 1 ? sample_gaussian(x.shape, stream) : Tensor::zeros(x.shape);
    double k_eps = b_eff / std::sqrt(1.0 - ab_hi);
    double k_noise = std::sqrt(b_eff);
    double inv = std::sqrt(a_eff);
    for (int64_t i = 0; i < x.numel(); ++i)
      x.data[i] = (x.data[i] - k_eps * eps_pred.data[i] + k_noise * noise.data[i]) / inv;
  }
  return x;
}

}  // namespace reguide::diffusion
