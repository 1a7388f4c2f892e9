#include "reguide/guided_sampler.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace reguide::guided {

Mode mode_from_string(const std::string& s) {
  if (s == "off") return Mode::kOff;
  if (s == "unweighted") return Mode::kUnweighted;
  if (s == "theorem3") return Mode::kTheorem3;
  throw std::invalid_argument("unknown guidance mode '" + s +
                              "' (expected off, unweighted, or theorem3)");
}

std::string mode_to_string(Mode m) {
  switch (m) {
    case Mode::kOff: return "off";
    case Mode::kUnweighted: return "unweighted";
    case Mode::kTheorem3: return "theorem3";
  }
  return "?";
}

std::vector<int> sampling_steps(int T, int n) {
  if (n < 1 || n > T) throw std::invalid_argument("sampling_steps: need 1 <= n <= T");
  std::vector<int> ts(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    ts[static_cast<size_t>(i)] =
        static_cast<int>(static_cast<int64_t>(n - 1 - i) * T / n) + 1;
  return ts;
}

void validate_steps(const std::vector<int>& steps, int T) {
  if (steps.empty()) throw std::invalid_argument("sampling steps: empty schedule");
  for (size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 1 || steps[i] > T)
      throw std::invalid_argument("sampling steps: t=" + std::to_string(steps[i]) +
                                  " outside [1, " + std::to_string(T) + "]");
    if (i > 0 && steps[i] >= steps[i - 1])
      throw std::invalid_argument("sampling steps: schedule must be strictly decreasing");
  }
}

Tensor guided_step_core(const Tensor& x, int t_hi, int t_lo, const Tensor& eps_hat,
                        const Tensor* grad, Mode mode, const diffusion::NoiseSchedule& sched,
                        const Tensor& noise) {
  if (t_hi == 0) throw std::invalid_argument("guided step: t=0 is not a reverse step");
  if (t_hi < 1 || t_hi > sched.T)
    throw std::invalid_argument("guided step: t=" + std::to_string(t_hi) + " outside [1, " +
                                std::to_string(sched.T) + "]");
  if (t_lo < 0 || t_lo >= t_hi)
    throw std::invalid_argument("guided step: need 0 <= t_lo < t_hi");
  if (!x.same_shape(eps_hat) || !x.same_shape(noise))
    throw std::invalid_argument("guided step: shape mismatch");
  if (grad != nullptr && !x.same_shape(*grad))
    throw std::invalid_argument("guided step: gradient shape mismatch");

  double ab_hi = sched.alpha_bar_at(t_hi);
  double a_eff = ab_hi / sched.alpha_bar_at(t_lo);
  double b_eff = 1.0 - a_eff;
  double k_eps = b_eff / std::sqrt(1.0 - ab_hi);
  double k_noise = std::sqrt(b_eff);
  double inv = std::sqrt(a_eff);
  Tensor out = x;
  for (int64_t i = 0; i < out.numel(); ++i)
    out.data[i] = (x.data[i] - k_eps * eps_hat.data[i] + k_noise * noise.data[i]) / inv;
  if (mode != Mode::kOff && grad != nullptr) {
    double w = mode == Mode::kTheorem3 ? b_eff / inv : 1.0;
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += w * grad->data[i];
  }
  return out;
}

namespace {

// Evaluate, validate, and clip the reward gradient for one step.
GradEval eval_grad(const GradFn& grad_fn, const Tensor& x, int t, double grad_clip,
                   double* pre_clip_norm) {
  GradEval ge = grad_fn(x, t);
  if (!ge.grad.same_shape(x))
    throw std::runtime_error("reward gradient at step t=" + std::to_string(t) +
                             " has shape " + ge.grad.shape_str() + ", expected " + x.shape_str());
  double norm = 0.0;
  for (double g : ge.grad.data) {
    if (!std::isfinite(g))
      throw std::runtime_error("non-finite reward gradient at step t=" + std::to_string(t));
    norm += g * g;
  }
  norm = std::sqrt(norm);
  if (!std::isfinite(ge.value))
    throw std::runtime_error("non-finite reward value at step t=" + std::to_string(t));
  *pre_clip_norm = norm;
  if (grad_clip > 0.0 && norm > grad_clip) {
    double scale = grad_clip / norm;
    for (double& g : ge.grad.data) g *= scale;
  }
  return ge;
}

}  // namespace

Tensor sample_core(const std::vector<int>& shape, const EpsFn& eps_fn, const GradFn* grad_fn,
                   const diffusion::NoiseSchedule& sched, const GuidanceConfig& gcfg,
                   const NoiseFn& noise_fn, SampleTrace* trace) {
  validate_steps(gcfg.steps, sched.T);
  const bool guided = gcfg.mode != Mode::kOff && grad_fn != nullptr;
  Tensor x = noise_fn(shape);
  if (x.shape != shape) throw std::runtime_error("noise source returned a wrong shape");
  for (size_t k = 0; k < gcfg.steps.size(); ++k) {
    int t_hi = gcfg.steps[k];
    int t_lo = k + 1 < gcfg.steps.size() ? gcfg.steps[k + 1] : 0;
    Tensor eps_hat = eps_fn(x, t_hi);
    StepRecord rec;
    rec.t = t_hi;
    GradEval ge;
    if (guided) ge = eval_grad(*grad_fn, x, t_hi, gcfg.grad_clip, &rec.grad_norm);
    rec.reward = ge.value;
    Tensor noise = t_hi > 1 ? noise_fn(x.shape) : Tensor::zeros(x.shape);
    x = guided_step_core(x, t_hi, t_lo, eps_hat, guided ? &ge.grad : nullptr, gcfg.mode, sched,
                         noise);
    if (trace != nullptr) {
      if (gcfg.record_x) rec.x = x;
      trace->steps.push_back(std::move(rec));
    }
  }
  if (trace != nullptr) trace->final_motion = x;
  return x;
}

Tensor guided_step(const Tensor& x_t, int t, const synth::Condition& c,
                   const diffusion::DenoiserNet& den, const reward::RewardNet* rnet,
                   const Tensor* z_anchor, const diffusion::NoiseSchedule& sched,
                   const GuidanceConfig& gcfg, RngStream& stream) {
  if (t == 0) throw std::invalid_argument("guided step: t=0 is not a reverse step");
  std::vector<int> tokens = synth::condition_tokens(c);
  Tensor eps_hat = den.predict_cfg(x_t, t, tokens, gcfg.cfg_scale);
  const bool guided = gcfg.mode != Mode::kOff && (gcfg.mu != 0.0 || gcfg.eta != 0.0);
  GradEval ge;
  if (guided) {
    if (rnet == nullptr)
      throw std::invalid_argument("guided step: reward weights set but no reward model given");
    Tensor z_c = gcfg.mu != 0.0 ? reward::encode_condition(*rnet, c) : Tensor();
    GradFn fn = [&](const Tensor& x, int tt) {
      reward::RewardEval re = reward::reward_value_and_grad(
          *rnet, x, gcfg.reward_at_t0 ? 0 : tt, z_c, z_anchor, gcfg.mu, gcfg.eta);
      return GradEval{re.value, re.grad};
    };
    double pre = 0.0;
    ge = eval_grad(fn, x_t, t, gcfg.grad_clip, &pre);
  }
  Tensor noise = t > 1 ? sample_gaussian(x_t.shape, stream) : Tensor::zeros(x_t.shape);
  return guided_step_core(x_t, t, t - 1, eps_hat, guided ? &ge.grad : nullptr, gcfg.mode, sched,
                          noise);
}

SampleResult sample(const synth::Condition& c, const diffusion::DenoiserNet& den,
                    const reward::RewardNet* rnet, const retrieval::RetrievalIndex* index,
                    const diffusion::NoiseSchedule& sched, const GuidanceConfig& gcfg,
                    RngStream stream) {
  validate_steps(gcfg.steps, sched.T);
  const bool guided = gcfg.mode != Mode::kOff && (gcfg.mu != 0.0 || gcfg.eta != 0.0);
  if (guided && rnet == nullptr)
    throw std::invalid_argument("sample: reward weights set but no reward model given");

  std::vector<int> tokens = synth::condition_tokens(c);
  Tensor z_c, z_anchor;
  bool have_anchor = false;
  if (guided) {
    z_c = reward::encode_condition(*rnet, c);
    if (gcfg.eta != 0.0) {
      if (index == nullptr)
        throw std::invalid_argument("sample: motion-alignment weight set but no index given");
      retrieval::AnchorResult a = retrieve_anchor(*index, z_c);
      z_anchor = index->entries[static_cast<size_t>(a.ordinal)].z_motion;
      have_anchor = true;
    }
  }

  EpsFn eps_fn = [&](const Tensor& x, int t) {
    return den.predict_cfg(x, t, tokens, gcfg.cfg_scale);
  };
  GradFn grad_fn = [&](const Tensor& x, int t) {
    reward::RewardEval re =
        reward::reward_value_and_grad(*rnet, x, gcfg.reward_at_t0 ? 0 : t, z_c,
                                      have_anchor ? &z_anchor : nullptr, gcfg.mu, gcfg.eta);
    return GradEval{re.value, re.grad};
  };
  NoiseFn noise_fn = [&](const std::vector<int>& shape) {
    return sample_gaussian(shape, stream);
  };

  SampleResult res;
  res.motion = sample_core({den.cfg.n_frames, den.cfg.dim}, eps_fn, guided ? &grad_fn : nullptr,
                           sched, gcfg, noise_fn, &res.trace);
  return res;
}

std::vector<SampleResult> batch_sample(const std::vector<synth::Condition>& conds,
                                       const diffusion::DenoiserNet& den,
                                       const reward::RewardNet* rnet,
                                       const retrieval::RetrievalIndex* index,
                                       const diffusion::NoiseSchedule& sched,
                                       const GuidanceConfig& gcfg, uint64_t seed, int workers) {
  if (conds.empty()) throw std::invalid_argument("batch_sample: empty condition list");
  const size_t n = conds.size();
  std::vector<SampleResult> results(n);
  auto run_one = [&](size_t i) {
    uint64_t sid = synth::condition_hash(conds[i]);
    results[i] = sample(conds[i], den, rnet, index, sched, gcfg, RngStream(seed, sid));
    results[i].trace.seed = seed;
    results[i].trace.stream_id = sid;
  };
  if (workers <= 1 || n == 1) {
    for (size_t i = 0; i < n; ++i) run_one(i);
    return results;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex err_mu;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        run_one(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  int n_threads = std::min<int>(workers, static_cast<int>(n));
  threads.reserve(static_cast<size_t>(n_threads));
  for (int w = 0; w < n_threads; ++w) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

}  // namespace reguide::guided
