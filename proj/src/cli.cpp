#include "reguide/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "reguide/checkpoint.hpp"
#include "reguide/diffusion.hpp"
#include "reguide/guided_sampler.hpp"
#include "reguide/io.hpp"
#include "reguide/metrics.hpp"
#include "reguide/retrieval.hpp"
#include "reguide/reward.hpp"
#include "reguide/synthdata.hpp"
#include "reguide/verify_analytic.hpp"

namespace reguide::cli {

namespace {

using nlohmann::json;

uint64_t env_seed_fallback() {
  const char* env = std::getenv("REGUIDE_SEED");
  if (env == nullptr || *env == '\0') return 0;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw std::invalid_argument("REGUIDE_SEED is set but is not an unsigned integer");
  }
}

struct CommonFlags {
  std::string out = ".";
  uint64_t seed = 0;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& c) {
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "RNG seed (falls back to REGUIDE_SEED)")
      ->capture_default_str();
  cmd->add_flag("--quiet", c.quiet, "suppress progress output");
}

struct ScheduleFlags {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

void add_schedule(CLI::App* cmd, ScheduleFlags& s) {
  cmd->add_option("--t", s.T, "diffusion timesteps")->capture_default_str();
  cmd->add_option("--beta-start", s.beta_start, "linear schedule start")->capture_default_str();
  cmd->add_option("--beta-end", s.beta_end, "linear schedule end")->capture_default_str();
}

json schedule_config(const ScheduleFlags& s) {
  return json{{"T", s.T}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

// Loads a file once, returning bytes and recording its content hash.
std::vector<uint8_t> read_input(const std::string& path, const std::string& role, json& inputs) {
  std::vector<uint8_t> bytes = io::read_file(path);
  inputs[role] = io::hex64(io::fnv1a64(bytes));
  return bytes;
}

void write_output(const std::string& dir, const std::string& name,
                  const std::vector<uint8_t>& bytes, json& outputs) {
  io::write_file((std::filesystem::path(dir) / name).string(), bytes);
  outputs[name] = io::hex64(io::fnv1a64(bytes));
}

void write_text_output(const std::string& dir, const std::string& name, const std::string& text,
                       json& outputs) {
  write_output(dir, name, std::vector<uint8_t>(text.begin(), text.end()), outputs);
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& config,
                    const json& inputs, const json& outputs) {
  json m{{"command", command}, {"config", config}, {"inputs", inputs}, {"outputs", outputs}};
  io::write_text_file((std::filesystem::path(out_dir) / (command + "-manifest.json")).string(),
                      m.dump(2) + "\n");
}

// "<class>:<speed>:<curvature>:<amplitude>", class by name or numeric id.
synth::Condition parse_condition_spec(const std::string& spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4)
    throw std::invalid_argument("condition spec '" + spec +
                                "' must be <class>:<speed>:<curvature>:<amplitude>");
  synth::Condition c;
  try {
    c.class_id = synth::class_id_from_name(parts[0]);
  } catch (const std::invalid_argument&) {
    try {
      c.class_id = std::stoi(parts[0]);
    } catch (const std::exception&) {
      throw std::invalid_argument("condition spec: unknown class '" + parts[0] + "'");
    }
  }
  try {
    c.speed = std::stod(parts[1]);
    c.curvature = std::stod(parts[2]);
    c.amplitude = std::stod(parts[3]);
  } catch (const std::exception&) {
    throw std::invalid_argument("condition spec '" + spec + "' has a non-numeric parameter");
  }
  return c;
}

json retrieval_json(const retrieval::RetrievalReport& rep) {
  json ks = json::array(), m2t = json::array(), t2m = json::array();
  for (size_t i = 0; i < retrieval::kRetrievalKs.size(); ++i) {
    ks.push_back(retrieval::kRetrievalKs[i]);
    m2t.push_back(rep.motion_to_cond[i]);
    t2m.push_back(rep.cond_to_motion[i]);
  }
  return json{{"ks", ks},
              {"motion_to_cond", m2t},
              {"cond_to_motion", t2m},
              {"batch", rep.batch},
              {"n_batches", rep.n_batches},
              {"queries", rep.queries},
              {"noise_t", rep.noise_t},
              {"seed", rep.seed}};
}

void print_retrieval(const retrieval::RetrievalReport& rep) {
  std::cout << "  k     motion->cond   cond->motion\n";
  for (size_t i = 0; i < retrieval::kRetrievalKs.size(); ++i) {
    char line[80];
    std::snprintf(line, sizeof(line), "  %-5d %12.4f %14.4f\n", retrieval::kRetrievalKs[i],
                  rep.motion_to_cond[i], rep.cond_to_motion[i]);
    std::cout << line;
  }
  std::cout << "  queries: " << rep.queries << " (batch " << rep.batch << ", noise_t "
            << rep.noise_t << ")\n";
}

// ---------------------------------------------------------------------------

int run_gen_data(const CommonFlags& c, int n_train, int n_val, int n_test, int frames) {
  synth::Splits s = synth::build_splits(n_train, n_val, n_test, frames, c.seed);
  json inputs = json::object(), outputs = json::object();
  write_output(c.out, "train.rgds", synth::serialize_dataset(s.train), outputs);
  write_output(c.out, "val.rgds", synth::serialize_dataset(s.val), outputs);
  write_output(c.out, "test.rgds", synth::serialize_dataset(s.test), outputs);
  json config{{"train", n_train}, {"val", n_val}, {"test", n_test}, {"frames", frames},
              {"seed", c.seed}};
  write_manifest(c.out, "gen-data", config, inputs, outputs);
  if (!c.quiet)
    std::cout << "wrote " << n_train << "/" << n_val << "/" << n_test
              << " train/val/test pairs to " << c.out << "\n";
  return 0;
}

int run_train_denoiser(const CommonFlags& c, const std::string& dataset_path,
                       const ScheduleFlags& sf, diffusion::TrainDenoiserConfig tc) {
  json inputs = json::object(), outputs = json::object();
  synth::Dataset ds =
      synth::deserialize_dataset(read_input(dataset_path, "dataset", inputs), dataset_path);
  diffusion::NoiseSchedule sched = diffusion::make_schedule(sf.T, sf.beta_start, sf.beta_end);
  tc.seed = c.seed;
  diffusion::DenoiserTrainLog log;
  diffusion::DenoiserNet net = diffusion::train_denoiser(ds, sched, tc, &log);
  write_output(c.out, "denoiser.rgck",
               ckpt::serialize_checkpoint(ckpt::denoiser_to_checkpoint(net)), outputs);
  json config{{"steps", tc.steps},         {"batch", tc.batch},
              {"lr", tc.lr},               {"p_uncond", tc.p_uncond},
              {"grad_clip", tc.grad_clip}, {"schedule", schedule_config(sf)},
              {"seed", c.seed}};
  write_manifest(c.out, "train-denoiser", config, inputs, outputs);
  if (!c.quiet)
    std::cout << "denoiser trained: loss " << log.initial_loss << " -> " << log.final_loss
              << " over " << tc.steps << " steps\n";
  return 0;
}

int run_train_reward(const CommonFlags& c, const std::string& dataset_path,
                     const std::string& val_path, const ScheduleFlags& sf,
                     reward::RewardTrainConfig rc) {
  json inputs = json::object(), outputs = json::object();
  synth::Dataset ds =
      synth::deserialize_dataset(read_input(dataset_path, "dataset", inputs), dataset_path);
  std::optional<synth::Dataset> val;
  if (!val_path.empty())
    val = synth::deserialize_dataset(read_input(val_path, "val_dataset", inputs), val_path);
  diffusion::NoiseSchedule sched = diffusion::make_schedule(sf.T, sf.beta_start, sf.beta_end);
  rc.seed = c.seed;
  reward::RewardTrainStats stats;
  reward::RewardNet net =
      reward::train_reward_model(ds, val ? &*val : nullptr, sched, rc, &stats);
  write_output(c.out, "reward.rgck", ckpt::serialize_checkpoint(ckpt::reward_to_checkpoint(net)),
               outputs);
  json config{{"epochs", rc.epochs},
              {"batch", rc.batch},
              {"lr", rc.lr},
              {"omega", rc.omega},
              {"tau", rc.tau},
              {"neg_threshold", rc.neg_threshold},
              {"t_min", rc.t_min},
              {"t_max", rc.t_max},
              {"grad_clip", rc.grad_clip},
              {"weight_decay", rc.weight_decay},
              {"schedule", schedule_config(sf)},
              {"seed", c.seed}};
  write_manifest(c.out, "train-reward", config, inputs, outputs);
  if (!c.quiet) {
    std::cout << "reward model trained: epoch loss " << stats.epoch_loss.front() << " -> "
              << stats.epoch_loss.back() << "; clean fraction "
              << double(stats.clean_count) / double(stats.total_count) << "\n";
    if (!stats.val_contrastive.empty())
      std::cout << "val contrastive: " << stats.val_contrastive.front() << " -> "
                << stats.val_contrastive.back() << "\n";
  }
  return 0;
}

int run_build_index(const CommonFlags& c, const std::string& dataset_path,
                    const std::string& ckpt_path) {
  json inputs = json::object(), outputs = json::object();
  synth::Dataset ds =
      synth::deserialize_dataset(read_input(dataset_path, "dataset", inputs), dataset_path);
  std::vector<uint8_t> ck_bytes = read_input(ckpt_path, "reward_ckpt", inputs);
  ckpt::Checkpoint ck = ckpt::deserialize_checkpoint(ck_bytes);
  reward::RewardNet net = ckpt::reward_from_checkpoint(ck);
  retrieval::RetrievalIndex idx = retrieval::build_index(net, ds, io::fnv1a64(ck_bytes));
  write_output(c.out, "index.rgix", retrieval::serialize_index(idx), outputs);
  json config{{"entries", static_cast<int>(idx.entries.size())}, {"seed", c.seed}};
  write_manifest(c.out, "build-index", config, inputs, outputs);
  if (!c.quiet) std::cout << "indexed " << idx.entries.size() << " motions\n";
  return 0;
}

int run_sample(const CommonFlags& c, const std::string& cond_spec, const std::string& conds_from,
               int limit, const std::string& den_path, const std::string& rew_path,
               const std::string& index_path, const ScheduleFlags& sf, double mu, double eta,
               double cfg_scale, const std::string& mode_str, int n_steps, double grad_clip,
               int workers, bool reward_t0, const std::string& trace_path) {
  json inputs = json::object(), outputs = json::object();
  diffusion::DenoiserNet den = ckpt::denoiser_from_checkpoint(
      ckpt::deserialize_checkpoint(read_input(den_path, "denoiser_ckpt", inputs)));
  diffusion::NoiseSchedule sched = diffusion::make_schedule(sf.T, sf.beta_start, sf.beta_end);

  guided::GuidanceConfig gcfg;
  gcfg.mu = mu;
  gcfg.eta = eta;
  gcfg.cfg_scale = cfg_scale;
  gcfg.mode = guided::mode_from_string(mode_str);
  gcfg.steps = guided::sampling_steps(sched.T, n_steps);
  gcfg.grad_clip = grad_clip;
  gcfg.reward_at_t0 = reward_t0;

  std::optional<reward::RewardNet> rnet;
  uint64_t reward_hash = 0;
  if (!rew_path.empty()) {
    std::vector<uint8_t> bytes = read_input(rew_path, "reward_ckpt", inputs);
    reward_hash = io::fnv1a64(bytes);
    rnet = ckpt::reward_from_checkpoint(ckpt::deserialize_checkpoint(bytes));
  }
  const bool guided_run = gcfg.mode != guided::Mode::kOff && (mu != 0.0 || eta != 0.0);
  if (guided_run && !rnet)
    throw std::invalid_argument("sampling with reward guidance needs --reward-ckpt");

  std::optional<retrieval::RetrievalIndex> index;
  if (!index_path.empty()) {
    index = retrieval::deserialize_index(read_input(index_path, "index", inputs));
    retrieval::check_index_hash(*index, reward_hash);
  }
  if (guided_run && eta != 0.0 && !index)
    throw std::invalid_argument("motion-aligned guidance (eta != 0) needs --index");

  std::vector<synth::Condition> conds;
  if (!cond_spec.empty()) {
    conds.push_back(parse_condition_spec(cond_spec));
  } else {
    synth::Dataset src =
        synth::deserialize_dataset(read_input(conds_from, "conditions", inputs), conds_from);
    for (const auto& pr : src.pairs) {
      conds.push_back(pr.cond);
      if (limit > 0 && static_cast<int>(conds.size()) >= limit) break;
    }
  }

  std::vector<guided::SampleResult> results =
      guided::batch_sample(conds, den, rnet ? &*rnet : nullptr, index ? &*index : nullptr, sched,
                           gcfg, c.seed, workers);

  synth::Dataset out_ds;
  out_ds.n_frames = den.cfg.n_frames;
  out_ds.dim = den.cfg.dim;
  out_ds.split = synth::Split::kTest;
  out_ds.base_seed = c.seed;
  for (size_t i = 0; i < results.size(); ++i) {
    synth::Pair pr;
    pr.cond = conds[i];
    pr.seed = results[i].trace.stream_id;
    pr.frames = results[i].motion;
    out_ds.pairs.push_back(std::move(pr));
  }
  write_output(c.out, "samples.rgds", synth::serialize_dataset(out_ds), outputs);

  if (!trace_path.empty()) {
    if (results.size() != 1)
      throw std::invalid_argument("--trace expects a single --cond run");
    std::string text;
    for (const auto& rec : results[0].trace.steps) {
      json line{{"t", rec.t}, {"reward", rec.reward}, {"grad_norm", rec.grad_norm}};
      text += line.dump() + "\n";
    }
    io::write_text_file(trace_path, text);
    outputs[std::filesystem::path(trace_path).filename().string()] =
        io::hex64(io::fnv1a64(std::vector<uint8_t>(text.begin(), text.end())));
  }

  json config{{"mu", mu},
              {"eta", eta},
              {"cfg", cfg_scale},
              {"mode", mode_str},
              {"steps", n_steps},
              {"grad_clip", grad_clip},
              {"workers", workers},
              {"reward_t0", reward_t0},
              {"limit", limit},
              {"n_conditions", static_cast<int>(conds.size())},
              {"schedule", schedule_config(sf)},
              {"seed", c.seed}};
  write_manifest(c.out, "sample", config, inputs, outputs);
  if (!c.quiet) std::cout << "sampled " << results.size() << " motions\n";
  return 0;
}

int run_verify(const CommonFlags& c, double lambda, double target, double m, double v,
               const std::string& mode_str, int samples, int steps, double tilt_gain,
               const ScheduleFlags& sf) {
  verify::AnalyticCheckConfig vc;
  vc.spec = verify::GaussianSpec{{m}, {v}};
  vc.reward = verify::QuadraticReward{{target}, lambda};
  vc.mode = guided::mode_from_string(mode_str);
  vc.n_samples = samples;
  vc.steps = steps;
  vc.tilt_gain = tilt_gain;
  vc.seed = c.seed;
  diffusion::NoiseSchedule sched = diffusion::make_schedule(sf.T, sf.beta_start, sf.beta_end);
  verify::AnalyticReport rep = verify::run_analytic_check(vc, sched);
  std::cout << rep.summary();

  json inputs = json::object(), outputs = json::object();
  json rj{{"pass", rep.pass},
          {"mode", guided::mode_to_string(rep.mode)},
          {"steps", rep.steps},
          {"n_samples", rep.n_samples},
          {"seed", rep.seed},
          {"target_mean", rep.target.m},
          {"target_var", rep.target.v},
          {"empirical_mean", rep.emp_mean},
          {"empirical_var", rep.emp_var},
          {"mean_err", rep.mean_err},
          {"mean_tol", rep.mean_tol},
          {"var_rel_err", rep.var_rel_err}};
  write_text_output(c.out, "verify.json", rj.dump(2) + "\n", outputs);
  json config{{"lambda", lambda},   {"target", target},
              {"m", m},             {"v", v},
              {"mode", mode_str},   {"samples", samples},
              {"steps", steps},     {"tilt_gain", tilt_gain},
              {"schedule", schedule_config(sf)}, {"seed", c.seed}};
  write_manifest(c.out, "verify", config, inputs, outputs);
  return rep.pass ? 0 : 1;
}

int run_eval_retrieval(const CommonFlags& c, const std::string& dataset_path,
                       const std::string& ckpt_path, int batch, int noise_t,
                       const ScheduleFlags& sf) {
  json inputs = json::object(), outputs = json::object();
  synth::Dataset ds =
      synth::deserialize_dataset(read_input(dataset_path, "dataset", inputs), dataset_path);
  reward::RewardNet net = ckpt::reward_from_checkpoint(
      ckpt::deserialize_checkpoint(read_input(ckpt_path, "reward_ckpt", inputs)));
  diffusion::NoiseSchedule sched = diffusion::make_schedule(sf.T, sf.beta_start, sf.beta_end);
  retrieval::RetrievalReport rep = retrieval::retrieval_eval(net, ds, batch, noise_t, &sched,
                                                             c.seed);
  if (!c.quiet) print_retrieval(rep);
  write_text_output(c.out, "retrieval.json", retrieval_json(rep).dump(2) + "\n", outputs);
  json config{{"batch", batch}, {"noise_t", noise_t}, {"schedule", schedule_config(sf)},
              {"seed", c.seed}};
  write_manifest(c.out, "eval-retrieval", config, inputs, outputs);
  return 0;
}

int run_eval(const CommonFlags& c, const std::string& real_path, const std::string& gen_path,
             const std::string& ckpt_path) {
  json inputs = json::object(), outputs = json::object();
  synth::Dataset real =
      synth::deserialize_dataset(read_input(real_path, "real", inputs), real_path);
  synth::Dataset gen =
      synth::deserialize_dataset(read_input(gen_path, "generated", inputs), gen_path);
  reward::RewardNet net = ckpt::reward_from_checkpoint(
      ckpt::deserialize_checkpoint(read_input(ckpt_path, "reward_ckpt", inputs)));

  std::vector<Tensor> real_motions, gen_motions;
  std::vector<synth::Condition> gen_conds;
  for (const auto& pr : real.pairs) real_motions.push_back(pr.frames);
  for (const auto& pr : gen.pairs) {
    gen_motions.push_back(pr.frames);
    gen_conds.push_back(pr.cond);
  }
  Tensor real_feats = metrics::motion_features(net, real_motions);
  Tensor gen_feats = metrics::motion_features(net, gen_motions);
  Tensor cond_feats = metrics::condition_features(net, gen_conds);
  metrics::MetricsReport rep = metrics::compute_metrics(real_feats, gen_feats, cond_feats,
                                                        c.seed);
  if (!c.quiet) std::cout << rep.summary();
  json rj{{"r_precision_top1", rep.r_top1},
          {"r_precision_top2", rep.r_top2},
          {"r_precision_top3", rep.r_top3},
          {"fid", rep.fid},
          {"mm_dist", rep.mm},
          {"diversity_generated", rep.diversity_generated},
          {"diversity_real", rep.diversity_real},
          {"diversity_gap", rep.diversity_gap},
          {"n_generated", rep.n_generated},
          {"n_real", rep.n_real},
          {"seed", rep.seed}};
  write_text_output(c.out, "metrics.json", rj.dump(2) + "\n", outputs);
  json config{{"seed", c.seed}};
  write_manifest(c.out, "eval", config, inputs, outputs);
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("reguide");
  for (const auto& a : args) full.push_back(a);
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& s : full) argv.push_back(s.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"reward-guided diffusion sampling over synthetic 2-D trajectories"};
  app.require_subcommand(1);

  uint64_t default_seed;
  try {
    default_seed = env_seed_fallback();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  // gen-data
  CommonFlags gd_c;
  gd_c.seed = default_seed;
  int gd_train = 800, gd_val = 100, gd_test = 320, gd_frames = 16;
  CLI::App* gd = app.add_subcommand("gen-data", "generate train/val/test trajectory pairs");
  add_common(gd, gd_c);
  gd->add_option("--train", gd_train, "training pairs")->capture_default_str();
  gd->add_option("--val", gd_val, "validation pairs")->capture_default_str();
  gd->add_option("--test", gd_test, "test pairs")->capture_default_str();
  gd->add_option("--frames", gd_frames, "frames per trajectory")->capture_default_str();

  // train-denoiser
  CommonFlags td_c;
  td_c.seed = default_seed;
  std::string td_dataset;
  ScheduleFlags td_sf;
  diffusion::TrainDenoiserConfig td_cfg;
  CLI::App* td = app.add_subcommand("train-denoiser", "train the noise-prediction network");
  add_common(td, td_c);
  add_schedule(td, td_sf);
  td->add_option("--dataset", td_dataset, "training dataset (.rgds)")->required();
  td->add_option("--steps", td_cfg.steps, "optimizer steps")->capture_default_str();
  td->add_option("--batch", td_cfg.batch, "batch size")->capture_default_str();
  td->add_option("--lr", td_cfg.lr, "learning rate")->capture_default_str();
  td->add_option("--p-uncond", td_cfg.p_uncond, "condition dropout probability")
      ->capture_default_str();
  td->add_option("--grad-clip", td_cfg.grad_clip, "global gradient clip")->capture_default_str();

  // train-reward
  CommonFlags tr_c;
  tr_c.seed = default_seed;
  std::string tr_dataset, tr_val;
  ScheduleFlags tr_sf;
  reward::RewardTrainConfig tr_cfg;
  CLI::App* tr = app.add_subcommand("train-reward", "train the dual-alignment reward model");
  add_common(tr, tr_c);
  add_schedule(tr, tr_sf);
  tr->add_option("--dataset", tr_dataset, "training dataset (.rgds)")->required();
  tr->add_option("--val-dataset", tr_val, "validation dataset for the contrastive track");
  tr->add_option("--epochs", tr_cfg.epochs, "training epochs")->capture_default_str();
  tr->add_option("--batch", tr_cfg.batch, "batch size")->capture_default_str();
  tr->add_option("--lr", tr_cfg.lr, "learning rate")->capture_default_str();
  tr->add_option("--omega", tr_cfg.omega, "clean-motion probability")->capture_default_str();
  tr->add_option("--tau", tr_cfg.tau, "InfoNCE temperature")->capture_default_str();
  tr->add_option("--threshold", tr_cfg.neg_threshold, "negative-filter cosine threshold")
      ->capture_default_str();
  tr->add_option("--t-min", tr_cfg.t_min, "minimum noise timestep")->capture_default_str();
  tr->add_option("--t-max", tr_cfg.t_max, "maximum noise timestep (-1 = T)")
      ->capture_default_str();
  tr->add_option("--grad-clip", tr_cfg.grad_clip, "global gradient clip")->capture_default_str();
  tr->add_option("--weight-decay", tr_cfg.weight_decay, "decoupled weight decay")
      ->capture_default_str();

  // build-index
  CommonFlags bi_c;
  bi_c.seed = default_seed;
  std::string bi_dataset, bi_ckpt;
  CLI::App* bi = app.add_subcommand("build-index", "embed a dataset into a retrieval index");
  add_common(bi, bi_c);
  bi->add_option("--dataset", bi_dataset, "dataset to index (.rgds)")->required();
  bi->add_option("--reward-ckpt", bi_ckpt, "reward checkpoint (.rgck)")->required();

  // sample
  CommonFlags sm_c;
  sm_c.seed = default_seed;
  std::string sm_cond, sm_conds_from, sm_den, sm_rew, sm_index, sm_mode = "unweighted",
                                                              sm_trace;
  ScheduleFlags sm_sf;
  int sm_limit = 0, sm_steps = 50, sm_workers = 1;
  double sm_mu = 1.0, sm_eta = 0.0, sm_cfg = 1.0, sm_clip = 1.0;
  bool sm_reward_t0 = false;
  CLI::App* sm = app.add_subcommand("sample", "run the reward-guided reverse process");
  add_common(sm, sm_c);
  add_schedule(sm, sm_sf);
  sm->add_option("--cond", sm_cond, "condition spec <class>:<speed>:<curvature>:<amplitude>");
  sm->add_option("--conditions-from", sm_conds_from, "take conditions from a dataset (.rgds)");
  sm->add_option("--limit", sm_limit, "max conditions from --conditions-from (0 = all)")
      ->capture_default_str();
  sm->add_option("--denoiser-ckpt", sm_den, "denoiser checkpoint (.rgck)")->required();
  sm->add_option("--reward-ckpt", sm_rew, "reward checkpoint (.rgck)");
  sm->add_option("--index", sm_index, "retrieval index (.rgix) for anchor lookup");
  sm->add_option("--mu", sm_mu, "text-alignment weight")->capture_default_str();
  sm->add_option("--eta", sm_eta, "motion-alignment weight")->capture_default_str();
  sm->add_option("--cfg", sm_cfg, "classifier-free guidance scale")->capture_default_str();
  sm->add_option("--mode", sm_mode, "guidance weighting: off | unweighted | theorem3")
      ->capture_default_str();
  sm->add_option("--steps", sm_steps, "reverse steps (strided from T)")->capture_default_str();
  sm->add_option("--grad-clip", sm_clip, "per-step reward-gradient clip (0 disables)")
      ->capture_default_str();
  sm->add_option("--workers", sm_workers, "parallel sampling threads")->capture_default_str();
  sm->add_flag("--reward-t0", sm_reward_t0,
               "ablation: evaluate the reward with timestep token 0 at every step");
  sm->add_option("--trace", sm_trace, "JSONL step trace (single --cond only)");

  // verify
  CommonFlags vf_c;
  vf_c.seed = default_seed;
  ScheduleFlags vf_sf;
  std::string vf_mode = "theorem3";
  double vf_lambda = 0.5, vf_target = 2.0, vf_m = 0.0, vf_v = 1.0, vf_gain = 0.5;
  int vf_samples = 10000, vf_steps = -1;
  CLI::App* vf = app.add_subcommand("verify", "analytic Gaussian oracle check of the sampler");
  add_common(vf, vf_c);
  add_schedule(vf, vf_sf);
  vf->add_option("--lambda", vf_lambda, "quadratic reward strength")->capture_default_str();
  vf->add_option("--target", vf_target, "quadratic reward target")->capture_default_str();
  vf->add_option("--m", vf_m, "data mean")->capture_default_str();
  vf->add_option("--v", vf_v, "data variance")->capture_default_str();
  vf->add_option("--mode", vf_mode, "guidance weighting: off | unweighted | theorem3")
      ->capture_default_str();
  vf->add_option("--samples", vf_samples, "number of chains")->capture_default_str();
  vf->add_option("--steps", vf_steps, "reverse steps (-1 = full schedule)")
      ->capture_default_str();
  vf->add_option("--tilt-gain", vf_gain, "per-step gain on the exact reward gradient")
      ->capture_default_str();

  // eval-retrieval
  CommonFlags er_c;
  er_c.seed = default_seed;
  std::string er_dataset, er_ckpt;
  ScheduleFlags er_sf;
  int er_batch = 32, er_noise_t = 0;
  CLI::App* er = app.add_subcommand("eval-retrieval", "batched bidirectional retrieval metrics");
  add_common(er, er_c);
  add_schedule(er, er_sf);
  er->add_option("--dataset", er_dataset, "evaluation dataset (.rgds)")->required();
  er->add_option("--reward-ckpt", er_ckpt, "reward checkpoint (.rgck)")->required();
  er->add_option("--batch", er_batch, "retrieval batch size")->capture_default_str();
  er->add_option("--noise-t", er_noise_t, "forward-noise timestep applied to motions")
      ->capture_default_str();

  // eval
  CommonFlags ev_c;
  ev_c.seed = default_seed;
  std::string ev_real, ev_gen, ev_ckpt;
  CLI::App* ev = app.add_subcommand("eval", "generation metrics against a real dataset");
  add_common(ev, ev_c);
  ev->add_option("--real", ev_real, "real dataset (.rgds)")->required();
  ev->add_option("--generated", ev_gen, "generated dataset (.rgds)")->required();
  ev->add_option("--reward-ckpt", ev_ckpt, "reward checkpoint (.rgck)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gd->parsed()) {
      std::filesystem::create_directories(gd_c.out);
      return run_gen_data(gd_c, gd_train, gd_val, gd_test, gd_frames);
    }
    if (td->parsed()) {
      std::filesystem::create_directories(td_c.out);
      return run_train_denoiser(td_c, td_dataset, td_sf, td_cfg);
    }
    if (tr->parsed()) {
      std::filesystem::create_directories(tr_c.out);
      return run_train_reward(tr_c, tr_dataset, tr_val, tr_sf, tr_cfg);
    }
    if (bi->parsed()) {
      std::filesystem::create_directories(bi_c.out);
      return run_build_index(bi_c, bi_dataset, bi_ckpt);
    }
    if (sm->parsed()) {
      if (sm_cond.empty() == sm_conds_from.empty())
        throw std::invalid_argument("sample needs exactly one of --cond or --conditions-from");
      std::filesystem::create_directories(sm_c.out);
      return run_sample(sm_c, sm_cond, sm_conds_from, sm_limit, sm_den, sm_rew, sm_index, sm_sf,
                        sm_mu, sm_eta, sm_cfg, sm_mode, sm_steps, sm_clip, sm_workers,
                        sm_reward_t0, sm_trace);
    }
    if (vf->parsed()) {
      std::filesystem::create_directories(vf_c.out);
      return run_verify(vf_c, vf_lambda, vf_target, vf_m, vf_v, vf_mode, vf_samples, vf_steps,
                        vf_gain, vf_sf);
    }
    if (er->parsed()) {
      std::filesystem::create_directories(er_c.out);
      return run_eval_retrieval(er_c, er_dataset, er_ckpt, er_batch, er_noise_t, er_sf);
    }
    if (ev->parsed()) {
      std::filesystem::create_directories(ev_c.out);
      return run_eval(ev_c, ev_real, ev_gen, ev_ckpt);
    }
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace reguide::cli
