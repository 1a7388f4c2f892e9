#include "reguide/retrieval.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "reguide/io.hpp"
#include "reguide/rng.hpp"

namespace reguide::retrieval {

namespace {
constexpr uint32_t kVersion = 1;
}

RetrievalIndex build_index(const reward::RewardNet& net, const synth::Dataset& data,
                           uint64_t reward_hash) {
  if (data.pairs.empty()) throw std::invalid_argument("build_index: empty dataset");
  if (data.n_frames != net.cfg.n_frames || data.dim != net.cfg.dim)
    throw std::invalid_argument("build_index: dataset motions [" + std::to_string(data.n_frames) +
                                "," + std::to_string(data.dim) + "] do not match reward model [" +
                                std::to_string(net.cfg.n_frames) + "," +
                                std::to_string(net.cfg.dim) + "]");
  RetrievalIndex idx;
  idx.reward_hash = reward_hash;
  idx.n_frames = data.n_frames;
  idx.dim = data.dim;
  idx.d_z = net.cfg.d_z;
  idx.entries.reserve(data.pairs.size());
  for (const auto& pr : data.pairs) {
    IndexEntry e;
    e.cond = pr.cond;
    e.pair_seed = pr.seed;
    e.frames = pr.frames;
    e.z_motion = reward::encode_motion(net, pr.frames, 0);
    e.z_cond = reward::encode_condition(net, pr.cond);
    idx.entries.push_back(std::move(e));
  }
  return idx;
}

std::vector<uint8_t> serialize_index(const RetrievalIndex& idx) {
  io::BinWriter w;
  w.magic("RGIX");
  w.u32(kVersion);
  w.u64(idx.reward_hash);
  w.u32(static_cast<uint32_t>(idx.n_frames));
  w.u32(static_cast<uint32_t>(idx.dim));
  w.u32(static_cast<uint32_t>(idx.d_z));
  w.u32(static_cast<uint32_t>(idx.entries.size()));
  for (const auto& e : idx.entries) {
    w.u8(static_cast<uint8_t>(e.cond.class_id));
    w.f64(e.cond.speed);
    w.f64(e.cond.curvature);
    w.f64(e.cond.amplitude);
    w.u64(e.pair_seed);
    w.f64s(e.frames.data);
    w.f64s(e.z_motion.data);
    w.f64s(e.z_cond.data);
  }
  return w.finish();
}

RetrievalIndex deserialize_index(const std::vector<uint8_t>& bytes) {
  io::BinReader r(bytes, "retrieval index");
  r.expect_magic("RGIX");
  uint32_t version = r.u32();
  if (version != kVersion)
    throw io::IoError(io::IoError::Code::kBadVersion,
                      "index version " + std::to_string(version) + " not supported");
  RetrievalIndex idx;
  idx.reward_hash = r.u64();
  idx.n_frames = static_cast<int>(r.u32());
  idx.dim = static_cast<int>(r.u32());
  idx.d_z = static_cast<int>(r.u32());
  uint32_t n = r.u32();
  idx.entries.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    IndexEntry& e = idx.entries[i];
    uint8_t cls = r.u8();
    if (cls >= synth::kNumClasses)
      throw io::IoError(io::IoError::Code::kOther,
                        "index entry " + std::to_string(i) + " has bad class " +
                            std::to_string(int(cls)));
    e.cond.class_id = static_cast<int>(cls);
    e.cond.speed = r.f64();
    e.cond.curvature = r.f64();
    e.cond.amplitude = r.f64();
    e.pair_seed = r.u64();
    e.frames.data = r.f64s();
    if (e.frames.data.size() != size_t(idx.n_frames) * size_t(idx.dim))
      throw io::IoError(io::IoError::Code::kOther,
                        "index entry " + std::to_string(i) + " has a malformed motion");
    e.frames.shape = {idx.n_frames, idx.dim};
    e.z_motion.data = r.f64s();
    e.z_cond.data = r.f64s();
    if (e.z_motion.data.size() != size_t(idx.d_z) || e.z_cond.data.size() != size_t(idx.d_z))
      throw io::IoError(io::IoError::Code::kOther,
                        "index entry " + std::to_string(i) + " has a malformed embedding");
    e.z_motion.shape = {1, idx.d_z};
    e.z_cond.shape = {1, idx.d_z};
  }
  r.expect_done();
  return idx;
}

void save_index(const std::string& path, const RetrievalIndex& idx) {
  io::write_file(path, serialize_index(idx));
}

RetrievalIndex load_index(const std::string& path) {
  return deserialize_index(io::read_file(path));
}

void check_index_hash(const RetrievalIndex& idx, uint64_t reward_hash) {
  if (idx.reward_hash != reward_hash)
    throw std::runtime_error("retrieval index was built with reward checkpoint " +
                             io::hex64(idx.reward_hash) + " but the supplied checkpoint hashes to " +
                             io::hex64(reward_hash) + "; rebuild the index");
}

AnchorResult retrieve_anchor(const RetrievalIndex& idx, const Tensor& z_cond) {
  if (idx.entries.empty()) throw std::invalid_argument("retrieve_anchor: empty index");
  AnchorResult best;
  for (int i = 0; i < static_cast<int>(idx.entries.size()); ++i) {
    double s = reward::cosine(idx.entries[i].z_motion, z_cond);
    if (best.ordinal < 0 || s > best.score) {
      best.ordinal = i;
      best.score = s;
    }
  }
  return best;
}

AnchorResult retrieve_anchor(const RetrievalIndex& idx, const reward::RewardNet& net,
                             const synth::Condition& c) {
  return retrieve_anchor(idx, reward::encode_condition(net, c));
}

RetrievalReport retrieval_eval(const reward::RewardNet& net, const synth::Dataset& data,
                               int batch, int noise_t, const diffusion::NoiseSchedule* sched,
                               uint64_t seed) {
  const int n = static_cast<int>(data.pairs.size());
  if (batch < 2) throw std::invalid_argument("retrieval_eval: batch must be >= 2");
  if (n < batch)
    throw std::invalid_argument("retrieval_eval: split holds " + std::to_string(n) +
                                " pairs, fewer than one batch of " + std::to_string(batch));
  if (noise_t < 0) throw std::invalid_argument("retrieval_eval: negative noise timestep");
  if (noise_t > 0) {
    if (sched == nullptr)
      throw std::invalid_argument("retrieval_eval: noised evaluation needs a noise schedule");
    if (noise_t > sched->T)
      throw std::invalid_argument("retrieval_eval: noise timestep beyond schedule");
  }

  std::vector<Tensor> z_motion(n), z_cond(n);
  RngStream base(seed, 0x52455652u);
  for (int i = 0; i < n; ++i) {
    const auto& pr = data.pairs[i];
    Tensor x = pr.frames;
    if (noise_t > 0) {
      RngStream s = base.substream(static_cast<uint64_t>(i));
      Tensor eps = Tensor::zeros(x.shape);
      for (double& e : eps.data) e = s.gaussian();
      x = diffusion::forward_noise(x, noise_t, eps, *sched);
    }
    z_motion[i] = reward::encode_motion(net, x, noise_t);
    z_cond[i] = reward::encode_condition(net, pr.cond);
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  RngStream shuf(seed, 0x53485546u);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(shuf.uniform_int(0, i));
    std::swap(order[i], order[j]);
  }

  RetrievalReport rep;
  rep.batch = batch;
  rep.noise_t = noise_t;
  rep.seed = seed;
  rep.n_batches = n / batch;
  rep.queries = rep.n_batches * batch;
  std::array<int, 5> hits_m2t{}, hits_t2m{};
  for (int bi = 0; bi < rep.n_batches; ++bi) {
    std::vector<std::vector<double>> sim(batch, std::vector<double>(batch));
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < batch; ++j)
        sim[i][j] = reward::cosine(z_motion[order[bi * batch + i]], z_cond[order[bi * batch + j]]);
    for (int i = 0; i < batch; ++i) {
      int rank_m2t = 0, rank_t2m = 0;
      for (int j = 0; j < batch; ++j) {
        if (sim[i][j] > sim[i][i]) ++rank_m2t;
        if (sim[j][i] > sim[i][i]) ++rank_t2m;
      }
      for (size_t ki = 0; ki < kRetrievalKs.size(); ++ki) {
        if (rank_m2t < kRetrievalKs[ki]) ++hits_m2t[ki];
        if (rank_t2m < kRetrievalKs[ki]) ++hits_t2m[ki];
      }
    }
  }
  for (size_t ki = 0; ki < kRetrievalKs.size(); ++ki) {
    rep.motion_to_cond[ki] = double(hits_m2t[ki]) / double(rep.queries);
    rep.cond_to_motion[ki] = double(hits_t2m[ki]) / double(rep.queries);
  }
  return rep;
}

}  // namespace reguide::retrieval
