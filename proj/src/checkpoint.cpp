#include "reguide/checkpoint.hpp"

#include <stdexcept>

#include "nlohmann/json.hpp"
#include "reguide/io.hpp"

namespace reguide::ckpt {

namespace {
constexpr uint32_t kVersion = 1;
using json = nlohmann::json;
}  // namespace

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& c) {
  io::BinWriter w;
  w.magic("RGCK");
  w.u32(kVersion);
  w.str(c.component);
  w.str(c.hyper_json);
  w.f64s(c.weights);
  return w.finish();
}

Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
  io::BinReader r(bytes, "checkpoint");
  r.expect_magic("RGCK");
  uint32_t version = r.u32();
  if (version != kVersion)
    throw io::IoError(io::IoError::Code::kBadVersion,
                      "checkpoint version " + std::to_string(version) + " not supported");
  Checkpoint c;
  c.component = r.str();
  c.hyper_json = r.str();
  c.weights = r.f64s();
  r.expect_done();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  io::write_file(path, serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_component) {
  Checkpoint c = deserialize_checkpoint(io::read_file(path));
  if (c.component != expected_component)
    throw io::IoError(io::IoError::Code::kWrongComponent, path + ": checkpoint holds a '" + c.component +
                                                        "' model, expected '" +
                                                        expected_component + "'");
  return c;
}

uint64_t checkpoint_hash(const std::vector<uint8_t>& bytes) { return io::fnv1a64(bytes); }

uint64_t file_checkpoint_hash(const std::string& path) {
  return io::fnv1a64(io::read_file(path));
}

Checkpoint denoiser_to_checkpoint(const diffusion::DenoiserNet& net) {
  const auto& cfg = net.cfg;
  json h = {{"n_frames", cfg.n_frames}, {"dim", cfg.dim},     {"t_emb", cfg.t_emb},
            {"tok_emb", cfg.tok_emb},   {"hidden", cfg.hidden}, {"vocab", cfg.vocab},
            {"T", cfg.T},               {"param_count", net.ps.flatten().size()}};
  Checkpoint c;
  c.component = "denoiser";
  c.hyper_json = h.dump();
  c.weights = net.ps.flatten();
  return c;
}

diffusion::DenoiserNet denoiser_from_checkpoint(const Checkpoint& c) {
  if (c.component != "denoiser")
    throw io::IoError(io::IoError::Code::kWrongComponent,
                      "checkpoint holds a '" + c.component + "' model, expected 'denoiser'");
  json h = json::parse(c.hyper_json);
  diffusion::DenoiserConfig cfg;
  cfg.n_frames = h.at("n_frames").get<int>();
  cfg.dim = h.at("dim").get<int>();
  cfg.t_emb = h.at("t_emb").get<int>();
  cfg.tok_emb = h.at("tok_emb").get<int>();
  cfg.hidden = h.at("hidden").get<int>();
  cfg.vocab = h.at("vocab").get<int>();
  cfg.T = h.at("T").get<int>();
  diffusion::DenoiserNet net = diffusion::DenoiserNet::init(cfg, 0);
  if (c.weights.size() != net.ps.flatten().size())
    throw io::IoError(io::IoError::Code::kOther,
                      "denoiser checkpoint holds " + std::to_string(c.weights.size()) +
                          " weights, model needs " + std::to_string(net.ps.flatten().size()));
  net.ps.unflatten(c.weights);
  return net;
}

Checkpoint reward_to_checkpoint(const reward::RewardNet& net) {
  const auto& cfg = net.cfg;
  json h = {{"n_frames", cfg.n_frames},   {"dim", cfg.dim},
            {"d_model", cfg.d_model},     {"d_z", cfg.d_z},
            {"n_heads", cfg.n_heads},     {"n_layers", cfg.n_layers},
            {"d_ffn", cfg.d_ffn},         {"T", cfg.T},
            {"vocab", cfg.vocab},         {"cond_tokens", cfg.cond_tokens},
            {"tok_emb", cfg.tok_emb},     {"param_count", net.ps.flatten().size()}};
  Checkpoint c;
  c.component = "reward";
  c.hyper_json = h.dump();
  c.weights = net.ps.flatten();
  return c;
}

reward::RewardNet reward_from_checkpoint(const Checkpoint& c) {
  if (c.component != "reward")
    throw io::IoError(io::IoError::Code::kWrongComponent,
                      "checkpoint holds a '" + c.component + "' model, expected 'reward'");
  json h = json::parse(c.hyper_json);
  reward::RewardConfig cfg;
  cfg.n_frames = h.at("n_frames").get<int>();
  cfg.dim = h.at("dim").get<int>();
  cfg.d_model = h.at("d_model").get<int>();
  cfg.d_z = h.at("d_z").get<int>();
  cfg.n_heads = h.at("n_heads").get<int>();
  cfg.n_layers = h.at("n_layers").get<int>();
  cfg.d_ffn = h.at("d_ffn").get<int>();
  cfg.T = h.at("T").get<int>();
  cfg.vocab = h.at("vocab").get<int>();
  cfg.cond_tokens = h.at("cond_tokens").get<int>();
  cfg.tok_emb = h.at("tok_emb").get<int>();
  reward::RewardNet net = reward::RewardNet::init(cfg, 0);
  if (c.weights.size() != net.ps.flatten().size())
    throw io::IoError(io::IoError::Code::kOther,
                      "reward checkpoint holds " + std::to_string(c.weights.size()) +
                          " weights, model needs " + std::to_string(net.ps.flatten().size()));
  net.ps.unflatten(c.weights);
  return net;
}

}  // namespace reguide::ckpt
