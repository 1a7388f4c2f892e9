#include "reguide/synthdata.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "reguide/io.hpp"
#include "reguide/rng.hpp"

namespace reguide::synth {

namespace {
constexpr double kPi = 3.14159265358979323846;

const char* const kClassNames[kNumClasses] = {
    "line", "arc-left", "arc-right", "zigzag", "spiral", "stop-go", "sine", "figure-eight"};

int param_bin(double x, double lo, double hi) {
  double f = (x - lo) / (hi - lo);
  int b = static_cast<int>(std::floor(f * kParamBins));
  return b < 0 ? 0 : (b >= kParamBins ? kParamBins - 1 : b);
}

// Triangle wave with period 2*pi and range [-1, 1], phase-aligned with sin.
double triangle(double u) {
  return 2.0 / kPi * std::asin(std::sin(u));
}
}  // namespace

const char* class_name(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw std::invalid_argument("unknown class_id " + std::to_string(class_id));
  return kClassNames[class_id];
}

int class_id_from_name(const std::string& name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (name == kClassNames[i]) return i;
  throw std::invalid_argument("unknown motion class \"" + name + "\"");
}

std::vector<int> condition_tokens(const Condition& c) {
  if (c.class_id < 0 || c.class_id >= kNumClasses)
    throw std::invalid_argument("condition_tokens: unknown class_id " +
                                std::to_string(c.class_id));
  return {
      c.class_id,
      kNumClasses + param_bin(c.speed, kSpeedMin, kSpeedMax),
      kNumClasses + kParamBins + param_bin(c.curvature, kCurvMin, kCurvMax),
      kNumClasses + 2 * kParamBins + param_bin(c.amplitude, kAmpMin, kAmpMax),
  };
}

uint64_t condition_hash(const Condition& c) {
  std::vector<uint8_t> bytes;
  bytes.push_back(static_cast<uint8_t>(c.class_id));
  for (double d : {c.speed, c.curvature, c.amplitude}) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(d));
    std::memcpy(&bits, &d, sizeof(bits));
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<uint8_t>(bits >> (8 * k)));
  }
  return io::fnv1a64(bytes);
}

// Each family is a closed-form curve in i (frame index, unit time step) using
// all three parameters so that no two distinct conditions share a trajectory.
Tensor generate_motion(const Condition& c, int n_frames, uint64_t seed, double jitter_sigma) {
  if (n_frames < 2) throw std::invalid_argument("generate_motion: n_frames must be >= 2");
  if (c.class_id < 0 || c.class_id >= kNumClasses)
    throw std::invalid_argument("generate_motion: unknown class_id " +
                                std::to_string(c.class_id));

  const double v = c.speed, kap = c.curvature, amp = c.amplitude;
  Tensor frames({n_frames, 2});

  switch (c.class_id) {
    case kLine: {
      double th = 10.0 * kap;  // heading set by curvature so all params matter
      for (int i = 0; i < n_frames; ++i) {
        frames.at(i, 0) = i * v * amp * std::cos(th);
        frames.at(i, 1) = i * v * amp * std::sin(th);
      }
      break;
    }
    case kArcLeft:
    case kArcRight: {
      // Discrete unicycle: emit, rotate by kappa*step, then translate along the
      // new heading. Heading after k emitted steps is exactly k*kappa*v*amp.
      double sgn = c.class_id == kArcLeft ? 1.0 : -1.0;
      double step = v * amp, th = 0.0, x = 0.0, y = 0.0;
      for (int i = 0; i < n_frames; ++i) {
        frames.at(i, 0) = x;
        frames.at(i, 1) = y;
        th += sgn * kap * step;
        x += step * std::cos(th);
        y += step * std::sin(th);
      }
      break;
    }
    case kZigzag:
      for (int i = 0; i < n_frames; ++i) {
        frames.at(i, 0) = i * v;
        frames.at(i, 1) = 0.7 * amp * triangle(10.0 * kap * i);
      }
      break;
    case kSpiral:
      for (int i = 0; i < n_frames; ++i) {
        double r = 0.35 * amp * v * i, ph = 10.0 * kap * i;
        frames.at(i, 0) = r * std::cos(ph);
        frames.at(i, 1) = r * std::sin(ph);
      }
      break;
    case kStopGo: {
      // Travels for the first half of the frames, then halts.
      int halt = n_frames / 2;
      double th = 10.0 * kap;
      for (int i = 0; i < n_frames; ++i) {
        double s = static_cast<double>(i < halt ? i : halt) * v * amp;
        frames.at(i, 0) = s * std::cos(th);
        frames.at(i, 1) = s * std::sin(th);
      }
      break;
    }
    case kSine:
      for (int i = 0; i < n_frames; ++i) {
        frames.at(i, 0) = i * v;
        frames.at(i, 1) = 0.45 * amp * std::sin(10.0 * kap * i);
      }
      break;
    case kFigureEight:
      for (int i = 0; i < n_frames; ++i) {
        double ph = i * (5.0 * kap + 2.0 * v);
        frames.at(i, 0) = 0.6 * amp * std::sin(ph);
        frames.at(i, 1) = 0.3 * amp * std::sin(2.0 * ph);
      }
      break;
    default:
      throw std::invalid_argument("generate_motion: unknown class_id");
  }

  if (jitter_sigma > 0.0) {
    RngStream jitter(seed, 0x4a495454u);  // dedicated jitter stream
    for (auto& x : frames.data) x += jitter_sigma * jitter.gaussian();
  }
  return frames;
}

bool Dataset::operator==(const Dataset& o) const {
  if (n_frames != o.n_frames || dim != o.dim || split != o.split ||
      base_seed != o.base_seed || pairs.size() != o.pairs.size())
    return false;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const Pair &a = pairs[i], &b = o.pairs[i];
    if (a.cond.class_id != b.cond.class_id || a.cond.speed != b.cond.speed ||
        a.cond.curvature != b.cond.curvature || a.cond.amplitude != b.cond.amplitude ||
        a.seed != b.seed || a.frames.shape != b.frames.shape || a.frames.data != b.frames.data)
      return false;
  }
  return true;
}

Dataset build_dataset(const DatasetSpec& spec, uint64_t seed, Split split) {
  if (spec.class_counts.size() != static_cast<size_t>(kNumClasses))
    throw std::invalid_argument("build_dataset: class_counts must list all " +
                                std::to_string(kNumClasses) + " classes");
  int total = 0;
  for (int c : spec.class_counts) {
    if (c < 0) throw std::invalid_argument("build_dataset: negative class count");
    total += c;
  }
  if (total == 0) throw std::invalid_argument("build_dataset: empty spec");

  Dataset d;
  d.n_frames = spec.n_frames;
  d.dim = 2;
  d.split = split;
  d.base_seed = seed;
  d.pairs.reserve(static_cast<size_t>(total));

  // Disjoint stream-id ranges per split keep pair seeds disjoint across
  // splits built from one base seed.
  uint64_t stream_base = static_cast<uint64_t>(split) * 1000000ull;
  uint64_t idx = 0;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int k = 0; k < spec.class_counts[static_cast<size_t>(cls)]; ++k, ++idx) {
      RngStream s(seed, stream_base + idx);
      Pair p;
      p.cond.class_id = cls;
      p.cond.speed = kSpeedMin + (kSpeedMax - kSpeedMin) * s.uniform01();
      p.cond.curvature = kCurvMin + (kCurvMax - kCurvMin) * s.uniform01();
      p.cond.amplitude = kAmpMin + (kAmpMax - kAmpMin) * s.uniform01();
      p.seed = s.next_u64();
      p.frames = generate_motion(p.cond, spec.n_frames, p.seed);
      d.pairs.push_back(std::move(p));
    }
  }
  return d;
}

namespace {
DatasetSpec round_robin_spec(int n, int n_frames) {
  DatasetSpec s;
  s.n_frames = n_frames;
  s.class_counts.assign(kNumClasses, n / kNumClasses);
  for (int i = 0; i < n % kNumClasses; ++i) ++s.class_counts[static_cast<size_t>(i)];
  return s;
}
}  // namespace

Splits build_splits(int n_train, int n_val, int n_test, int n_frames, uint64_t seed) {
  Splits sp;
  sp.train = build_dataset(round_robin_spec(n_train, n_frames), seed, Split::kTrain);
  sp.val = build_dataset(round_robin_spec(n_val, n_frames), seed, Split::kVal);
  sp.test = build_dataset(round_robin_spec(n_test, n_frames), seed, Split::kTest);
  return sp;
}

namespace {
constexpr char kMagic[5] = "RGDS";
constexpr uint32_t kVersion = 1;
}  // namespace

std::vector<uint8_t> serialize_dataset(const Dataset& d) {
  io::BinWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(d.dim));
  w.u32(static_cast<uint32_t>(d.n_frames));
  w.u32(static_cast<uint32_t>(d.pairs.size()));
  w.u8(static_cast<uint8_t>(d.split));
  w.u64(d.base_seed);
  for (const Pair& p : d.pairs) {
    w.u32(static_cast<uint32_t>(p.cond.class_id));
    w.f64(p.cond.speed);
    w.f64(p.cond.curvature);
    w.f64(p.cond.amplitude);
    w.u64(p.seed);
    for (double x : p.frames.data) w.f64(x);
  }
  return w.finish();
}

Dataset deserialize_dataset(const std::vector<uint8_t>& bytes, const std::string& what) {
  io::BinReader r(bytes, what);
  r.expect_magic(kMagic);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw io::IoError(io::IoError::Code::kBadVersion,
                      what + ": unsupported dataset version " + std::to_string(version));
  Dataset d;
  d.dim = static_cast<int>(r.u32());
  d.n_frames = static_cast<int>(r.u32());
  uint32_t count = r.u32();
  d.split = static_cast<Split>(r.u8());
  d.base_seed = r.u64();
  d.pairs.resize(count);
  for (Pair& p : d.pairs) {
    p.cond.class_id = static_cast<int>(r.u32());
    p.cond.speed = r.f64();
    p.cond.curvature = r.f64();
    p.cond.amplitude = r.f64();
    p.seed = r.u64();
    p.frames = Tensor({d.n_frames, d.dim});
    for (auto& x : p.frames.data) x = r.f64();
  }
  r.expect_done();
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  io::write_file(path, serialize_dataset(d));
}

Dataset load_dataset(const std::string& path) {
  return deserialize_dataset(io::read_file(path), path);
}

}  // namespace reguide::synth
