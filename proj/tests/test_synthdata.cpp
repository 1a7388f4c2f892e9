#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "reguide/io.hpp"
#include "reguide/rng.hpp"
#include "reguide/synthdata.hpp"

using namespace reguide;
using namespace reguide::synth;
namespace fs = std::filesystem;

namespace {

double traj_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Condition make_cond(int cls, double v, double kap, double amp) {
  Condition c;
  c.class_id = cls;
  c.speed = v;
  c.curvature = kap;
  c.amplitude = amp;
  return c;
}

}  // namespace

TEST_CASE("straight line with zero curvature walks the x axis") {
  Tensor m = generate_motion(make_cond(kLine, 1.0, 0.0, 1.0), 4, 0, 0.0);
  REQUIRE(m.shape == std::vector<int>{4, 2});
  const double want[4][2] = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(m.at(i, j) == doctest::Approx(want[i][j]).epsilon(1e-12));
}

TEST_CASE("stop-and-go halts at the midpoint frame") {
  const int n = 16;
  Tensor m = generate_motion(make_cond(kStopGo, 1.2, 0.0, 1.0), n, 0, 0.0);
  for (int i = n / 2; i < n; ++i) {
    CHECK(m.at(i, 0) == m.at(n / 2, 0));
    CHECK(m.at(i, 1) == m.at(n / 2, 1));
  }
  CHECK(std::abs(m.at(1, 0) - m.at(0, 0)) > 1e-6);

  // Zero speed degenerates to a fixed point.
  Tensor mf = generate_motion(make_cond(kStopGo, 0.0, 0.1, 1.0), 8, 0, 0.0);
  for (int i = 1; i < 8; ++i) {
    CHECK(mf.at(i, 0) == mf.at(0, 0));
    CHECK(mf.at(i, 1) == mf.at(0, 1));
  }
}

TEST_CASE("arc heading advances by curvature*step per emitted frame") {
  const double v = 0.9, kap = 0.31, amp = 1.1;
  const int n = 101;
  Tensor m = generate_motion(make_cond(kArcLeft, v, kap, amp), n, 0, 0.0);
  double step = v * amp;
  // The move from frame 99 to frame 100 happens after 100 heading updates.
  double dx = m.at(100, 0) - m.at(99, 0);
  double dy = m.at(100, 1) - m.at(99, 1);
  double len = std::sqrt(dx * dx + dy * dy);
  CHECK(len == doctest::Approx(step).epsilon(1e-9));
  double th = 100.0 * kap * step;
  CHECK(dx / len == doctest::Approx(std::cos(th)).epsilon(1e-9));
  CHECK(dy / len == doctest::Approx(std::sin(th)).epsilon(1e-9));

  // Right arc mirrors the left one across the x axis.
  Tensor mr = generate_motion(make_cond(kArcRight, v, kap, amp), n, 0, 0.0);
  for (int i = 0; i < n; ++i) {
    CHECK(mr.at(i, 0) == doctest::Approx(m.at(i, 0)).epsilon(1e-12));
    CHECK(mr.at(i, 1) == doctest::Approx(-m.at(i, 1)).epsilon(1e-12));
  }
}

TEST_CASE("jitter is seeded: same seed reproduces bits, other seeds differ") {
  Condition c = make_cond(kSpiral, 0.12, 0.08, 1.3);
  Tensor a = generate_motion(c, 24, 99, 0.02);
  Tensor b = generate_motion(c, 24, 99, 0.02);
  CHECK(a.data == b.data);
  Tensor diff = generate_motion(c, 24, 100, 0.02);
  CHECK(a.data != diff.data);
  // Zero sigma means the closed form exactly.
  Tensor clean1 = generate_motion(c, 24, 99, 0.0);
  Tensor clean2 = generate_motion(c, 24, 12345, 0.0);
  CHECK(clean1.data == clean2.data);
}

TEST_CASE("classes are separable: intra-class spread below inter-class spread") {
  const int per_class = 14, n_frames = 24;
  std::vector<Tensor> motions;
  std::vector<int> labels;
  RngStream ps(5, 0);
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      Condition c = make_cond(cls, kSpeedMin + (kSpeedMax - kSpeedMin) * ps.uniform01(),
                              kCurvMin + (kCurvMax - kCurvMin) * ps.uniform01(), 1.0);
      motions.push_back(generate_motion(c, n_frames, 1000 + motions.size(), 0.01));
      labels.push_back(cls);
    }
  }
  double intra = 0.0, inter = 0.0;
  int ni = 0, nx = 0;
  for (size_t i = 0; i < motions.size(); ++i)
    for (size_t j = i + 1; j < motions.size(); ++j) {
      double d = traj_dist(motions[i], motions[j]);
      if (labels[i] == labels[j]) { intra += d; ++ni; }
      else { inter += d; ++nx; }
    }
  CHECK(intra / ni < inter / nx);
}

TEST_CASE("class names round trip and reject unknowns") {
  for (int i = 0; i < kNumClasses; ++i) CHECK(class_id_from_name(class_name(i)) == i);
  CHECK(class_id_from_name("figure-eight") == kFigureEight);
  CHECK_THROWS_AS(class_id_from_name("corkscrew"), std::invalid_argument);
  CHECK_THROWS_AS(class_name(kNumClasses), std::invalid_argument);
  CHECK_THROWS_AS(class_name(-1), std::invalid_argument);
}

TEST_CASE("build_dataset honors class counts and regenerates identically") {
  DatasetSpec spec;
  spec.n_frames = 16;
  spec.class_counts = {2, 0, 0, 0, 0, 0, 3, 0};
  Dataset d = build_dataset(spec, 42, Split::kTrain);
  REQUIRE(d.pairs.size() == 5);
  int lines = 0, sines = 0;
  for (const auto& p : d.pairs) {
    if (p.cond.class_id == kLine) ++lines;
    if (p.cond.class_id == kSine) ++sines;
    CHECK(p.frames.shape == std::vector<int>{16, 2});
    CHECK(p.cond.speed >= kSpeedMin);
    CHECK(p.cond.speed <= kSpeedMax);
    // The stored seed regenerates the stored frames bit for bit.
    Tensor regen = generate_motion(p.cond, spec.n_frames, p.seed);
    CHECK(regen.data == p.frames.data);
  }
  CHECK(lines == 2);
  CHECK(sines == 3);

  Dataset d2 = build_dataset(spec, 42, Split::kTrain);
  CHECK(d == d2);
  CHECK(serialize_dataset(d) == serialize_dataset(d2));
  Dataset d3 = build_dataset(spec, 43, Split::kTrain);
  CHECK_FALSE(d == d3);
}

TEST_CASE("build_splits produces disjoint deterministic splits of the right size") {
  Splits s = build_splits(40, 10, 20, 12, 42);
  CHECK(s.train.pairs.size() == 40);
  CHECK(s.val.pairs.size() == 10);
  CHECK(s.test.pairs.size() == 20);
  CHECK(s.train.split == Split::kTrain);
  CHECK(s.val.split == Split::kVal);
  CHECK(s.test.split == Split::kTest);

  // Round-robin: 40 over 8 classes -> 5 per class.
  std::vector<int> counts(kNumClasses, 0);
  for (const auto& p : s.train.pairs) ++counts[static_cast<size_t>(p.cond.class_id)];
  for (int c : counts) CHECK(c == 5);

  // Same base seed, yet no condition is shared between splits.
  for (const auto& tp : s.train.pairs)
    for (const auto& vp : s.val.pairs) {
      bool same = tp.cond.class_id == vp.cond.class_id && tp.cond.speed == vp.cond.speed &&
                  tp.cond.curvature == vp.cond.curvature && tp.seed == vp.seed;
      CHECK_FALSE(same);
    }

  Splits s2 = build_splits(40, 10, 20, 12, 42);
  CHECK(serialize_dataset(s.train) == serialize_dataset(s2.train));
  CHECK(serialize_dataset(s.test) == serialize_dataset(s2.test));
}

TEST_CASE("dataset bytes round trip and corruption is caught") {
  DatasetSpec spec;
  spec.n_frames = 8;
  spec.class_counts = {0, 0, 3, 0, 0, 0, 0, 0};
  Dataset d = build_dataset(spec, 7, Split::kVal);
  std::vector<uint8_t> bytes = serialize_dataset(d);
  Dataset back = deserialize_dataset(bytes, "test");
  CHECK(back == d);

  std::vector<uint8_t> bad = bytes;
  bad[bad.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(deserialize_dataset(bad, "test"), io::IoError);
  try {
    deserialize_dataset(bad, "test");
  } catch (const io::IoError& e) {
    CHECK(e.code() == io::IoError::Code::kBadChecksum);
  }

  try {
    deserialize_dataset({}, "test");
  } catch (const io::IoError& e) {
    CHECK(e.code() == io::IoError::Code::kTruncated);
  }
}

TEST_CASE("dataset files write and load through the filesystem") {
  fs::path p = fs::temp_directory_path() / "reguide_test_sd.rgds";
  DatasetSpec spec;
  spec.n_frames = 8;
  spec.class_counts = {0, 0, 0, 2, 0, 0, 0, 0};
  Dataset d = build_dataset(spec, 9, Split::kTest);
  save_dataset(d, p.string());
  Dataset back = load_dataset(p.string());
  CHECK(back == d);
  fs::remove(p);
  CHECK_THROWS_AS(load_dataset(p.string()), io::IoError);
}

TEST_CASE("condition tokens quantize parameters into the documented bins") {
  CHECK(condition_tokens(make_cond(kLine, 0.1, 0.1, 1.0)) == std::vector<int>{0, 12, 19, 28});

  // Range ends: lower bound lands in bin 0, upper bound clamps into bin 7.
  CHECK(condition_tokens(make_cond(kLine, kSpeedMin, 0.1, 1.0))[1] == kNumClasses + 0);
  CHECK(condition_tokens(make_cond(kLine, kSpeedMax, 0.1, 1.0))[1] == kNumClasses + 7);
  CHECK(condition_tokens(make_cond(kLine, kSpeedMax + 10.0, 0.1, 1.0))[1] == kNumClasses + 7);
  CHECK(condition_tokens(make_cond(kFigureEight, 0.1, 0.1, 1.0))[0] == kFigureEight);
  for (int tok : condition_tokens(make_cond(kSpiral, 0.07, 0.19, 0.6))) {
    CHECK(tok >= 0);
    CHECK(tok < kVocabSize);
  }
  CHECK_THROWS_AS(condition_tokens(make_cond(99, 0.1, 0.1, 1.0)), std::invalid_argument);
}

TEST_CASE("condition hashes are stable and sensitive to every field") {
  Condition c = make_cond(kSine, 0.08, 0.15, 1.2);
  uint64_t h = condition_hash(c);
  CHECK(h == condition_hash(c));

  Condition c2 = c;
  c2.speed = 0.08000001;
  CHECK(condition_hash(c2) != h);
  c2 = c;
  c2.class_id = kLine;
  CHECK(condition_hash(c2) != h);
  c2 = c;
  c2.curvature = 0.16;
  CHECK(condition_hash(c2) != h);
  c2 = c;
  c2.amplitude = 1.3;
  CHECK(condition_hash(c2) != h);
}

TEST_CASE("generator and builder reject malformed requests") {
  CHECK_THROWS_AS(generate_motion(make_cond(kLine, 0.1, 0.1, 1.0), 1, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_motion(make_cond(-1, 0.1, 0.1, 1.0), 8, 0),
                  std::invalid_argument);
  DatasetSpec spec;
  spec.class_counts = {1, 1};  // must list all classes
  CHECK_THROWS_AS(build_dataset(spec, 1, Split::kTrain), std::invalid_argument);
  spec.class_counts.assign(kNumClasses, 0);
  CHECK_THROWS_AS(build_dataset(spec, 1, Split::kTrain), std::invalid_argument);
  spec.class_counts[0] = -1;
  CHECK_THROWS_AS(build_dataset(spec, 1, Split::kTrain), std::invalid_argument);
}
