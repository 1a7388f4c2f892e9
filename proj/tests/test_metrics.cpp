#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>
#include "reguide/metrics.hpp"
#include "reguide/reward.hpp"
#include "reguide/rng.hpp"
#include "reguide/synthdata.hpp"
#include "reguide/tensor.hpp"

using namespace reguide;
using namespace reguide::metrics;

namespace {

Tensor gaussian_feats(int n, int d, uint64_t seed, uint64_t stream = 0) {
  RngStream rs(seed, stream);
  Tensor t = Tensor::zeros({n, d});
  for (double& v : t.data) v = rs.gaussian();
  return t;
}

Tensor from_rows(const std::vector<std::vector<double>>& rows) {
  Tensor t = Tensor::zeros({static_cast<int>(rows.size()), static_cast<int>(rows[0].size())});
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      t.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return t;
}

}  // namespace

TEST_CASE("frechet distance of a set with itself is zero") {
  Tensor a = gaussian_feats(40, 6, 3);
  CHECK(frechet_distance(a, a) < 1e-8);
}

TEST_CASE("frechet distance of a shifted copy is the squared shift") {
  Tensor a = gaussian_feats(60, 8, 5);
  std::vector<double> d = {0.3, -0.1, 0.7, 0.0, -0.4, 0.2, 0.05, -0.6};
  Tensor b = a;
  double d2 = 0.0;
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) b.at(i, j) += d[static_cast<size_t>(j)];
  for (double v : d) d2 += v * v;
  CHECK(std::abs(frechet_distance(a, b) - d2) < 1e-6);
}

TEST_CASE("frechet distance closed form in one dimension") {
  // vars 1 and 4 about mean 0: 0 + 1 + 4 - 2*sqrt(4) = 1.
  Tensor a = from_rows({{-1.0}, {0.0}, {1.0}});
  Tensor b = from_rows({{-2.0}, {0.0}, {2.0}});
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("frechet distance is symmetric") {
  Tensor a = gaussian_feats(50, 5, 7);
  Tensor b = gaussian_feats(45, 5, 8);
  CHECK(frechet_distance(a, b) == doctest::Approx(frechet_distance(b, a)).epsilon(1e-8));
}

TEST_CASE("frechet distance is invariant under a shared rotation") {
  Tensor a = gaussian_feats(64, 2, 9);
  Tensor b = gaussian_feats(48, 2, 10);
  for (int i = 0; i < b.rows(); ++i) b.at(i, 0) += 0.5;  // make them differ
  double base = frechet_distance(a, b);
  double th = 0.73;
  double c = std::cos(th), s = std::sin(th);
  auto rot = [&](const Tensor& t) {
    Tensor out = t;
    for (int i = 0; i < t.rows(); ++i) {
      out.at(i, 0) = c * t(i, 0) - s * t(i, 1);
      out.at(i, 1) = s * t(i, 0) + c * t(i, 1);
    }
    return out;
  };
  CHECK(frechet_distance(rot(a), rot(b)) == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("frechet distance stays finite on rank-deficient features") {
  Tensor a = gaussian_feats(30, 4, 11);
  Tensor b = gaussian_feats(30, 4, 12);
  for (int i = 0; i < a.rows(); ++i) a.at(i, 3) = a(i, 0);  // duplicated column
  for (int i = 0; i < b.rows(); ++i) b.at(i, 3) = 2.0 * b(i, 1);
  double fid = frechet_distance(a, b);
  CHECK(std::isfinite(fid));
  CHECK(fid >= 0.0);
}

TEST_CASE("frechet distance input validation") {
  Tensor a = gaussian_feats(10, 3, 13);
  Tensor one_row = gaussian_feats(1, 3, 14);
  Tensor wrong_dim = gaussian_feats(10, 4, 15);
  CHECK_THROWS_WITH_AS(frechet_distance(one_row, a), doctest::Contains("at least 2 rows"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(frechet_distance(a, wrong_dim),
                       doctest::Contains("feature dimensions differ"), std::invalid_argument);
  Tensor bad = a;
  bad.at(2, 1) = std::nan("");
  CHECK_THROWS_WITH_AS(frechet_distance(bad, a), doctest::Contains("non-finite"),
                       std::invalid_argument);
  Tensor flat = Tensor::zeros({12});
  CHECK_THROWS_WITH_AS(frechet_distance(flat, a), doctest::Contains("matrix"),
                       std::invalid_argument);
}

TEST_CASE("r precision sits at chance on unrelated features") {
  // 313 batches of 32 = 10016 queries; chance for top-1 is 1/32.
  const int n = 32 * 313, d = 8;
  Tensor motion = gaussian_feats(n, d, 21, 1);
  Tensor cond = gaussian_feats(n, d, 21, 2);
  double r1 = r_precision(motion, cond, 32, 1, 99);
  CHECK(std::abs(r1 - 1.0 / 32.0) < 0.01);
  double r2 = r_precision(motion, cond, 32, 2, 99);
  CHECK(std::abs(r2 - 2.0 / 32.0) < 0.015);
}

TEST_CASE("r precision with k equal to the batch is exactly one") {
  Tensor motion = gaussian_feats(40, 4, 23);
  Tensor cond = gaussian_feats(40, 4, 24);
  CHECK(r_precision(motion, cond, 8, 8, 5) == 1.0);
}

TEST_CASE("r precision is nondecreasing in k") {
  Tensor motion = gaussian_feats(96, 5, 25);
  Tensor cond = gaussian_feats(96, 5, 26);
  double prev = 0.0;
  for (int k = 1; k <= 16; ++k) {
    double r = r_precision(motion, cond, 16, k, 7);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("r precision separates aligned from misaligned features") {
  // Aligned: condition row equals its motion row; everything else is far.
  const int n = 32;
  Tensor motion = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) motion.at(i, i) = 3.0;
  Tensor cond = motion;
  CHECK(r_precision(motion, cond, 8, 1, 3) == 1.0);

  // Misaligned: each condition sits exactly on a different query's motion.
  Tensor shifted = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) shifted.at(i, (i + 1) % n) = 3.0;
  CHECK(r_precision(motion, shifted, n, 1, 3) == 0.0);
}

TEST_CASE("r precision is deterministic in the seed") {
  Tensor motion = gaussian_feats(64, 6, 31);
  Tensor cond = gaussian_feats(64, 6, 32);
  CHECK(r_precision(motion, cond, 16, 2, 11) == r_precision(motion, cond, 16, 2, 11));
}

TEST_CASE("r precision input validation") {
  Tensor motion = gaussian_feats(16, 3, 33);
  Tensor cond = gaussian_feats(16, 3, 34);
  CHECK_THROWS_WITH_AS(r_precision(motion, cond, 0, 1, 1), doctest::Contains("batch"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(r_precision(motion, cond, 8, 0, 1), doctest::Contains("1 <= k <= batch"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(r_precision(motion, cond, 8, 9, 1), doctest::Contains("1 <= k <= batch"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(r_precision(motion, cond, 32, 1, 1), doctest::Contains("at least 32"),
                       std::invalid_argument);
  Tensor unpaired = gaussian_feats(15, 3, 35);
  CHECK_THROWS_WITH_AS(r_precision(motion, unpaired, 8, 1, 1), doctest::Contains("paired"),
                       std::invalid_argument);
}

TEST_CASE("mm dist closed forms") {
  Tensor a = gaussian_feats(12, 4, 41);
  CHECK(mm_dist(a, a) == 0.0);
  Tensor m = from_rows({{0.0, 0.0}, {1.0, 1.0}});
  Tensor c = from_rows({{3.0, 4.0}, {1.0, 1.0}});
  CHECK(mm_dist(m, c) == doctest::Approx(2.5).epsilon(1e-12));
  Tensor unpaired = gaussian_feats(11, 4, 42);
  CHECK_THROWS_WITH_AS(mm_dist(a, unpaired), doctest::Contains("paired"), std::invalid_argument);
}

TEST_CASE("diversity closed forms and determinism") {
  Tensor same = Tensor::zeros({10, 3});
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 3; ++j) same.at(i, j) = 1.5;
  CHECK(diversity(same, 4, 7) == 0.0);

  // Two rows, one pair: the only possible pair, whatever the shuffle does.
  Tensor two = from_rows({{0.0, 0.0}, {3.0, 4.0}});
  CHECK(diversity(two, 1, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(diversity(two, 1, 12345) == doctest::Approx(5.0).epsilon(1e-12));

  // Equilateral triangle: every pair has the same length.
  double s = 2.0, h = std::sqrt(3.0);
  Tensor tri = from_rows({{0.0, 0.0}, {2.0, 0.0}, {1.0, h}});
  CHECK(diversity(tri, 1, 9) == doctest::Approx(s).epsilon(1e-12));

  Tensor g = gaussian_feats(30, 4, 43);
  CHECK(diversity(g, 10, 5) == diversity(g, 10, 5));
  CHECK(diversity(g, 10, 5) > 0.0);

  CHECK_THROWS_WITH_AS(diversity(g, 0, 1), doctest::Contains("positive"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(diversity(g, 16, 1), doctest::Contains("at least 32"),
                       std::invalid_argument);
}

TEST_CASE("feature validation messages") {
  Tensor ok = gaussian_feats(4, 2, 44);
  CHECK_NOTHROW(validate_features(ok, 4, "x"));
  CHECK_THROWS_WITH_AS(validate_features(ok, 5, "x"), doctest::Contains("need at least 5 rows"),
                       std::invalid_argument);
  Tensor vec = Tensor::zeros({4});
  CHECK_THROWS_WITH_AS(validate_features(vec, 1, "x"), doctest::Contains("[n, d] matrix"),
                       std::invalid_argument);
  Tensor inf = ok;
  inf.at(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(validate_features(inf, 1, "x"), doctest::Contains("non-finite"),
                       std::invalid_argument);
}

TEST_CASE("feature extraction matches the per-item encoders") {
  reward::RewardConfig rc;
  rc.n_frames = 8;
  rc.T = 20;
  reward::RewardNet net = reward::RewardNet::init(rc, 51);

  RngStream rs(52, 0);
  std::vector<Tensor> motions;
  for (int i = 0; i < 3; ++i) {
    Tensor m = Tensor::zeros({rc.n_frames, rc.dim});
    for (double& v : m.data) v = rs.gaussian();
    motions.push_back(m);
  }
  Tensor mf = motion_features(net, motions);
  CHECK(mf.rows() == 3);
  CHECK(mf.cols() == rc.d_z);
  for (size_t i = 0; i < motions.size(); ++i) {
    Tensor z = reward::encode_motion(net, motions[i], 0);
    for (int c = 0; c < rc.d_z; ++c)
      CHECK(mf(static_cast<int>(i), c) == doctest::Approx(z.data[static_cast<size_t>(c)])
                                              .epsilon(1e-14));
  }

  std::vector<synth::Condition> conds = {{synth::kLine, 0.1, 0.1, 1.0},
                                         {synth::kSine, 0.12, 0.15, 0.8}};
  Tensor cf = condition_features(net, conds);
  CHECK(cf.rows() == 2);
  CHECK(cf.cols() == rc.d_z);
  Tensor zc = reward::encode_condition(net, conds[1]);
  for (int c = 0; c < rc.d_z; ++c)
    CHECK(cf(1, c) == doctest::Approx(zc.data[static_cast<size_t>(c)]).epsilon(1e-14));

  CHECK_THROWS_WITH_AS(motion_features(net, {}), doctest::Contains("empty"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(condition_features(net, {}), doctest::Contains("empty"),
                       std::invalid_argument);
}

TEST_CASE("compute_metrics fills a coherent report") {
  const int n = 64, d = 6;
  Tensor real = gaussian_feats(n, d, 61, 0);
  Tensor gen = gaussian_feats(n, d, 61, 1);
  for (double& v : gen.data) v *= 0.9;
  // Conditions near their own motions: retrieval should beat chance.
  Tensor cond = gen;
  RngStream noise(62, 0);
  for (double& v : cond.data) v += 0.05 * noise.gaussian();

  MetricsReport rep = compute_metrics(real, gen, cond, 17);
  CHECK(rep.n_generated == n);
  CHECK(rep.n_real == n);
  CHECK(rep.seed == 17);
  CHECK(rep.r_top1 <= rep.r_top2);
  CHECK(rep.r_top2 <= rep.r_top3);
  CHECK(rep.r_top1 > 0.5);  // near-duplicate pairs retrieve easily
  CHECK(rep.fid > 0.0);
  CHECK(rep.mm > 0.0);
  CHECK(rep.diversity_gap ==
        doctest::Approx(std::abs(rep.diversity_generated - rep.diversity_real)).epsilon(1e-15));

  std::string s = rep.summary();
  CHECK(s.find("r_precision_top1") != std::string::npos);
  CHECK(s.find("fid") != std::string::npos);
  CHECK(s.find("diversity_gap") != std::string::npos);

  MetricsReport again = compute_metrics(real, gen, cond, 17);
  CHECK(again.r_top1 == rep.r_top1);
  CHECK(again.fid == rep.fid);
  CHECK(again.mm == rep.mm);
  CHECK(again.diversity_generated == rep.diversity_generated);
  CHECK(again.diversity_real == rep.diversity_real);
}

TEST_CASE("compute_metrics shrinks the batch for small sets") {
  const int n = 12, d = 4;
  Tensor real = gaussian_feats(n, d, 63, 0);
  Tensor gen = gaussian_feats(n, d, 63, 1);
  Tensor cond = gen;
  MetricsReport rep = compute_metrics(real, gen, cond, 3);
  CHECK(rep.r_top1 == 1.0);  // batch = 12, identical pair features
  CHECK(rep.mm == 0.0);
  CHECK(rep.n_generated == n);
}
