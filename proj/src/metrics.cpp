#include "reguide/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "reguide/rng.hpp"

namespace reguide::metrics {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

// Symmetric PSD square root with small/negative eigenvalues clamped to 0.
Eigen::MatrixXd sqrtm_sym(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("frechet distance: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) ev(i) = ev(i) < 1e-10 ? 0.0 : std::sqrt(ev(i));
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double row_distance(const Tensor& a, int i, const Tensor& b, int j) {
  double s = 0.0;
  for (int c = 0; c < a.cols(); ++c) {
    double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<int> shuffled_indices(int n, uint64_t seed, uint64_t stream) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  RngStream s(seed, stream);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(s.uniform_int(0, i));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

}  // namespace

void validate_features(const Tensor& feats, int min_rows, const std::string& what) {
  if (feats.shape.size() != 2)
    throw std::invalid_argument(what + ": features must be a [n, d] matrix");
  if (feats.rows() < min_rows)
    throw std::invalid_argument(what + ": need at least " + std::to_string(min_rows) +
                                " rows, got " + std::to_string(feats.rows()));
  for (double v : feats.data)
    if (!std::isfinite(v)) throw std::invalid_argument(what + ": non-finite feature entry");
}

double r_precision(const Tensor& motion_feats, const Tensor& cond_feats, int batch, int k,
                   uint64_t seed) {
  if (batch < 1) throw std::invalid_argument("r_precision: batch must be positive");
  if (k < 1 || k > batch) throw std::invalid_argument("r_precision: need 1 <= k <= batch");
  validate_features(motion_feats, batch, "r_precision motion features");
  validate_features(cond_feats, batch, "r_precision condition features");
  if (motion_feats.rows() != cond_feats.rows() || motion_feats.cols() != cond_feats.cols())
    throw std::invalid_argument("r_precision: feature sets must be paired and equal-shaped");

  const int n = motion_feats.rows();
  std::vector<int> idx = shuffled_indices(n, seed, 0x52505245u);
  const int n_batches = n / batch;
  if (n_batches == 0) throw std::invalid_argument("r_precision: fewer rows than one batch");
  int64_t hits = 0, queries = 0;
  for (int b = 0; b < n_batches; ++b) {
    for (int i = 0; i < batch; ++i) {
      int mi = idx[static_cast<size_t>(b * batch + i)];
      double own = row_distance(motion_feats, mi, cond_feats, mi);
      int rank = 0;
      for (int j = 0; j < batch; ++j) {
        if (j == i) continue;
        int cj = idx[static_cast<size_t>(b * batch + j)];
        if (row_distance(motion_feats, mi, cond_feats, cj) < own) ++rank;
      }
      if (rank < k) ++hits;
      ++queries;
    }
  }
  return double(hits) / double(queries);
}

double frechet_distance(const Tensor& a, const Tensor& b) {
  validate_features(a, 2, "frechet distance (first set)");
  validate_features(b, 2, "frechet distance (second set)");
  if (a.cols() != b.cols())
    throw std::invalid_argument("frechet distance: feature dimensions differ");
  Eigen::MatrixXd ma = to_eigen(a), mb = to_eigen(b);
  Eigen::VectorXd mu_a = ma.colwise().mean(), mu_b = mb.colwise().mean();
  Eigen::MatrixXd ca = ma.rowwise() - mu_a.transpose();
  Eigen::MatrixXd cb = mb.rowwise() - mu_b.transpose();
  Eigen::MatrixXd sa = ca.transpose() * ca / double(a.rows() - 1);
  Eigen::MatrixXd sb = cb.transpose() * cb / double(b.rows() - 1);
  if (!sa.allFinite() || !sb.allFinite())
    throw std::runtime_error("frechet distance: non-finite covariance");
  Eigen::MatrixXd root_a = sqrtm_sym(sa);
  Eigen::MatrixXd cross = sqrtm_sym(root_a * sb * root_a);
  double fid = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross.trace();
  return fid < 0.0 ? 0.0 : fid;  // tiny negatives are rounding
}

double mm_dist(const Tensor& motion_feats, const Tensor& cond_feats) {
  validate_features(motion_feats, 1, "mm_dist motion features");
  validate_features(cond_feats, 1, "mm_dist condition features");
  if (motion_feats.rows() != cond_feats.rows() || motion_feats.cols() != cond_feats.cols())
    throw std::invalid_argument("mm_dist: feature sets must be paired and equal-shaped");
  double s = 0.0;
  for (int i = 0; i < motion_feats.rows(); ++i) s += row_distance(motion_feats, i, cond_feats, i);
  return s / double(motion_feats.rows());
}

double diversity(const Tensor& feats, int n_pairs, uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("diversity: n_pairs must be positive");
  validate_features(feats, 2 * n_pairs, "diversity features");
  std::vector<int> idx = shuffled_indices(feats.rows(), seed, 0x44495645u);
  double s = 0.0;
  for (int p = 0; p < n_pairs; ++p)
    s += row_distance(feats, idx[static_cast<size_t>(2 * p)], feats,
                      idx[static_cast<size_t>(2 * p + 1)]);
  return s / double(n_pairs);
}

std::string MetricsReport::summary() const {
  std::ostringstream os;
  os << "  metric                     value\n";
  auto row = [&os](const char* name, double v) {
    char line[96];
    std::snprintf(line, sizeof(line), "  %-22s %12.6f\n", name, v);
    os << line;
  };
  row("r_precision_top1", r_top1);
  row("r_precision_top2", r_top2);
  row("r_precision_top3", r_top3);
  row("fid", fid);
  row("mm_dist", mm);
  row("diversity_generated", diversity_generated);
  row("diversity_real", diversity_real);
  row("diversity_gap", diversity_gap);
  os << "  n_generated            " << n_generated << "\n";
  os << "  n_real                 " << n_real << "\n";
  return os.str();
}

Tensor motion_features(const reward::RewardNet& net, const std::vector<Tensor>& motions) {
  if (motions.empty()) throw std::invalid_argument("motion_features: empty list");
  Tensor out = Tensor::zeros({static_cast<int>(motions.size()), net.cfg.d_z});
  for (size_t i = 0; i < motions.size(); ++i) {
    Tensor z = reward::encode_motion(net, motions[i], 0);
    for (int c = 0; c < net.cfg.d_z; ++c) out.at(static_cast<int>(i), c) = z.data[c];
  }
  return out;
}

Tensor condition_features(const reward::RewardNet& net,
                          const std::vector<synth::Condition>& conds) {
  if (conds.empty()) throw std::invalid_argument("condition_features: empty list");
  Tensor out = Tensor::zeros({static_cast<int>(conds.size()), net.cfg.d_z});
  for (size_t i = 0; i < conds.size(); ++i) {
    Tensor z = reward::encode_condition(net, conds[i]);
    for (int c = 0; c < net.cfg.d_z; ++c) out.at(static_cast<int>(i), c) = z.data[c];
  }
  return out;
}

MetricsReport compute_metrics(const Tensor& real_feats, const Tensor& gen_feats,
                              const Tensor& cond_feats, uint64_t seed) {
  MetricsReport rep;
  rep.seed = seed;
  rep.n_generated = gen_feats.rows();
  rep.n_real = real_feats.rows();
  const int batch = std::min(32, gen_feats.rows());
  rep.r_top1 = r_precision(gen_feats, cond_feats, batch, 1, seed);
  rep.r_top2 = r_precision(gen_feats, cond_feats, batch, 2, seed);
  rep.r_top3 = r_precision(gen_feats, cond_feats, batch, 3, seed);
  rep.fid = frechet_distance(real_feats, gen_feats);
  rep.mm = mm_dist(gen_feats, cond_feats);
  int pairs_gen = std::min(300, gen_feats.rows() / 2);
  int pairs_real = std::min(300, real_feats.rows() / 2);
  rep.diversity_generated = diversity(gen_feats, pairs_gen, seed);
  rep.diversity_real = diversity(real_feats, pairs_real, seed);
  rep.diversity_gap = std::abs(rep.diversity_generated - rep.diversity_real);
  return rep;
}

}  // namespace reguide::metrics
