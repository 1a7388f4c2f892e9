#include "reguide/tape.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace reguide {

namespace {
std::atomic<uint64_t> g_next_tape_id{1};

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}
}  // namespace

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

void Tape::check(Value v, const char* where) const {
  if (!v.attached())
    throw std::invalid_argument(std::string(where) + ": tensor is not on tape (detached handle)");
  if (v.tape_id != id_)
    throw std::invalid_argument(std::string(where) + ": tensor is not on tape (belongs to another tape)");
  if (v.idx < 0 || static_cast<size_t>(v.idx) >= nodes_.size())
    throw std::invalid_argument(std::string(where) + ": invalid tape handle");
}

const Tape::Node& Tape::node(Value v) const { return nodes_[static_cast<size_t>(v.idx)]; }

const Tensor& Tape::val(Value v) const {
  check(v, "Tape::val");
  return node(v).val;
}

Value Tape::push(Op op, Tensor val, std::vector<int> parents, std::vector<int> ints, double aux) {
  Node n;
  n.op = op;
  n.parents = std::move(parents);
  n.val = std::move(val);
  n.ints = std::move(ints);
  n.aux = aux;
  for (int p : n.parents)
    if (nodes_[static_cast<size_t>(p)].needs_grad) n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Value{id_, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::leaf(Tensor t, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(t);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Value{id_, static_cast<int>(nodes_.size()) - 1};
}

#define CHECK2(a, b, where) check(a, where); check(b, where)

Value Tape::add(Value a, Value b) {
  CHECK2(a, b, "add");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.same_shape(tb), "add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
  return push(Op::kAdd, std::move(out), {a.idx, b.idx});
}

Value Tape::sub(Value a, Value b) {
  CHECK2(a, b, "sub");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.same_shape(tb), "sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= tb.data[i];
  return push(Op::kSub, std::move(out), {a.idx, b.idx});
}

Value Tape::mul(Value a, Value b) {
  CHECK2(a, b, "mul");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.same_shape(tb), "mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= tb.data[i];
  return push(Op::kMul, std::move(out), {a.idx, b.idx});
}

Value Tape::div(Value a, Value b) {
  CHECK2(a, b, "div");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.same_shape(tb), "div: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] /= tb.data[i];
  return push(Op::kDiv, std::move(out), {a.idx, b.idx});
}

Value Tape::scale(Value a, double c) {
  check(a, "scale");
  Tensor out = node(a).val;
  for (auto& v : out.data) v *= c;
  return push(Op::kScale, std::move(out), {a.idx}, {}, c);
}

Value Tape::add_rowvec(Value x, Value b) {
  CHECK2(x, b, "add_rowvec");
  const Tensor &tx = node(x).val, &tb = node(b).val;
  require(tb.rows() == 1 && tb.cols() == tx.cols(),
          "add_rowvec: vector shape " + tb.shape_str() + " does not match " + tx.shape_str());
  Tensor out = tx;
  for (int i = 0; i < tx.rows(); ++i)
    for (int j = 0; j < tx.cols(); ++j) out.at(i, j) += tb.at(0, j);
  return push(Op::kAddRowVec, std::move(out), {x.idx, b.idx});
}

Value Tape::mul_rowvec(Value x, Value g) {
  CHECK2(x, g, "mul_rowvec");
  const Tensor &tx = node(x).val, &tg = node(g).val;
  require(tg.rows() == 1 && tg.cols() == tx.cols(),
          "mul_rowvec: vector shape " + tg.shape_str() + " does not match " + tx.shape_str());
  Tensor out = tx;
  for (int i = 0; i < tx.rows(); ++i)
    for (int j = 0; j < tx.cols(); ++j) out.at(i, j) *= tg.at(0, j);
  return push(Op::kMulRowVec, std::move(out), {x.idx, g.idx});
}

Value Tape::div_colvec(Value x, Value v) {
  CHECK2(x, v, "div_colvec");
  const Tensor &tx = node(x).val, &tv = node(v).val;
  require(tv.rows() == tx.rows() && tv.cols() == 1,
          "div_colvec: vector shape " + tv.shape_str() + " does not match " + tx.shape_str());
  Tensor out = tx;
  for (int i = 0; i < tx.rows(); ++i)
    for (int j = 0; j < tx.cols(); ++j) out.at(i, j) /= tv.at(i, 0);
  return push(Op::kDivColVec, std::move(out), {x.idx, v.idx});
}

Value Tape::matmul(Value a, Value b) {
  CHECK2(a, b, "matmul");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.shape.size() == 2 && tb.shape.size() == 2 && ta.cols() == tb.rows(),
          "matmul: incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
  int m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double av = ta.at(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out.at(i, j) += av * tb.at(p, j);
    }
  return push(Op::kMatMul, std::move(out), {a.idx, b.idx});
}

Value Tape::matmul_nt(Value a, Value b) {
  CHECK2(a, b, "matmul_nt");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.shape.size() == 2 && tb.shape.size() == 2 && ta.cols() == tb.cols(),
          "matmul_nt: incompatible shapes " + ta.shape_str() + " x " + tb.shape_str() + "^T");
  int m = ta.rows(), k = ta.cols(), n = tb.rows();
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ta.at(i, p) * tb.at(j, p);
      out.at(i, j) = s;
    }
  return push(Op::kMatMulNT, std::move(out), {a.idx, b.idx});
}

Value Tape::row_sum(Value x) {
  check(x, "row_sum");
  const Tensor& tx = node(x).val;
  Tensor out({tx.rows(), 1});
  for (int i = 0; i < tx.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < tx.cols(); ++j) s += tx.at(i, j);
    out.at(i, 0) = s;
  }
  return push(Op::kRowSum, std::move(out), {x.idx});
}

Value Tape::sum(Value x) {
  check(x, "sum");
  const Tensor& tx = node(x).val;
  double s = 0.0;
  for (double v : tx.data) s += v;
  return push(Op::kSum, Tensor::scalar(s), {x.idx});
}

Value Tape::tanh_t(Value x) {
  check(x, "tanh");
  Tensor out = node(x).val;
  for (auto& v : out.data) v = std::tanh(v);
  return push(Op::kTanh, std::move(out), {x.idx});
}

Value Tape::sqrt_t(Value x) {
  check(x, "sqrt");
  Tensor out = node(x).val;
  for (auto& v : out.data) {
    require(v >= 0.0, "sqrt: negative input");
    v = std::sqrt(v);
  }
  return push(Op::kSqrt, std::move(out), {x.idx});
}

Value Tape::abs_t(Value x) {
  check(x, "abs");
  Tensor out = node(x).val;
  for (auto& v : out.data) v = std::abs(v);
  return push(Op::kAbs, std::move(out), {x.idx});
}

Value Tape::softmax_rows(Value x) {
  check(x, "softmax_rows");
  const Tensor& tx = node(x).val;
  Tensor out = tx;
  for (int i = 0; i < tx.rows(); ++i) {
    double mx = tx.at(i, 0);
    for (int j = 1; j < tx.cols(); ++j) mx = std::max(mx, tx.at(i, j));
    double z = 0.0;
    for (int j = 0; j < tx.cols(); ++j) {
      out.at(i, j) = std::exp(tx.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (int j = 0; j < tx.cols(); ++j) out.at(i, j) /= z;
  }
  return push(Op::kSoftmaxRows, std::move(out), {x.idx});
}

Value Tape::logsumexp_rows(Value x) {
  check(x, "logsumexp_rows");
  const Tensor& tx = node(x).val;
  Tensor out({tx.rows(), 1});
  for (int i = 0; i < tx.rows(); ++i) {
    double mx = tx.at(i, 0);
    for (int j = 1; j < tx.cols(); ++j) mx = std::max(mx, tx.at(i, j));
    double z = 0.0;
    for (int j = 0; j < tx.cols(); ++j) z += std::exp(tx.at(i, j) - mx);
    out.at(i, 0) = mx + std::log(z);
  }
  return push(Op::kLogSumExpRows, std::move(out), {x.idx});
}

Value Tape::take_diag(Value x) {
  check(x, "take_diag");
  const Tensor& tx = node(x).val;
  require(tx.rows() == tx.cols(), "take_diag: matrix not square " + tx.shape_str());
  Tensor out({tx.rows(), 1});
  for (int i = 0; i < tx.rows(); ++i) out.at(i, 0) = tx.at(i, i);
  return push(Op::kTakeDiag, std::move(out), {x.idx});
}

Value Tape::layernorm_rows(Value x, double eps) {
  check(x, "layernorm_rows");
  const Tensor& tx = node(x).val;
  Tensor out = tx;
  for (int i = 0; i < tx.rows(); ++i) {
    double mu = 0.0;
    for (int j = 0; j < tx.cols(); ++j) mu += tx.at(i, j);
    mu /= tx.cols();
    double var = 0.0;
    for (int j = 0; j < tx.cols(); ++j) {
      double d = tx.at(i, j) - mu;
      var += d * d;
    }
    var /= tx.cols();
    double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < tx.cols(); ++j) out.at(i, j) = (tx.at(i, j) - mu) * inv;
  }
  return push(Op::kLayerNormRows, std::move(out), {x.idx}, {}, eps);
}

Value Tape::concat_rows(const std::vector<Value>& xs) {
  require(!xs.empty(), "concat_rows: empty input list");
  int cols = -1, rows = 0;
  std::vector<int> parents;
  for (Value v : xs) {
    check(v, "concat_rows");
    const Tensor& t = node(v).val;
    if (cols < 0) cols = t.cols();
    require(t.cols() == cols, "concat_rows: column mismatch");
    rows += t.rows();
    parents.push_back(v.idx);
  }
  Tensor out({rows, cols});
  int r = 0;
  for (Value v : xs) {
    const Tensor& t = node(v).val;
    for (int i = 0; i < t.rows(); ++i)
      for (int j = 0; j < cols; ++j) out.at(r + i, j) = t.at(i, j);
    r += t.rows();
  }
  return push(Op::kConcatRows, std::move(out), std::move(parents));
}

Value Tape::concat_cols(const std::vector<Value>& xs) {
  require(!xs.empty(), "concat_cols: empty input list");
  int rows = -1, cols = 0;
  std::vector<int> parents;
  for (Value v : xs) {
    check(v, "concat_cols");
    const Tensor& t = node(v).val;
    if (rows < 0) rows = t.rows();
    require(t.rows() == rows, "concat_cols: row mismatch");
    cols += t.cols();
    parents.push_back(v.idx);
  }
  Tensor out({rows, cols});
  int c = 0;
  for (Value v : xs) {
    const Tensor& t = node(v).val;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < t.cols(); ++j) out.at(i, c + j) = t.at(i, j);
    c += t.cols();
  }
  return push(Op::kConcatCols, std::move(out), std::move(parents));
}

Value Tape::slice_rows(Value x, int r0, int count) {
  check(x, "slice_rows");
  const Tensor& tx = node(x).val;
  require(r0 >= 0 && count >= 1 && r0 + count <= tx.rows(), "slice_rows: range out of bounds");
  Tensor out({count, tx.cols()});
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < tx.cols(); ++j) out.at(i, j) = tx.at(r0 + i, j);
  return push(Op::kSliceRows, std::move(out), {x.idx}, {r0, count});
}

Value Tape::slice_cols(Value x, int c0, int count) {
  check(x, "slice_cols");
  const Tensor& tx = node(x).val;
  require(c0 >= 0 && count >= 1 && c0 + count <= tx.cols(), "slice_cols: range out of bounds");
  Tensor out({tx.rows(), count});
  for (int i = 0; i < tx.rows(); ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = tx.at(i, c0 + j);
  return push(Op::kSliceCols, std::move(out), {x.idx}, {c0, count});
}

Value Tape::reshape(Value x, std::vector<int> shape) {
  check(x, "reshape");
  const Tensor& tx = node(x).val;
  require(Tensor::numel_of(shape) == tx.numel(), "reshape: element count mismatch");
  Tensor out;
  out.shape = shape;
  out.data = tx.data;
  return push(Op::kReshape, std::move(out), {x.idx});
}

Value Tape::repeat_rows(Value v, int n) {
  check(v, "repeat_rows");
  const Tensor& tv = node(v).val;
  require(tv.rows() == 1, "repeat_rows: input must have one row");
  require(n >= 1, "repeat_rows: count must be positive");
  Tensor out({n, tv.cols()});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < tv.cols(); ++j) out.at(i, j) = tv.at(0, j);
  return push(Op::kRepeatRows, std::move(out), {v.idx});
}

Value Tape::embedding_rows(Value table, const std::vector<int>& ids) {
  check(table, "embedding_rows");
  const Tensor& tt = node(table).val;
  require(!ids.empty(), "embedding_rows: empty id list");
  for (int id : ids)
    require(id >= 0 && id < tt.rows(),
            "embedding_rows: id " + std::to_string(id) + " out of range [0," +
                std::to_string(tt.rows()) + ")");
  Tensor out({static_cast<int>(ids.size()), tt.cols()});
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < tt.cols(); ++j) out.at(static_cast<int>(i), j) = tt.at(ids[i], j);
  return push(Op::kEmbeddingRows, std::move(out), {table.idx}, ids);
}

namespace {
double smooth_l1(double d) {
  double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}
}  // namespace

Value Tape::smooth_l1_sum(Value a, Value b) {
  CHECK2(a, b, "smooth_l1_sum");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.same_shape(tb), "smooth_l1_sum: shape mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) s += smooth_l1(ta.data[i] - tb.data[i]);
  return push(Op::kSmoothL1Sum, Tensor::scalar(s), {a.idx, b.idx});
}

Value Tape::l1_sum(Value a, Value b) {
  CHECK2(a, b, "l1_sum");
  const Tensor &ta = node(a).val, &tb = node(b).val;
  require(ta.same_shape(tb), "l1_sum: shape mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) s += std::abs(ta.data[i] - tb.data[i]);
  return push(Op::kL1Sum, Tensor::scalar(s), {a.idx, b.idx});
}

#undef CHECK2

// Accumulates d(loss)/d(node i) = g into the parents of node i.
void Tape::backprop(int i, const Tensor& g, std::vector<Tensor>& grads) const {
  const Node& n = nodes_[static_cast<size_t>(i)];
  auto acc = [&](int p, int64_t flat, double v) {
    const Node& pn = nodes_[static_cast<size_t>(p)];
    if (!pn.needs_grad) return;
    Tensor& gp = grads[static_cast<size_t>(p)];
    if (gp.shape.empty()) gp = Tensor::zeros(pn.val.shape);
    gp.data[static_cast<size_t>(flat)] += v;
  };
  auto parent_val = [&](int k) -> const Tensor& {
    return nodes_[static_cast<size_t>(n.parents[static_cast<size_t>(k)])].val;
  };
  auto P = [&](int k) { return n.parents[static_cast<size_t>(k)]; };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      for (int64_t t = 0; t < g.numel(); ++t) { acc(P(0), t, g.data[t]); acc(P(1), t, g.data[t]); }
      break;
    case Op::kSub:
      for (int64_t t = 0; t < g.numel(); ++t) { acc(P(0), t, g.data[t]); acc(P(1), t, -g.data[t]); }
      break;
    case Op::kMul: {
      const Tensor &a = parent_val(0), &b = parent_val(1);
      for (int64_t t = 0; t < g.numel(); ++t) {
        acc(P(0), t, g.data[t] * b.data[t]);
        acc(P(1), t, g.data[t] * a.data[t]);
      }
      break;
    }
    case Op::kDiv: {
      const Tensor &a = parent_val(0), &b = parent_val(1);
      for (int64_t t = 0; t < g.numel(); ++t) {
        acc(P(0), t, g.data[t] / b.data[t]);
        acc(P(1), t, -g.data[t] * a.data[t] / (b.data[t] * b.data[t]));
      }
      break;
    }
    case Op::kScale:
      for (int64_t t = 0; t < g.numel(); ++t) acc(P(0), t, g.data[t] * n.aux);
      break;
    case Op::kAddRowVec: {
      const Tensor& x = parent_val(0);
      for (int i2 = 0; i2 < x.rows(); ++i2)
        for (int j = 0; j < x.cols(); ++j) {
          int64_t f = static_cast<int64_t>(i2) * x.cols() + j;
          acc(P(0), f, g.data[f]);
          acc(P(1), j, g.data[f]);
        }
      break;
    }
    case Op::kMulRowVec: {
      const Tensor &x = parent_val(0), &r = parent_val(1);
      for (int i2 = 0; i2 < x.rows(); ++i2)
        for (int j = 0; j < x.cols(); ++j) {
          int64_t f = static_cast<int64_t>(i2) * x.cols() + j;
          acc(P(0), f, g.data[f] * r.at(0, j));
          acc(P(1), j, g.data[f] * x.at(i2, j));
        }
      break;
    }
    case Op::kDivColVec: {
      const Tensor &x = parent_val(0), &v = parent_val(1);
      for (int i2 = 0; i2 < x.rows(); ++i2) {
        double vi = v.at(i2, 0);
        double s = 0.0;
        for (int j = 0; j < x.cols(); ++j) {
          int64_t f = static_cast<int64_t>(i2) * x.cols() + j;
          acc(P(0), f, g.data[f] / vi);
          s += g.data[f] * x.at(i2, j);
        }
        acc(P(1), i2, -s / (vi * vi));
      }
      break;
    }
    case Op::kMatMul: {
      const Tensor &a = parent_val(0), &b = parent_val(1);
      int m = a.rows(), k = a.cols(), nn = b.cols();
      // da = g . b^T ; db = a^T . g
      for (int i2 = 0; i2 < m; ++i2)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < nn; ++j) s += g.at(i2, j) * b.at(p, j);
          acc(P(0), static_cast<int64_t>(i2) * k + p, s);
        }
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < nn; ++j) {
          double s = 0.0;
          for (int i2 = 0; i2 < m; ++i2) s += a.at(i2, p) * g.at(i2, j);
          acc(P(1), static_cast<int64_t>(p) * nn + j, s);
        }
      break;
    }
    case Op::kMatMulNT: {
      const Tensor &a = parent_val(0), &b = parent_val(1);
      int m = a.rows(), k = a.cols(), nn = b.rows();
      // y = a . b^T ; da = g . b ; db = g^T . a
      for (int i2 = 0; i2 < m; ++i2)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < nn; ++j) s += g.at(i2, j) * b.at(j, p);
          acc(P(0), static_cast<int64_t>(i2) * k + p, s);
        }
      for (int j = 0; j < nn; ++j)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int i2 = 0; i2 < m; ++i2) s += g.at(i2, j) * a.at(i2, p);
          acc(P(1), static_cast<int64_t>(j) * k + p, s);
        }
      break;
    }
    case Op::kRowSum: {
      const Tensor& x = parent_val(0);
      for (int i2 = 0; i2 < x.rows(); ++i2)
        for (int j = 0; j < x.cols(); ++j)
          acc(P(0), static_cast<int64_t>(i2) * x.cols() + j, g.at(i2, 0));
      break;
    }
    case Op::kSum: {
      const Tensor& x = parent_val(0);
      for (int64_t t = 0; t < x.numel(); ++t) acc(P(0), t, g.data[0]);
      break;
    }
    case Op::kTanh:
      for (int64_t t = 0; t < g.numel(); ++t)
        acc(P(0), t, g.data[t] * (1.0 - n.val.data[t] * n.val.data[t]));
      break;
    case Op::kSqrt:
      for (int64_t t = 0; t < g.numel(); ++t)
        acc(P(0), t, g.data[t] * 0.5 / n.val.data[t]);
      break;
    case Op::kAbs: {
      const Tensor& x = parent_val(0);
      for (int64_t t = 0; t < g.numel(); ++t) {
        double s = x.data[t] > 0.0 ? 1.0 : (x.data[t] < 0.0 ? -1.0 : 0.0);
        acc(P(0), t, g.data[t] * s);
      }
      break;
    }
    case Op::kSoftmaxRows: {
      const Tensor& y = n.val;
      for (int i2 = 0; i2 < y.rows(); ++i2) {
        double dot = 0.0;
        for (int j = 0; j < y.cols(); ++j) dot += g.at(i2, j) * y.at(i2, j);
        for (int j = 0; j < y.cols(); ++j)
          acc(P(0), static_cast<int64_t>(i2) * y.cols() + j,
              y.at(i2, j) * (g.at(i2, j) - dot));
      }
      break;
    }
    case Op::kLogSumExpRows: {
      const Tensor& x = parent_val(0);
      for (int i2 = 0; i2 < x.rows(); ++i2)
        for (int j = 0; j < x.cols(); ++j)
          acc(P(0), static_cast<int64_t>(i2) * x.cols() + j,
              g.at(i2, 0) * std::exp(x.at(i2, j) - n.val.at(i2, 0)));
      break;
    }
    case Op::kTakeDiag: {
      const Tensor& x = parent_val(0);
      for (int i2 = 0; i2 < x.rows(); ++i2)
        acc(P(0), static_cast<int64_t>(i2) * x.cols() + i2, g.at(i2, 0));
      break;
    }
    case Op::kLayerNormRows: {
      const Tensor& x = parent_val(0);
      const Tensor& y = n.val;
      int d = x.cols();
      for (int i2 = 0; i2 < x.rows(); ++i2) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x.at(i2, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
          double dd = x.at(i2, j) - mu;
          var += dd * dd;
        }
        var /= d;
        double inv = 1.0 / std::sqrt(var + n.aux);
        double gmean = 0.0, gymean = 0.0;
        for (int j = 0; j < d; ++j) {
          gmean += g.at(i2, j);
          gymean += g.at(i2, j) * y.at(i2, j);
        }
        gmean /= d;
        gymean /= d;
        for (int j = 0; j < d; ++j)
          acc(P(0), static_cast<int64_t>(i2) * d + j,
              inv * (g.at(i2, j) - gmean - y.at(i2, j) * gymean));
      }
      break;
    }
    case Op::kConcatRows: {
      int r = 0;
      for (size_t k = 0; k < n.parents.size(); ++k) {
        const Tensor& x = nodes_[static_cast<size_t>(n.parents[k])].val;
        for (int i2 = 0; i2 < x.rows(); ++i2)
          for (int j = 0; j < x.cols(); ++j)
            acc(n.parents[k], static_cast<int64_t>(i2) * x.cols() + j, g.at(r + i2, j));
        r += x.rows();
      }
      break;
    }
    case Op::kConcatCols: {
      int c = 0;
      for (size_t k = 0; k < n.parents.size(); ++k) {
        const Tensor& x = nodes_[static_cast<size_t>(n.parents[k])].val;
        for (int i2 = 0; i2 < x.rows(); ++i2)
          for (int j = 0; j < x.cols(); ++j)
            acc(n.parents[k], static_cast<int64_t>(i2) * x.cols() + j, g.at(i2, c + j));
        c += x.cols();
      }
      break;
    }
    case Op::kSliceRows: {
      const Tensor& x = parent_val(0);
      int r0 = n.ints[0], count = n.ints[1];
      for (int i2 = 0; i2 < count; ++i2)
        for (int j = 0; j < x.cols(); ++j)
          acc(P(0), static_cast<int64_t>(r0 + i2) * x.cols() + j, g.at(i2, j));
      break;
    }
    case Op::kSliceCols: {
      const Tensor& x = parent_val(0);
      int c0 = n.ints[0], count = n.ints[1];
      for (int i2 = 0; i2 < x.rows(); ++i2)
        for (int j = 0; j < count; ++j)
          acc(P(0), static_cast<int64_t>(i2) * x.cols() + (c0 + j), g.at(i2, j));
      break;
    }
    case Op::kReshape:
      for (int64_t t = 0; t < g.numel(); ++t) acc(P(0), t, g.data[t]);
      break;
    case Op::kRepeatRows: {
      const Tensor& v = parent_val(0);
      for (int i2 = 0; i2 < n.val.rows(); ++i2)
        for (int j = 0; j < v.cols(); ++j) acc(P(0), j, g.at(i2, j));
      break;
    }
    case Op::kEmbeddingRows: {
      const Tensor& table = parent_val(0);
      for (size_t k = 0; k < n.ints.size(); ++k)
        for (int j = 0; j < table.cols(); ++j)
          acc(P(0), static_cast<int64_t>(n.ints[k]) * table.cols() + j,
              g.at(static_cast<int>(k), j));
      break;
    }
    case Op::kSmoothL1Sum: {
      const Tensor &a = parent_val(0), &b = parent_val(1);
      for (int64_t t = 0; t < a.numel(); ++t) {
        double d = a.data[t] - b.data[t];
        double dd = d > 1.0 ? 1.0 : (d < -1.0 ? -1.0 : d);  // d(huber)/dd
        acc(P(0), t, g.data[0] * dd);
        acc(P(1), t, -g.data[0] * dd);
      }
      break;
    }
    case Op::kL1Sum: {
      const Tensor &a = parent_val(0), &b = parent_val(1);
      for (int64_t t = 0; t < a.numel(); ++t) {
        double d = a.data[t] - b.data[t];
        double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        acc(P(0), t, g.data[0] * s);
        acc(P(1), t, -g.data[0] * s);
      }
      break;
    }
  }
}

std::vector<Tensor> Tape::grad(Value loss, const std::vector<Value>& wrt) {
  check(loss, "grad(loss)");
  const Tensor& lv = node(loss).val;
  if (lv.numel() != 1)
    throw std::invalid_argument("grad: loss must be scalar, got shape " + lv.shape_str());
  for (Value w : wrt) check(w, "grad(wrt)");

  std::vector<Tensor> grads(nodes_.size());
  grads[static_cast<size_t>(loss.idx)] = Tensor::from(lv.shape, {1.0});
  for (int i = loss.idx; i >= 0; --i) {
    const Tensor& g = grads[static_cast<size_t>(i)];
    if (g.shape.empty()) continue;                         // not reached
    if (!nodes_[static_cast<size_t>(i)].needs_grad) continue;
    backprop(i, g, grads);
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (Value w : wrt) {
    Tensor& g = grads[static_cast<size_t>(w.idx)];
    if (g.shape.empty()) g = Tensor::zeros(node(w).val.shape);
    out.push_back(std::move(g));
  }
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  Tensor g = Tensor::zeros(x.shape);
  Tensor xp = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = xp.data[i];
    xp.data[i] = orig + h;
    double fp = f(xp);
    xp.data[i] = orig - h;
    double fm = f(xp);
    xp.data[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_grad: non-finite value at coordinate " +
                               std::to_string(i));
    g.data[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace reguide
