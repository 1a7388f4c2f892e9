#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "reguide/tensor.hpp"

namespace reguide {

// Handle to a node on a Tape. Default-constructed handles are detached and
// rejected by every tape operation.
struct Value {
  uint64_t tape_id = 0;
  int idx = -1;
  bool attached() const { return idx >= 0 && tape_id != 0; }
};

// Define-by-run reverse-mode autodiff over Tensor. Every operation records a
// node; grad() walks the recording backwards. One tape per forward pass.
class Tape {
 public:
  Tape();

  Value leaf(Tensor t, bool requires_grad = false);
  Value constant(Tensor t) { return leaf(std::move(t), false); }

  const Tensor& val(Value v) const;

  // Elementwise, shapes must match.
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);

  Value scale(Value a, double c);          // c * a
  Value add_rowvec(Value x, Value b);      // x[n,d] + b[1,d] per row
  Value mul_rowvec(Value x, Value g);      // x[n,d] * g[1,d] per row
  Value div_colvec(Value x, Value v);      // x[n,d] / v[n,1] per row

  Value matmul(Value a, Value b);          // [m,k]x[k,n] -> [m,n]
  Value matmul_nt(Value a, Value b);       // [m,k]x[n,k]^T -> [m,n]

  Value row_sum(Value x);                  // [n,d] -> [n,1]
  Value sum(Value x);                      // -> [1]
  Value tanh_t(Value x);
  Value sqrt_t(Value x);                   // requires x >= 0 elementwise
  Value abs_t(Value x);

  Value softmax_rows(Value x);
  Value logsumexp_rows(Value x);           // [n,d] -> [n,1]
  Value take_diag(Value x);                // [n,n] -> [n,1]
  Value layernorm_rows(Value x, double eps = 1e-5);

  Value concat_rows(const std::vector<Value>& xs);
  Value concat_cols(const std::vector<Value>& xs);
  Value slice_rows(Value x, int r0, int count);
  Value slice_cols(Value x, int c0, int count);
  Value reshape(Value x, std::vector<int> shape);
  Value repeat_rows(Value v, int n);       // [1,d] -> [n,d]
  Value embedding_rows(Value table, const std::vector<int>& ids);  // -> [ids.size(), d]

  Value smooth_l1_sum(Value a, Value b);   // sum of Huber(delta=1) over elements -> [1]
  Value l1_sum(Value a, Value b);          // sum |a - b| -> [1]

  // Gradient of scalar `loss` w.r.t. each handle in `wrt`. Handles not
  // reachable from the loss get a zero gradient of their shape. Detached
  // handles and handles from another tape are rejected loudly.
  std::vector<Tensor> grad(Value loss, const std::vector<Value>& wrt);

  size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf, kAdd, kSub, kMul, kDiv, kScale, kAddRowVec, kMulRowVec, kDivColVec,
    kMatMul, kMatMulNT, kRowSum, kSum, kTanh, kSqrt, kAbs, kSoftmaxRows,
    kLogSumExpRows, kTakeDiag, kLayerNormRows, kConcatRows, kConcatCols,
    kSliceRows, kSliceCols, kReshape, kRepeatRows, kEmbeddingRows,
    kSmoothL1Sum, kL1Sum,
  };

  struct Node {
    Op op;
    std::vector<int> parents;
    Tensor val;
    std::vector<int> ints;     // op-specific (slice bounds, embedding ids, ...)
    double aux = 0.0;          // op-specific scalar (scale factor, layernorm eps)
    bool needs_grad = false;
  };

  Value push(Op op, Tensor val, std::vector<int> parents,
             std::vector<int> ints = {}, double aux = 0.0);
  const Node& node(Value v) const;
  void check(Value v, const char* where) const;
  void backprop(int i, const Tensor& g, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
  uint64_t id_;
};

// Central finite differences of a scalar function, the independent oracle the
// tape is checked against. Throws naming the offending coordinate if f is
// ever non-finite.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-5);

}  // namespace reguide
