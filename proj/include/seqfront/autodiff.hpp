#pragma once

#include "seqfront/common.hpp"

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace seqfront::ad {

// Reverse-mode autodiff on a per-step tape of Eigen matrices.
//
// Model code builds the graph through TapeT ops; backward() walks the nodes
// in reverse creation order (creation order is a topological order because
// ops only reference earlier nodes). Leaves created from ParamT accumulate
// their gradient into the parameter's grad buffer, which survives tape
// clears and feeds the optimizer.
//
// Matrices are feature-major: [dim x batch]. A sequence is a vector of Vars,
// one per timestep. Variable-length batches use 0/1 row-vector masks.

template <class S>
struct ParamT {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> adam_m, adam_v;  // sized on first optimizer step

  ParamT() = default;
  ParamT(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  bool grad_is_zero() const { return grad.size() == 0 || grad.isZero(S(0)); }
};

template <class S>
using ParamRefs = std::vector<ParamT<S>*>;

template <class S>
class TapeT;

template <class S>
struct VarT {
  TapeT<S>* tape = nullptr;
  int idx = -1;

  bool valid() const { return tape != nullptr && idx >= 0; }
  const Mat<S>& val() const;
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

template <class S>
class TapeT {
 public:
  using M = Mat<S>;
  using Var = VarT<S>;

  struct Node {
    M value;
    M grad;  // lazily allocated to value's shape on first accumulation
    bool rg = false;
    std::function<void(TapeT&)> back;
  };

  bool grad_enabled = true;

  const Node& node(int i) const { return nodes_[i]; }
  Node& node(int i) { return nodes_[i]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() {
    nodes_.clear();
    param_cache_.clear();
  }

  // Drops every node created at or after mark; their Vars become invalid.
  // Param leaves cached below mark survive, so an eval decode loop can build
  // its weight/memory prefix once, checkpoint, and roll back each step.
  int checkpoint() const { return size(); }
  void truncate(int mark);

  // ---- leaves ----
  Var leaf(M v);                 // constant, no gradient
  Var input(M v);                // gradient-carrying leaf (finite-difference probes)
  // Leaf backed by a parameter; grads accumulate into p.grad. Repeated calls
  // on the same tape return the same node, so unrolled loops do not copy the
  // weights once per step.
  Var param(ParamT<S>& p);

  // ---- elementwise ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var max_elem(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, S c);
  Var add_scalar(Var a, S c);
  Var sub_from_scalar(Var a, S c);  // c - a
  Var reciprocal(Var a);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var exp_(Var a);
  Var log_(Var a);
  Var softplus(Var a);
  Var square(Var a);
  Var abs_(Var a);

  // ---- linear algebra ----
  Var matmul(Var a, Var b);
  Var linear(Var W, Var x, Var b);  // W*x + b, b is [n x 1] broadcast over columns

  // Fused LSTM cell. Wx:[4H x I], Wh:[4H x H], b:[4H x 1]; gate row order i,f,g,o.
  // Returns (h, c).
  std::pair<Var, Var> lstm_cell(Var Wx, Var Wh, Var b, Var x, Var h_prev, Var c_prev);

  // ---- shape ----
  Var vcat(const std::vector<Var>& parts);
  Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n);

  // ---- broadcasts over columns ----
  Var mul_rowvec(Var a, Var r);  // a[i,j] * r[0,j]
  Var div_rowvec(Var a, Var r);  // a[i,j] / r[0,j]

  // ---- reductions ----
  Var sum_all(Var a);   // [1 x 1]
  Var sum_rows(Var a);  // sum over the row index -> [1 x cols]

  // ---- softmax / losses ----
  Var softmax_cols(Var a);
  // Per-column cross entropy of logits against target ids, zeroed where
  // mask[j] == 0. Returns [1 x B].
  Var cross_entropy_cols(Var logits, const std::vector<int>& ids, const std::vector<S>& mask);

  // ---- embeddings / attention ----
  Var embedding(Var table, const std::vector<int>& ids);  // table [E x V] -> [E x B]
  // sum_l memory[l] * alpha.row(l); memory entries [H x B], alpha [L x B].
  Var context_sum(const std::vector<Var>& memory, Var alpha);

  void backward(Var loss);

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const ParamT<S>*, int> param_cache_;

  Var push(M value, bool rg, std::function<void(TapeT&)> back);
  bool rg_of(Var v) const { return nodes_[v.idx].rg; }
  template <class E>
  void accum(int idx, const E& g) {
    Node& n = nodes_[idx];
    if (!n.rg) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  friend struct VarT<S>;
};

template <class S>
inline const Mat<S>& VarT<S>::val() const {
  return tape->node(idx).value;
}

using Tape = TapeT<double>;
using Var = VarT<double>;
using Param = ParamT<double>;

}  // namespace seqfront::ad
