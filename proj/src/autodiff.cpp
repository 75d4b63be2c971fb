#include "seqfront/autodiff.hpp"

#include <cmath>

namespace seqfront::ad {

template <class S>
typename TapeT<S>::Var TapeT<S>::push(M value, bool rg, std::function<void(TapeT&)> back) {
  Node n;
  n.value = std::move(value);
  n.rg = rg && grad_enabled;
  if (n.rg) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

template <class S>
typename TapeT<S>::Var TapeT<S>::leaf(M v) {
  return push(std::move(v), false, nullptr);
}

template <class S>
typename TapeT<S>::Var TapeT<S>::input(M v) {
  return push(std::move(v), true, nullptr);
}

template <class S>
typename TapeT<S>::Var TapeT<S>::param(ParamT<S>& p) {
  auto it = param_cache_.find(&p);
  if (it != param_cache_.end()) return Var{this, it->second};
  int i = static_cast<int>(nodes_.size());
  ParamT<S>* pp = &p;
  Var v = push(p.value, true, [i, pp](TapeT& t) {
    if (t.nodes_[i].grad.size()) pp->grad += t.nodes_[i].grad;
  });
  param_cache_.emplace(pp, v.idx);
  return v;
}

// ---------------- elementwise ----------------

template <class S>
typename TapeT<S>::Var TapeT<S>::add(Var a, Var b) {
  int ia = a.idx, ib = b.idx;
  int i = size();
  return push(a.val() + b.val(), rg_of(a) || rg_of(b), [i, ia, ib](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    t.accum(ia, g);
    t.accum(ib, g);
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::sub(Var a, Var b) {
  int ia = a.idx, ib = b.idx;
  int i = size();
  return push(a.val() - b.val(), rg_of(a) || rg_of(b), [i, ia, ib](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    t.accum(ia, g);
    t.accum(ib, (-g).eval());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::mul(Var a, Var b) {
  int ia = a.idx, ib = b.idx;
  int i = size();
  return push(a.val().cwiseProduct(b.val()), rg_of(a) || rg_of(b), [i, ia, ib](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    t.accum(ia, g.cwiseProduct(t.nodes_[ib].value));
    t.accum(ib, g.cwiseProduct(t.nodes_[ia].value));
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::div(Var a, Var b) {
  int ia = a.idx, ib = b.idx;
  int i = size();
  return push(a.val().cwiseQuotient(b.val()), rg_of(a) || rg_of(b), [i, ia, ib](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    const M& bv = t.nodes_[ib].value;
    const M& v = t.nodes_[i].value;
    t.accum(ia, g.cwiseQuotient(bv));
    t.accum(ib, (-g.array() * v.array() / bv.array()).matrix());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::max_elem(Var a, Var b) {
  int ia = a.idx, ib = b.idx;
  int i = size();
  return push(a.val().cwiseMax(b.val()), rg_of(a) || rg_of(b), [i, ia, ib](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    const auto& av = t.nodes_[ia].value.array();
    const auto& bv = t.nodes_[ib].value.array();
    M sel = (av >= bv).template cast<S>();
    t.accum(ia, g.cwiseProduct(sel));
    t.accum(ib, g.cwiseProduct((M::Ones(sel.rows(), sel.cols()) - sel).eval()));
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::neg(Var a) {
  int ia = a.idx;
  int i = size();
  return push(-a.val(), rg_of(a), [i, ia](TapeT& t) { t.accum(ia, (-t.nodes_[i].grad).eval()); });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::scale(Var a, S c) {
  int ia = a.idx;
  int i = size();
  return push(a.val() * c, rg_of(a), [i, ia, c](TapeT& t) { t.accum(ia, (t.nodes_[i].grad * c).eval()); });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::add_scalar(Var a, S c) {
  int ia = a.idx;
  int i = size();
  return push((a.val().array() + c).matrix(), rg_of(a),
              [i, ia](TapeT& t) { t.accum(ia, t.nodes_[i].grad); });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::sub_from_scalar(Var a, S c) {
  int ia = a.idx;
  int i = size();
  return push((c - a.val().array()).matrix(), rg_of(a),
              [i, ia](TapeT& t) { t.accum(ia, (-t.nodes_[i].grad).eval()); });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::reciprocal(Var a) {
  int ia = a.idx;
  int i = size();
  return push(a.val().cwiseInverse(), rg_of(a), [i, ia](TapeT& t) {
    const M& v = t.nodes_[i].value;
    t.accum(ia, (-t.nodes_[i].grad.array() * v.array() * v.array()).matrix());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::sigmoid(Var a) {
  int ia = a.idx;
  int i = size();
  M v = a.val().unaryExpr([](S x) {
    if (x >= S(0)) {
      S e = std::exp(-x);
      return S(1) / (S(1) + e);
    }
    S e = std::exp(x);
    return e / (S(1) + e);
  });
  return push(std::move(v), rg_of(a), [i, ia](TapeT& t) {
    const auto& v = t.nodes_[i].value.array();
    t.accum(ia, (t.nodes_[i].grad.array() * v * (S(1) - v)).matrix());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::tanh_(Var a) {
  int ia = a.idx;
  int i = size();
  return push(a.val().array().tanh().matrix(), rg_of(a), [i, ia](TapeT& t) {
    const auto& v = t.nodes_[i].value.array();
    t.accum(ia, (t.nodes_[i].grad.array() * (S(1) - v * v)).matrix());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::exp_(Var a) {
  int ia = a.idx;
  int i = size();
  return push(a.val().array().exp().matrix(), rg_of(a), [i, ia](TapeT& t) {
    t.accum(ia, t.nodes_[i].grad.cwiseProduct(t.nodes_[i].value));
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::log_(Var a) {
  int ia = a.idx;
  int i = size();
  return push(a.val().array().log().matrix(), rg_of(a), [i, ia](TapeT& t) {
    t.accum(ia, t.nodes_[i].grad.cwiseQuotient(t.nodes_[ia].value));
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::softplus(Var a) {
  int ia = a.idx;
  int i = size();
  M v = a.val().unaryExpr([](S x) {
    if (x > S(30)) return x;
    if (x < S(-30)) return std::exp(x);
    return std::log1p(std::exp(x));
  });
  return push(std::move(v), rg_of(a), [i, ia](TapeT& t) {
    M s = t.nodes_[ia].value.unaryExpr([](S x) {
      if (x >= S(0)) {
        S e = std::exp(-x);
        return S(1) / (S(1) + e);
      }
      S e = std::exp(x);
      return e / (S(1) + e);
    });
    t.accum(ia, t.nodes_[i].grad.cwiseProduct(s));
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::square(Var a) {
  int ia = a.idx;
  int i = size();
  return push(a.val().array().square().matrix(), rg_of(a), [i, ia](TapeT& t) {
    t.accum(ia, (S(2) * t.nodes_[i].grad.array() * t.nodes_[ia].value.array()).matrix());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::abs_(Var a) {
  int ia = a.idx;
  int i = size();
  return push(a.val().array().abs().matrix(), rg_of(a), [i, ia](TapeT& t) {
    // sign(0) = 0 subgradient
    M sgn = t.nodes_[ia].value.unaryExpr(
        [](S x) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
    t.accum(ia, t.nodes_[i].grad.cwiseProduct(sgn));
  });
}

// ---------------- linear algebra ----------------

template <class S>
typename TapeT<S>::Var TapeT<S>::matmul(Var a, Var b) {
  int ia = a.idx, ib = b.idx;
  int i = size();
  return push(a.val() * b.val(), rg_of(a) || rg_of(b), [i, ia, ib](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    t.accum(ia, (g * t.nodes_[ib].value.transpose()).eval());
    t.accum(ib, (t.nodes_[ia].value.transpose() * g).eval());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::linear(Var W, Var x, Var b) {
  require(b.val().cols() == 1, "linear: bias must be a column vector");
  require(W.val().rows() == b.val().rows(), "linear: bias rows must match W rows");
  int iw = W.idx, ix = x.idx, ib = b.idx;
  int i = size();
  M v = W.val() * x.val();
  v.colwise() += Vec<S>(b.val().col(0));
  return push(std::move(v), rg_of(W) || rg_of(x) || rg_of(b), [i, iw, ix, ib](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    t.accum(iw, (g * t.nodes_[ix].value.transpose()).eval());
    t.accum(ix, (t.nodes_[iw].value.transpose() * g).eval());
    t.accum(ib, g.rowwise().sum());
  });
}

template <class S>
std::pair<typename TapeT<S>::Var, typename TapeT<S>::Var> TapeT<S>::lstm_cell(
    Var Wx, Var Wh, Var b, Var x, Var h_prev, Var c_prev) {
  const Eigen::Index H = Wh.val().cols();
  const Eigen::Index B = x.val().cols();

  M z = Wx.val() * x.val() + Wh.val() * h_prev.val();
  z.colwise() += Vec<S>(b.val().col(0));

  // Post-activation gates packed [i; f; g; o].
  M gates(4 * H, B);
  auto sig = [](S v) {
    if (v >= S(0)) {
      S e = std::exp(-v);
      return S(1) / (S(1) + e);
    }
    S e = std::exp(v);
    return e / (S(1) + e);
  };
  gates.topRows(2 * H) = z.topRows(2 * H).unaryExpr(sig);
  gates.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
  gates.bottomRows(H) = z.bottomRows(H).unaryExpr(sig);

  bool rg = rg_of(Wx) || rg_of(Wh) || rg_of(b) || rg_of(x) || rg_of(h_prev) || rg_of(c_prev);
  int iwx = Wx.idx, iwh = Wh.idx, ib = b.idx, ix = x.idx, ih = h_prev.idx, ic = c_prev.idx;

  // gates node: its grad holds d(post-activation gates); back maps through the
  // activations and into the weight/input leaves.
  int ig = size();
  Var gv = push(std::move(gates), rg, [ig, iwx, iwh, ib, ix, ih, H](TapeT& t) {
    const M& ga = t.nodes_[ig].grad;  // [di; df; dg; do] post-activation
    const M& gval = t.nodes_[ig].value;
    M dz(gval.rows(), gval.cols());
    auto sg = gval.topRows(2 * H).array();
    dz.topRows(2 * H) = (ga.topRows(2 * H).array() * sg * (S(1) - sg)).matrix();
    auto gg = gval.middleRows(2 * H, H).array();
    dz.middleRows(2 * H, H) = (ga.middleRows(2 * H, H).array() * (S(1) - gg * gg)).matrix();
    auto og = gval.bottomRows(H).array();
    dz.bottomRows(H) = (ga.bottomRows(H).array() * og * (S(1) - og)).matrix();

    t.accum(iwx, (dz * t.nodes_[ix].value.transpose()).eval());
    t.accum(iwh, (dz * t.nodes_[ih].value.transpose()).eval());
    t.accum(ib, dz.rowwise().sum());
    t.accum(ix, (t.nodes_[iwx].value.transpose() * dz).eval());
    t.accum(ih, (t.nodes_[iwh].value.transpose() * dz).eval());
  });

  const M& gv_ref = gv.val();
  M c_new = gv_ref.middleRows(H, H).cwiseProduct(c_prev.val()) +
            gv_ref.topRows(H).cwiseProduct(gv_ref.middleRows(2 * H, H));

  int icn = size();
  Var cv = push(std::move(c_new), rg, [icn, ig, ic, H](TapeT& t) {
    const M& dc = t.nodes_[icn].grad;
    const M& gval = t.nodes_[ig].value;
    M dg(gval.rows(), gval.cols());
    dg.setZero();
    dg.topRows(H) = dc.cwiseProduct(gval.middleRows(2 * H, H));                    // di
    dg.middleRows(H, H) = dc.cwiseProduct(t.nodes_[ic].value);                     // df
    dg.middleRows(2 * H, H) = dc.cwiseProduct(gval.topRows(H));                    // dg~
    t.accum(ig, dg);
    t.accum(ic, dc.cwiseProduct(gval.middleRows(H, H)));
  });

  M h_new = gv.val().bottomRows(H).cwiseProduct(cv.val().array().tanh().matrix());
  int ihn = size();
  Var hv = push(std::move(h_new), rg, [ihn, ig, icn, H](TapeT& t) {
    const M& dh = t.nodes_[ihn].grad;
    const M& gval = t.nodes_[ig].value;
    M tc = t.nodes_[icn].value.array().tanh().matrix();
    M dg = M::Zero(gval.rows(), gval.cols());
    dg.bottomRows(H) = dh.cwiseProduct(tc);  // do
    t.accum(ig, dg);
    t.accum(icn, (dh.array() * gval.bottomRows(H).array() * (S(1) - tc.array() * tc.array()))
                     .matrix());
  });

  return {hv, cv};
}

// ---------------- shape ----------------

template <class S>
typename TapeT<S>::Var TapeT<S>::vcat(const std::vector<Var>& parts) {
  require(!parts.empty(), "vcat: empty part list");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].val().cols();
  bool rg = false;
  std::vector<int> idxs;
  std::vector<Eigen::Index> offs;
  idxs.reserve(parts.size());
  for (const Var& p : parts) {
    offs.push_back(rows);
    rows += p.val().rows();
    rg = rg || rg_of(p);
    idxs.push_back(p.idx);
  }
  M v(rows, cols);
  for (size_t k = 0; k < parts.size(); ++k) v.middleRows(offs[k], parts[k].val().rows()) = parts[k].val();
  int i = size();
  return push(std::move(v), rg, [i, idxs, offs](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    for (size_t k = 0; k < idxs.size(); ++k) {
      Eigen::Index n = t.nodes_[idxs[k]].value.rows();
      t.accum(idxs[k], g.middleRows(offs[k], n));
    }
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
  int ia = a.idx;
  int i = size();
  return push(a.val().middleRows(r0, n), rg_of(a), [i, ia, r0, n](TapeT& t) {
    const M& av = t.nodes_[ia].value;
    M g = M::Zero(av.rows(), av.cols());
    g.middleRows(r0, n) = t.nodes_[i].grad;
    t.accum(ia, g);
  });
}

// ---------------- column broadcasts ----------------

template <class S>
typename TapeT<S>::Var TapeT<S>::mul_rowvec(Var a, Var r) {
  int ia = a.idx, ir = r.idx;
  int i = size();
  M v = (a.val().array().rowwise() * r.val().row(0).array()).matrix();
  return push(std::move(v), rg_of(a) || rg_of(r), [i, ia, ir](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    t.accum(ia, (g.array().rowwise() * t.nodes_[ir].value.row(0).array()).matrix());
    t.accum(ir, (g.cwiseProduct(t.nodes_[ia].value)).colwise().sum().eval());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::div_rowvec(Var a, Var r) {
  int ia = a.idx, ir = r.idx;
  int i = size();
  M v = (a.val().array().rowwise() / r.val().row(0).array()).matrix();
  return push(std::move(v), rg_of(a) || rg_of(r), [i, ia, ir](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    const auto rr = t.nodes_[ir].value.row(0).array();
    t.accum(ia, (g.array().rowwise() / rr).matrix());
    M gv = g.cwiseProduct(t.nodes_[i].value);
    t.accum(ir, (-(gv.colwise().sum().array()) / rr).matrix());
  });
}

// ---------------- reductions ----------------

template <class S>
typename TapeT<S>::Var TapeT<S>::sum_all(Var a) {
  int ia = a.idx;
  int i = size();
  M v(1, 1);
  v(0, 0) = a.val().sum();
  return push(std::move(v), rg_of(a), [i, ia](TapeT& t) {
    const M& av = t.nodes_[ia].value;
    S g = t.nodes_[i].grad(0, 0);
    t.accum(ia, M::Constant(av.rows(), av.cols(), g));
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::sum_rows(Var a) {
  int ia = a.idx;
  int i = size();
  return push(a.val().colwise().sum().eval(), rg_of(a), [i, ia](TapeT& t) {
    const M& av = t.nodes_[ia].value;
    t.accum(ia, t.nodes_[i].grad.replicate(av.rows(), 1).eval());
  });
}

// ---------------- softmax / losses ----------------

template <class S>
typename TapeT<S>::Var TapeT<S>::softmax_cols(Var a) {
  int ia = a.idx;
  int i = size();
  M v = a.val();
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    auto col = v.col(j).array();
    S m = col.maxCoeff();
    v.col(j) = (col - m).exp();
    v.col(j) /= v.col(j).sum();
  }
  return push(std::move(v), rg_of(a), [i, ia](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    const M& v = t.nodes_[i].value;
    M gv = g.cwiseProduct(v);
    Eigen::RowVectorX<S> dots = gv.colwise().sum();
    t.accum(ia, (gv - (v.array().rowwise() * dots.array()).matrix()).eval());
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::cross_entropy_cols(Var logits, const std::vector<int>& ids,
                                                    const std::vector<S>& mask) {
  const M& L = logits.val();
  require(static_cast<Eigen::Index>(ids.size()) == L.cols(), "cross_entropy: ids/cols mismatch");
  require(mask.size() == ids.size(), "cross_entropy: mask size mismatch");
  M v(1, L.cols());
  for (Eigen::Index j = 0; j < L.cols(); ++j) {
    if (mask[j] == S(0)) {
      v(0, j) = S(0);
      continue;
    }
    require(ids[j] >= 0 && ids[j] < L.rows(), "cross_entropy: id out of range");
    auto col = L.col(j).array();
    S m = col.maxCoeff();
    S lse = m + std::log((col - m).exp().sum());
    v(0, j) = mask[j] * (lse - L(ids[j], j));
  }
  int ia = logits.idx;
  int i = size();
  return push(std::move(v), rg_of(logits), [i, ia, ids, mask](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    const M& L = t.nodes_[ia].value;
    M d = M::Zero(L.rows(), L.cols());
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
      if (mask[j] == S(0)) continue;
      auto col = L.col(j).array();
      S m = col.maxCoeff();
      Eigen::ArrayX<S> p = (col - m).exp();
      p /= p.sum();
      d.col(j) = (p * g(0, j) * mask[j]).matrix();
      d(ids[j], j) -= g(0, j) * mask[j];
    }
    t.accum(ia, d);
  });
}

// ---------------- embeddings / attention ----------------

template <class S>
typename TapeT<S>::Var TapeT<S>::embedding(Var table, const std::vector<int>& ids) {
  const M& T = table.val();
  M v(T.rows(), static_cast<Eigen::Index>(ids.size()));
  for (size_t j = 0; j < ids.size(); ++j) {
    require(ids[j] >= 0 && ids[j] < T.cols(), "embedding: id out of range");
    v.col(static_cast<Eigen::Index>(j)) = T.col(ids[j]);
  }
  int it = table.idx;
  int i = size();
  return push(std::move(v), rg_of(table), [i, it, ids](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    const M& T = t.nodes_[it].value;
    M d = M::Zero(T.rows(), T.cols());
    for (size_t j = 0; j < ids.size(); ++j) d.col(ids[j]) += g.col(static_cast<Eigen::Index>(j));
    t.accum(it, d);
  });
}

template <class S>
typename TapeT<S>::Var TapeT<S>::context_sum(const std::vector<Var>& memory, Var alpha) {
  require(!memory.empty(), "context_sum: empty memory");
  require(alpha.val().rows() == static_cast<Eigen::Index>(memory.size()),
          "context_sum: alpha rows must match memory length");
  const Eigen::Index H = memory[0].val().rows();
  const Eigen::Index B = memory[0].val().cols();
  M v = M::Zero(H, B);
  const M& A = alpha.val();
  bool rg = rg_of(alpha);
  std::vector<int> midx;
  midx.reserve(memory.size());
  for (size_t l = 0; l < memory.size(); ++l) {
    v += (memory[l].val().array().rowwise() * A.row(static_cast<Eigen::Index>(l)).array()).matrix();
    rg = rg || rg_of(memory[l]);
    midx.push_back(memory[l].idx);
  }
  int iA = alpha.idx;
  int i = size();
  return push(std::move(v), rg, [i, iA, midx](TapeT& t) {
    const M& g = t.nodes_[i].grad;
    const M& A = t.nodes_[iA].value;
    M dA = M::Zero(A.rows(), A.cols());
    for (size_t l = 0; l < midx.size(); ++l) {
      const M& mem = t.nodes_[midx[l]].value;
      t.accum(midx[l],
              (g.array().rowwise() * A.row(static_cast<Eigen::Index>(l)).array()).matrix());
      dA.row(static_cast<Eigen::Index>(l)) = g.cwiseProduct(mem).colwise().sum();
    }
    t.accum(iA, dA);
  });
}

template <class S>
void TapeT<S>::truncate(int mark) {
  require(mark >= 0 && mark <= size(), "truncate: mark out of range");
  for (auto it = param_cache_.begin(); it != param_cache_.end();)
    it = it->second >= mark ? param_cache_.erase(it) : std::next(it);
  nodes_.resize(mark);
}

template <class S>
void TapeT<S>::backward(Var loss) {
  require(loss.val().rows() == 1 && loss.val().cols() == 1, "backward: loss must be scalar");
  Node& ln = nodes_[loss.idx];
  require(ln.rg, "backward: loss does not require grad");
  ln.grad = M::Ones(1, 1);
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.rg && n.back && n.grad.size() != 0) n.back(*this);
  }
}

template class TapeT<float>;
template class TapeT<double>;

}  // namespace seqfront::ad
