#pragma once

#include "seqfront/autodiff.hpp"
#include "seqfront/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace seqfront::nn {

// Every layer seeds its own init substream from (master, "init." + name), so
// parameter values depend only on the layer name, never on construction order.

template <class S>
void fill_uniform(Mat<S>& m, S bound, std::mt19937_64& g) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<S>((2.0 * rng::uniform01(g) - 1.0) * static_cast<double>(bound));
}

template <class S>
void fill_gauss(Mat<S>& m, S sd, std::mt19937_64& g) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<S>(rng::gauss(g) * static_cast<double>(sd));
}

template <class S>
ad::VarT<S> zeros(ad::TapeT<S>& t, Eigen::Index r, Eigen::Index c) {
  return t.leaf(Mat<S>::Zero(r, c));
}

template <class S>
ad::VarT<S> relu(ad::TapeT<S>& t, ad::VarT<S> x) {
  return t.max_elem(x, zeros(t, x.rows(), x.cols()));
}

// mask [1 x B] of 0/1: picks a where mask is 1, b where it is 0. Used to
// freeze finished sequences in lockstep-batched recurrences.
template <class S>
ad::VarT<S> masked_mix(ad::TapeT<S>& t, ad::VarT<S> mask, ad::VarT<S> a, ad::VarT<S> b) {
  return t.add(t.mul_rowvec(a, mask), t.mul_rowvec(b, t.sub_from_scalar(mask, S(1))));
}

// Inverted dropout; identity when train is false. The mask is filled in
// column-major order so results are reproducible for a fixed generator state.
template <class S>
ad::VarT<S> dropout(ad::TapeT<S>& t, ad::VarT<S> x, S rate, std::mt19937_64& g, bool train) {
  if (!train || rate <= S(0)) return x;
  require(rate < S(1), "dropout: rate must be < 1");
  const double keep = 1.0 - static_cast<double>(rate);
  Mat<S> m(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = rng::uniform01(g) < keep ? static_cast<S>(1.0 / keep) : S(0);
  return t.mul(x, t.leaf(std::move(m)));
}

template <class S>
struct LinearT {
  ad::ParamT<S> W, b;

  LinearT() = default;
  LinearT(const std::string& name, Eigen::Index out, Eigen::Index in)
      : W(name + ".W", out, in), b(name + ".b", out, 1) {}

  void init(uint64_t master) {
    auto g = rng::substream(master, "init." + W.name);
    const S bound = static_cast<S>(std::sqrt(6.0 / double(W.value.rows() + W.value.cols())));
    fill_uniform(W.value, bound, g);
    b.value.setZero();
  }

  ad::VarT<S> apply(ad::TapeT<S>& t, ad::VarT<S> x) {
    return t.linear(t.param(W), x, t.param(b));
  }

  void collect(ad::ParamRefs<S>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

template <class S>
struct LSTMT {
  ad::ParamT<S> Wx, Wh, b;  // gate rows packed [i; f; g; o]

  LSTMT() = default;
  LSTMT(const std::string& name, Eigen::Index hidden, Eigen::Index input)
      : Wx(name + ".Wx", 4 * hidden, input),
        Wh(name + ".Wh", 4 * hidden, hidden),
        b(name + ".b", 4 * hidden, 1) {}

  Eigen::Index hidden() const { return Wh.value.cols(); }

  void init(uint64_t master) {
    auto g = rng::substream(master, "init." + Wx.name);
    const S bound = static_cast<S>(1.0 / std::sqrt(double(hidden())));
    fill_uniform(Wx.value, bound, g);
    fill_uniform(Wh.value, bound, g);
    b.value.setZero();
    b.value.middleRows(hidden(), hidden()).setConstant(S(1));  // open forget gates
  }

  std::pair<ad::VarT<S>, ad::VarT<S>> step(ad::TapeT<S>& t, ad::VarT<S> x, ad::VarT<S> h_prev,
                                           ad::VarT<S> c_prev) {
    return t.lstm_cell(t.param(Wx), t.param(Wh), t.param(b), x, h_prev, c_prev);
  }

  void collect(ad::ParamRefs<S>& out) {
    out.push_back(&Wx);
    out.push_back(&Wh);
    out.push_back(&b);
  }
};

template <class S>
struct EmbeddingT {
  ad::ParamT<S> table;  // [dim x vocab]

  EmbeddingT() = default;
  EmbeddingT(const std::string& name, Eigen::Index dim, Eigen::Index vocab)
      : table(name, dim, vocab) {}

  void init(uint64_t master) {
    auto g = rng::substream(master, "init." + table.name);
    const S bound = static_cast<S>(std::sqrt(3.0 / double(table.value.rows())));
    fill_uniform(table.value, bound, g);
  }

  ad::VarT<S> apply(ad::TapeT<S>& t, const std::vector<int>& ids) {
    return t.embedding(t.param(table), ids);
  }

  void collect(ad::ParamRefs<S>& out) { out.push_back(&table); }
};

// 1-D convolution over time with zero padding ("same" length). Frames are
// [in x B] Vars; the kernel is stored flat as [out x in*kernel] so one vcat
// plus one linear evaluates each output frame.
template <class S>
struct Conv1dT {
  ad::ParamT<S> W, b;
  int kernel = 1;

  Conv1dT() = default;
  Conv1dT(const std::string& name, Eigen::Index out, Eigen::Index in, int k)
      : W(name + ".W", out, in * k), b(name + ".b", out, 1), kernel(k) {
    require(k % 2 == 1, "Conv1dT: kernel must be odd");
  }

  Eigen::Index in_channels() const { return W.value.cols() / kernel; }

  void init(uint64_t master) {
    auto g = rng::substream(master, "init." + W.name);
    const S bound =
        static_cast<S>(std::sqrt(6.0 / double(W.value.cols() + W.value.rows())));
    fill_uniform(W.value, bound, g);
    b.value.setZero();
  }

  std::vector<ad::VarT<S>> apply(ad::TapeT<S>& t, const std::vector<ad::VarT<S>>& x) {
    require(!x.empty(), "Conv1dT: empty sequence");
    const int T = static_cast<int>(x.size());
    const int half = kernel / 2;
    ad::VarT<S> pad = zeros(t, in_channels(), x[0].cols());
    std::vector<ad::VarT<S>> out;
    out.reserve(x.size());
    for (int f = 0; f < T; ++f) {
      std::vector<ad::VarT<S>> window;
      window.reserve(kernel);
      for (int d = -half; d <= half; ++d) {
        const int s = f + d;
        window.push_back(s >= 0 && s < T ? x[s] : pad);
      }
      out.push_back(t.linear(t.param(W), t.vcat(window), t.param(b)));
    }
    return out;
  }

  void collect(ad::ParamRefs<S>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
};

}  // namespace seqfront::nn
