#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "seqfront/autodiff.hpp"
#include "support/fd_check.hpp"

#include <cmath>

using namespace seqfront;
using namespace seqfront::ad;
using testsup::fd_max_rel_err;
using testsup::randn;

namespace {

// Weighted scalarization so every output coordinate carries a distinct
// gradient coefficient.
Var weigh(Tape& t, Var y, uint64_t seed) {
  return t.sum_all(t.mul(y, t.leaf(randn(y.rows(), y.cols(), seed))));
}

Param make_param(const char* name, const MatD& v) {
  Param p(name, v.rows(), v.cols());
  p.value = v;
  return p;
}

}  // namespace

TEST_CASE("unary elementwise ops match finite differences") {
  MatD a0 = randn(3, 4, 1);
  MatD pos = (a0.array().abs() + 0.5).matrix();  // bounded away from 0 for log etc.

  auto check = [](const MatD& x0, auto op) {
    Param pa = make_param("a", x0);
    return fd_max_rel_err({&pa}, [&](Tape& t) { return weigh(t, op(t, t.param(pa)), 99); });
  };

  CHECK(check(a0, [](Tape& t, Var a) { return t.neg(a); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.scale(a, 1.7); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.add_scalar(a, -0.3); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.sub_from_scalar(a, 2.0); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.sigmoid(a); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.tanh_(a); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.exp_(a); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.softplus(a); }) < 1e-6);
  CHECK(check(a0, [](Tape& t, Var a) { return t.square(a); }) < 1e-6);
  CHECK(check(pos, [](Tape& t, Var a) { return t.log_(a); }) < 1e-6);
  CHECK(check(pos, [](Tape& t, Var a) { return t.reciprocal(a); }) < 1e-6);
  CHECK(check(pos, [](Tape& t, Var a) { return t.abs_(a); }) < 1e-6);
  CHECK(check((-pos).eval(), [](Tape& t, Var a) { return t.abs_(a); }) < 1e-6);
}

TEST_CASE("binary elementwise ops match finite differences") {
  MatD a0 = randn(3, 4, 2);
  MatD b0 = randn(3, 4, 3);
  MatD bpos = (b0.array().abs() + 0.5).matrix();
  // keep |a-b| large so the max subgradient is stable under the FD probe
  MatD bfar = a0 + ((b0.array() >= 0).cast<double>() * 2.0 - 1.0).matrix();

  auto check = [](const MatD& x0, const MatD& y0, auto op) {
    Param pa = make_param("a", x0);
    Param pb = make_param("b", y0);
    return fd_max_rel_err(
        {&pa, &pb}, [&](Tape& t) { return weigh(t, op(t, t.param(pa), t.param(pb)), 99); });
  };

  CHECK(check(a0, b0, [](Tape& t, Var a, Var b) { return t.add(a, b); }) < 1e-6);
  CHECK(check(a0, b0, [](Tape& t, Var a, Var b) { return t.sub(a, b); }) < 1e-6);
  CHECK(check(a0, b0, [](Tape& t, Var a, Var b) { return t.mul(a, b); }) < 1e-6);
  CHECK(check(a0, bpos, [](Tape& t, Var a, Var b) { return t.div(a, b); }) < 1e-6);
  CHECK(check(a0, bfar, [](Tape& t, Var a, Var b) { return t.max_elem(a, b); }) < 1e-6);
}

TEST_CASE("matmul and linear match finite differences") {
  Param W = make_param("W", randn(3, 4, 4));
  Param x = make_param("x", randn(4, 5, 5));
  Param b = make_param("b", randn(3, 1, 6));

  CHECK(fd_max_rel_err({&W, &x}, [&](Tape& t) {
          return weigh(t, t.matmul(t.param(W), t.param(x)), 99);
        }) < 1e-6);
  CHECK(fd_max_rel_err({&W, &x, &b}, [&](Tape& t) {
          return weigh(t, t.linear(t.param(W), t.param(x), t.param(b)), 99);
        }) < 1e-6);
}

TEST_CASE("linear broadcasts the bias over columns") {
  Tape t;
  Param W = make_param("W", MatD::Identity(2, 2));
  Param b = make_param("b", randn(2, 1, 7));
  MatD x0 = randn(2, 3, 8);
  Var y = t.linear(t.param(W), t.leaf(x0), t.param(b));
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 2; ++i) CHECK(y.val()(i, j) == doctest::Approx(x0(i, j) + b.value(i, 0)));
}

TEST_CASE("lstm_cell matches an unfused reference") {
  const int H = 4, I = 3, B = 2;
  Param Wx = make_param("Wx", randn(4 * H, I, 10, 0.4));
  Param Wh = make_param("Wh", randn(4 * H, H, 11, 0.4));
  Param b = make_param("b", randn(4 * H, 1, 12, 0.4));
  Param x = make_param("x", randn(I, B, 13));
  Param h0 = make_param("h0", randn(H, B, 14, 0.5));
  Param c0 = make_param("c0", randn(H, B, 15, 0.5));
  std::vector<Param*> ps{&Wx, &Wh, &b, &x, &h0, &c0};

  auto fused = [&](Tape& t) {
    auto [h, c] = t.lstm_cell(t.param(Wx), t.param(Wh), t.param(b), t.param(x), t.param(h0),
                              t.param(c0));
    return t.add(weigh(t, h, 99), weigh(t, c, 100));
  };
  auto unfused = [&](Tape& t) {
    Var z = t.add(t.matmul(t.param(Wx), t.param(x)),
                  t.linear(t.param(Wh), t.param(h0), t.param(b)));
    Var i = t.sigmoid(t.slice_rows(z, 0, H));
    Var f = t.sigmoid(t.slice_rows(z, H, H));
    Var g = t.tanh_(t.slice_rows(z, 2 * H, H));
    Var o = t.sigmoid(t.slice_rows(z, 3 * H, H));
    Var c = t.add(t.mul(f, t.param(c0)), t.mul(i, g));
    Var h = t.mul(o, t.tanh_(c));
    return t.add(weigh(t, h, 99), weigh(t, c, 100));
  };

  double lf, lu;
  std::vector<MatD> gf, gu;
  {
    for (auto* p : ps) p->zero_grad();
    Tape t;
    Var loss = fused(t);
    t.backward(loss);
    lf = loss.val()(0, 0);
    for (auto* p : ps) gf.push_back(p->grad);
  }
  {
    for (auto* p : ps) p->zero_grad();
    Tape t;
    Var loss = unfused(t);
    t.backward(loss);
    lu = loss.val()(0, 0);
    for (auto* p : ps) gu.push_back(p->grad);
  }
  CHECK(lf == doctest::Approx(lu).epsilon(1e-12));
  for (size_t k = 0; k < ps.size(); ++k)
    CHECK((gf[k] - gu[k]).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(fd_max_rel_err(ps, fused) < 1e-6);
}

TEST_CASE("vcat and slice_rows are inverses and differentiable") {
  Param a = make_param("a", randn(2, 3, 20));
  Param b = make_param("b", randn(4, 3, 21));

  {
    Tape t;
    Var cat = t.vcat({t.param(a), t.param(b)});
    CHECK(cat.rows() == 6);
    CHECK((t.slice_rows(cat, 0, 2).val() - a.value).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t.slice_rows(cat, 2, 4).val() - b.value).cwiseAbs().maxCoeff() == 0.0);
  }

  CHECK(fd_max_rel_err({&a, &b}, [&](Tape& t) {
          Var cat = t.vcat({t.param(a), t.param(b)});
          return weigh(t, t.sigmoid(t.slice_rows(cat, 1, 4)), 99);
        }) < 1e-6);
}

TEST_CASE("row-vector broadcasts match finite differences") {
  Param a = make_param("a", randn(3, 4, 22));
  Param r = make_param("r", (randn(1, 4, 23).array().abs() + 0.5).matrix());

  CHECK(fd_max_rel_err({&a, &r}, [&](Tape& t) {
          return weigh(t, t.mul_rowvec(t.param(a), t.param(r)), 99);
        }) < 1e-6);
  CHECK(fd_max_rel_err({&a, &r}, [&](Tape& t) {
          return weigh(t, t.div_rowvec(t.param(a), t.param(r)), 99);
        }) < 1e-6);
}

TEST_CASE("reductions") {
  Param a = make_param("a", randn(3, 4, 24));
  {
    Tape t;
    CHECK(t.sum_all(t.param(a)).val()(0, 0) == doctest::Approx(a.value.sum()));
    Var sr = t.sum_rows(t.param(a));
    CHECK(sr.rows() == 1);
    CHECK(sr.cols() == 4);
    for (int j = 0; j < 4; ++j) CHECK(sr.val()(0, j) == doctest::Approx(a.value.col(j).sum()));
  }
  CHECK(fd_max_rel_err({&a}, [&](Tape& t) {
          return weigh(t, t.sum_rows(t.square(t.param(a))), 99);
        }) < 1e-6);
}

TEST_CASE("softmax_cols normalizes and differentiates") {
  Param a = make_param("a", randn(5, 3, 25, 2.0));
  {
    Tape t;
    Var s = t.softmax_cols(t.param(a));
    for (int j = 0; j < 3; ++j) {
      CHECK(s.val().col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(s.val().col(j).minCoeff() > 0.0);
    }
  }
  CHECK(fd_max_rel_err({&a}, [&](Tape& t) {
          return weigh(t, t.softmax_cols(t.param(a)), 99);
        }) < 1e-6);
}

TEST_CASE("cross_entropy_cols value, masking and gradient") {
  Param L = make_param("L", randn(6, 4, 26, 2.0));
  std::vector<int> ids{2, 0, 5, 3};
  std::vector<double> mask{1, 1, 0, 1};

  {
    Tape t;
    Var ce = t.cross_entropy_cols(t.param(L), ids, mask);
    CHECK(ce.rows() == 1);
    CHECK(ce.cols() == 4);
    for (int j = 0; j < 4; ++j) {
      Eigen::ArrayXd col = L.value.col(j).array();
      double lse = std::log((col - col.maxCoeff()).exp().sum()) + col.maxCoeff();
      double want = mask[j] == 0.0 ? 0.0 : lse - L.value(ids[j], j);
      CHECK(ce.val()(0, j) == doctest::Approx(want).epsilon(1e-12));
      CHECK(ce.val()(0, j) >= 0.0);
    }
  }

  // near-zero softmax probabilities leave FD with little signal; 1e-5 is
  // still far inside the model-level 1e-3 gradient-check budget
  CHECK(fd_max_rel_err({&L}, [&](Tape& t) {
          return t.sum_all(t.cross_entropy_cols(t.param(L), ids, mask));
        }, 1e-5) < 1e-5);

  // masked column contributes exactly zero gradient
  L.zero_grad();
  {
    Tape t;
    Var loss = t.sum_all(t.cross_entropy_cols(t.param(L), ids, mask));
    t.backward(loss);
  }
  CHECK(L.grad.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(L.grad.col(0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("embedding gathers columns and accumulates repeated ids") {
  Param T = make_param("T", randn(3, 5, 27));
  std::vector<int> ids{4, 1, 4};
  {
    Tape t;
    Var e = t.embedding(t.param(T), ids);
    CHECK(e.cols() == 3);
    CHECK((e.val().col(0) - T.value.col(4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((e.val().col(2) - T.value.col(4)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(fd_max_rel_err({&T}, [&](Tape& t) {
          return weigh(t, t.tanh_(t.embedding(t.param(T), ids)), 99);
        }) < 1e-6);

  T.zero_grad();
  {
    Tape t;
    t.backward(t.sum_all(t.embedding(t.param(T), ids)));
  }
  CHECK(T.grad.col(4).isApprox(MatD::Constant(3, 1, 2.0)));
}

TEST_CASE("context_sum blends memory by attention weights") {
  Param m0 = make_param("m0", randn(3, 2, 28));
  Param m1 = make_param("m1", randn(3, 2, 29));
  Param al = make_param("al", (randn(2, 2, 30).array().abs() + 0.1).matrix());

  {
    Tape t;
    Var c = t.context_sum({t.param(m0), t.param(m1)}, t.param(al));
    MatD want = (m0.value.array().rowwise() * al.value.row(0).array()).matrix() +
                (m1.value.array().rowwise() * al.value.row(1).array()).matrix();
    CHECK((c.val() - want).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK(fd_max_rel_err({&m0, &m1, &al}, [&](Tape& t) {
          return weigh(t, t.context_sum({t.param(m0), t.param(m1)}, t.param(al)), 99);
        }) < 1e-6);
}

TEST_CASE("parameter reuse accumulates gradients") {
  Param a = make_param("a", randn(2, 2, 31));
  CHECK(fd_max_rel_err({&a}, [&](Tape& t) {
          Var x = t.param(a);
          Var y = t.param(a);  // same parameter, second leaf
          return t.sum_all(t.add(t.mul(x, y), t.sigmoid(x)));
        }) < 1e-6);
}

TEST_CASE("grad_enabled=false produces constant nodes") {
  Param a = make_param("a", randn(2, 2, 32));
  Tape t;
  t.grad_enabled = false;
  Var y = t.sum_all(t.square(t.param(a)));
  CHECK_THROWS_AS(t.backward(y), Error);
}

TEST_CASE("backward requires a scalar loss") {
  Param a = make_param("a", randn(2, 2, 33));
  Tape t;
  Var y = t.square(t.param(a));
  CHECK_THROWS_AS(t.backward(y), Error);
}

TEST_CASE("float instantiation runs") {
  TapeT<float> t;
  ParamT<float> a("a", 2, 2);
  a.value << 1.0f, 2.0f, 3.0f, 4.0f;
  auto y = t.sum_all(t.square(t.param(a)));
  t.backward(y);
  CHECK(y.val()(0, 0) == doctest::Approx(30.0f));
  CHECK(a.grad(1, 1) == doctest::Approx(8.0f));
}
