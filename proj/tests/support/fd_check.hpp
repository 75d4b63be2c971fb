#pragma once

// Finite-difference gradient checking. Double precision only; float FD is
// too noisy for the tolerances used in the tests.

#include "seqfront/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace testsup {

// build(tape) must construct the loss from the current parameter values and
// return a [1 x 1] Var. Runs backward once, then probes every coordinate of
// every listed parameter with a centered difference. Returns the maximum
// relative error.
//
// The difference quotient carries ~|loss| * 1e-16 / eps of rounding noise, so
// coordinates whose gradient sits below that cannot be certified at all;
// `floor` clamps the denominator to keep them from reading as huge relative
// errors. Deep graphs with many near-dead coordinates need a floor above the
// noise (e.g. eps 1e-5, floor 1e-7).
template <class BuildLoss>
double fd_max_rel_err(const std::vector<seqfront::ad::Param*>& params, BuildLoss&& build,
                      double eps = 1e-6, double floor = 1e-8) {
  using seqfront::ad::Tape;
  for (auto* p : params) p->zero_grad();
  {
    Tape t;
    auto loss = build(t);
    t.backward(loss);
  }
  double max_rel = 0.0;
  for (auto* p : params) {
    for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
      for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
        const double orig = p->value(i, j);
        p->value(i, j) = orig + eps;
        Tape tp;
        const double lp = build(tp).val()(0, 0);
        p->value(i, j) = orig - eps;
        Tape tm;
        const double lm = build(tm).val()(0, 0);
        p->value(i, j) = orig;
        const double fd = (lp - lm) / (2.0 * eps);
        const double an = p->grad(i, j);
        const double denom = std::max({std::abs(fd), std::abs(an), floor});
        max_rel = std::max(max_rel, std::abs(fd - an) / denom);
      }
    }
  }
  return max_rel;
}

inline seqfront::MatD randn(Eigen::Index r, Eigen::Index c, uint64_t seed, double sd = 1.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d(0.0, sd);
  seqfront::MatD m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = d(g);
  return m;
}

}  // namespace testsup
