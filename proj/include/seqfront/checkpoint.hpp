#pragma once

#include "seqfront/autodiff.hpp"
#include "seqfront/config.hpp"

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace seqfront {

// Single-file training snapshot: a JSON header (run state + tensor index)
// followed by raw float32 payloads in index order. Frontend tensors live
// under embed./enc./dec., acoustic head tensors under ahead., optimizer
// moments under adam.m./adam.v. plus the owning tensor's name, so discarding
// the head after MTL is one namespace drop.
//
// With the named-substream RNG scheme, (master_seed, step) pins every
// generator, which is all the state a bit-exact resume needs.
struct Checkpoint {
  uint64_t config_hash = 0, vocab_hash = 0, master_seed = 0;
  int step = 0;      // training steps completed
  int opt_step = 0;  // Adam bias-correction counter
  double lambda = 1.0;
  TapLevel tap_level = TapLevel::L1;
  double best_metric = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::pair<std::string, MatF>> tensors;  // insertion-ordered

  void set(const std::string& name, const MatF& value);  // upsert
  const MatF* find(const std::string& name) const;
  bool has(const std::string& name) const { return find(name) != nullptr; }
  // Removes every tensor in the namespace, optimizer moments included.
  // Returns whether anything was dropped.
  bool drop_namespace(const std::string& prefix);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);  // parse failure -> InvalidInputError
};

// Parameter <-> checkpoint plumbing, keyed by parameter names.
void pack_params(Checkpoint& ck, const ad::ParamRefs<float>& ps);
// Missing tensor or shape mismatch -> InvalidInputError.
void unpack_params(const Checkpoint& ck, const ad::ParamRefs<float>& ps);

}  // namespace seqfront
