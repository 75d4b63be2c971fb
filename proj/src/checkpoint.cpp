#include "seqfront/checkpoint.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace seqfront {

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'F', '1', 'C', 'K', 'P', 'T'};

bool in_namespace(const std::string& name, const std::string& prefix) {
  if (name.rfind(prefix, 0) == 0) return true;
  for (const char* mom : {"adam.m.", "adam.v."})
    if (name.rfind(mom + prefix, 0) == 0) return true;
  return false;
}

}  // namespace

void Checkpoint::set(const std::string& name, const MatF& value) {
  for (auto& [n, v] : tensors)
    if (n == name) {
      v = value;
      return;
    }
  tensors.emplace_back(name, value);
}

const MatF* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return &v;
  return nullptr;
}

bool Checkpoint::drop_namespace(const std::string& prefix) {
  const size_t before = tensors.size();
  std::erase_if(tensors, [&](const auto& t) { return in_namespace(t.first, prefix); });
  return tensors.size() != before;
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json h;
  h["config_hash"] = config_hash;
  h["vocab_hash"] = vocab_hash;
  h["master_seed"] = master_seed;
  h["step"] = step;
  h["opt_step"] = opt_step;
  h["lambda"] = lambda;
  h["tap_level"] = to_string(tap_level);
  if (std::isnan(best_metric))
    h["best_metric"] = nullptr;
  else
    h["best_metric"] = best_metric;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, v] : tensors)
    index.push_back({{"name", name}, {"rows", v.rows()}, {"cols", v.cols()}});
  h["tensors"] = index;
  const std::string header = h.dump();  // keys sorted: dump is canonical

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "checkpoint: cannot open " + path + " for writing");
  f.write(kMagic, sizeof(kMagic));
  const uint64_t len = header.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, v] : tensors)
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(float) * v.size()));
  f.flush();
  require(f.good(), "checkpoint: short write to " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  require(f.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
          "checkpoint: " + path + " is not a checkpoint file");
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  require(f.good() && len > 0 && len < (1ull << 30), "checkpoint: corrupt header length");
  std::string header(len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(len));
  require(f.good(), "checkpoint: truncated header");

  nlohmann::json h = nlohmann::json::parse(header, nullptr, false);
  require(!h.is_discarded(), "checkpoint: header is not valid JSON");
  Checkpoint ck;
  try {
    ck.config_hash = h.at("config_hash").get<uint64_t>();
    ck.vocab_hash = h.at("vocab_hash").get<uint64_t>();
    ck.master_seed = h.at("master_seed").get<uint64_t>();
    ck.step = h.at("step").get<int>();
    ck.opt_step = h.at("opt_step").get<int>();
    ck.lambda = h.at("lambda").get<double>();
    ck.tap_level = tap_level_from_string(h.at("tap_level").get<std::string>());
    if (!h.at("best_metric").is_null()) ck.best_metric = h.at("best_metric").get<double>();
    for (const auto& e : h.at("tensors")) {
      const auto rows = e.at("rows").get<Eigen::Index>();
      const auto cols = e.at("cols").get<Eigen::Index>();
      require(rows >= 0 && cols >= 0, "checkpoint: negative tensor shape");
      MatF v(rows, cols);
      f.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(sizeof(float) * v.size()));
      require(f.good(), "checkpoint: truncated tensor payload");
      ck.tensors.emplace_back(e.at("name").get<std::string>(), std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError("checkpoint: malformed header: " + std::string(e.what()));
  }
  return ck;
}

void pack_params(Checkpoint& ck, const ad::ParamRefs<float>& ps) {
  for (const auto* p : ps) ck.set(p->name, p->value);
}

void unpack_params(const Checkpoint& ck, const ad::ParamRefs<float>& ps) {
  for (auto* p : ps) {
    const MatF* v = ck.find(p->name);
    require(v != nullptr, "checkpoint: missing tensor " + p->name);
    require(v->rows() == p->value.rows() && v->cols() == p->value.cols(),
            "checkpoint: shape mismatch for " + p->name);
    p->value = *v;
  }
}

}  // namespace seqfront
