#include "netcvr/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "netcvr/checkpoint.hpp"
#include "netcvr/objective.hpp"

namespace netcvr {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::shared: return "shared";
    case Variant::separate: return "separate";
    case Variant::hybrid: return "hybrid";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "shared") return Variant::shared;
  if (s == "separate") return Variant::separate;
  if (s == "hybrid") return Variant::hybrid;
  throw std::invalid_argument("unknown variant: " + s);
}

const char* to_string(SamplingMode m) {
  switch (m) {
    case SamplingMode::low_uncertainty_softmax: return "low_uncertainty_softmax";
    case SamplingMode::literal_linear: return "literal_linear";
    case SamplingMode::random: return "random";
    case SamplingMode::high_uncertainty: return "high_uncertainty";
  }
  return "?";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "low_uncertainty_softmax") return SamplingMode::low_uncertainty_softmax;
  if (s == "literal_linear") return SamplingMode::literal_linear;
  if (s == "random") return SamplingMode::random;
  if (s == "high_uncertainty") return SamplingMode::high_uncertainty;
  throw std::invalid_argument("unknown sampling mode: " + s);
}

namespace {

constexpr char kMagic[8] = {'N', 'C', 'V', 'R', 'C', 'K', 'P', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void get(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void get_floats(std::istream& in, std::vector<float>& v) {
  std::uint64_t n = 0;
  get(in, n);
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
}

void put_param(std::ostream& out, const Param<float>& p) {
  put(out, p.step);
  put_floats(out, p.w);
  put_floats(out, p.m);
  put_floats(out, p.v);
}

void get_param(std::istream& in, Param<float>& p) {
  get(in, p.step);
  get_floats(in, p.w);
  get_floats(in, p.m);
  get_floats(in, p.v);
  p.g.assign(p.w.size(), 0.0f);
}

void put_emb(std::ostream& out, const EmbeddingSet<float>& e) {
  for (std::size_t f = 0; f < e.w.size(); ++f) {
    put_floats(out, e.w[f]);
    put_floats(out, e.m[f]);
    put_floats(out, e.v[f]);
    put<std::uint64_t>(out, e.row_step[f].size());
    out.write(reinterpret_cast<const char*>(e.row_step[f].data()),
              static_cast<std::streamsize>(e.row_step[f].size() * sizeof(std::int64_t)));
  }
}

void get_emb(std::istream& in, EmbeddingSet<float>& e) {
  for (std::size_t f = 0; f < e.w.size(); ++f) {
    get_floats(in, e.w[f]);
    get_floats(in, e.m[f]);
    get_floats(in, e.v[f]);
    std::uint64_t n = 0;
    get(in, n);
    e.row_step[f].resize(n);
    in.read(reinterpret_cast<char*>(e.row_step[f].data()),
            static_cast<std::streamsize>(n * sizeof(std::int64_t)));
  }
}

void put_tower(std::ostream& out, const Tower<float>& t) {
  for (int l = 0; l < 3; ++l) {
    put_param(out, t.fc[l].weight);
    put_param(out, t.fc[l].bias);
    put_param(out, t.bn[l].gamma);
    put_param(out, t.bn[l].beta);
    put_floats(out, t.bn[l].run_mean);
    put_floats(out, t.bn[l].run_var);
  }
  put_param(out, t.head.weight);
  put_param(out, t.head.bias);
}

void get_tower(std::istream& in, Tower<float>& t) {
  for (int l = 0; l < 3; ++l) {
    get_param(in, t.fc[l].weight);
    get_param(in, t.fc[l].bias);
    get_param(in, t.bn[l].gamma);
    get_param(in, t.bn[l].beta);
    get_floats(in, t.bn[l].run_mean);
    get_floats(in, t.bn[l].run_var);
  }
  get_param(in, t.head.weight);
  get_param(in, t.head.bias);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const Model<float>& m = ckpt.model;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for write: " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cfg.variant));
  put<std::int32_t>(out, m.cfg.d_emb);
  for (int h : m.cfg.hidden) put<std::int32_t>(out, h);
  put(out, m.cfg.leaky_slope);
  put(out, m.cfg.bn_momentum);
  put(out, m.cfg.bn_eps);
  put(out, m.cfg.logit_clamp);
  put<std::int32_t>(out, m.cfg.bn_min_batch);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cfg.vocab.size()));
  for (auto v : m.cfg.vocab) put(out, v);
  put(out, m.global_step);
  put_emb(out, m.emb_v);
  put_emb(out, m.emb_r);
  put_emb(out, m.emb_s);
  put_tower(out, m.tower_cvr);
  put_tower(out, m.tower_rfr);
  put<std::uint8_t>(out, ckpt.tail_v.has_value() ? 1 : 0);
  if (ckpt.tail_v) ckpt.tail_v->serialize(out);
  put<std::uint8_t>(out, ckpt.tail_r.has_value() ? 1 : 0);
  if (ckpt.tail_r) ckpt.tail_r->serialize(out);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  out.close();

  nlohmann::json meta;
  meta["format"] = "netcvr-checkpoint";
  meta["version"] = kCheckpointVersion;
  meta["variant"] = to_string(m.cfg.variant);
  meta["d_emb"] = m.cfg.d_emb;
  meta["hidden"] = m.cfg.hidden;
  meta["vocab"] = m.cfg.vocab;
  meta["global_step"] = m.global_step;
  auto tail_meta = [](const DelayTailModel& t) {
    return nlohmann::json{{"window", t.meta().window},
                          {"n_positives", t.meta().n_positives},
                          {"epochs", t.meta().epochs},
                          {"fallback", t.meta().fallback},
                          {"constant", t.is_constant()}};
  };
  meta["tail_v"] = ckpt.tail_v ? tail_meta(*ckpt.tail_v) : nlohmann::json(nullptr);
  meta["tail_r"] = ckpt.tail_r ? tail_meta(*ckpt.tail_r) : nlohmann::json(nullptr);
  std::ofstream mout(path + ".meta.json");
  mout << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a netcvr checkpoint: " + path);
  std::uint32_t version = 0;
  get(in, version);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: have " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion));
  ModelConfig cfg;
  std::uint32_t variant = 0;
  get(in, variant);
  cfg.variant = static_cast<Variant>(variant);
  get(in, cfg.d_emb);
  for (int l = 0; l < 3; ++l) get(in, cfg.hidden[l]);
  get(in, cfg.leaky_slope);
  get(in, cfg.bn_momentum);
  get(in, cfg.bn_eps);
  get(in, cfg.logit_clamp);
  get(in, cfg.bn_min_batch);
  std::uint32_t n_fields = 0;
  get(in, n_fields);
  if (n_fields != kNumFields) throw std::runtime_error("checkpoint field count mismatch");
  cfg.vocab.resize(n_fields);
  for (auto& v : cfg.vocab) get(in, v);

  Checkpoint ckpt{Model<float>::init(cfg, 0), std::nullopt, std::nullopt};
  get(in, ckpt.model.global_step);
  get_emb(in, ckpt.model.emb_v);
  get_emb(in, ckpt.model.emb_r);
  get_emb(in, ckpt.model.emb_s);
  get_tower(in, ckpt.model.tower_cvr);
  get_tower(in, ckpt.model.tower_rfr);
  std::uint8_t has = 0;
  get(in, has);
  if (has) ckpt.tail_v = DelayTailModel::deserialize(in);
  get(in, has);
  if (has) ckpt.tail_r = DelayTailModel::deserialize(in);
  if (!in) throw std::runtime_error("checkpoint truncated: " + path);
  return ckpt;
}

}  // namespace netcvr
