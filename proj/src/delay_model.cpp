#include "netcvr/delay_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace netcvr {

namespace {

constexpr float kTailFloor = 1e-6f;

float clamp_unit(double p) {
  return static_cast<float>(std::clamp(p, static_cast<double>(kTailFloor), 1.0 - kTailFloor));
}

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void get(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

DelayTailModel DelayTailModel::constant(double rate, double window, std::int64_t n, bool fallback) {
  DelayTailModel m;
  m.constant_ = true;
  m.constant_tail_ = clamp_unit(rate);
  m.meta_ = {n, 0, 0, fallback, window};
  return m;
}

DelayTailModel DelayTailModel::fit(std::span<const FeatureVec* const> xs,
                                   std::span<const std::uint8_t> labels,
                                   std::span<const std::int32_t> vocab, double window,
                                   const DelayTailHyper& hyper) {
  if (xs.size() != labels.size()) throw std::invalid_argument("DelayTailModel::fit: size mismatch");
  const std::int64_t n = static_cast<std::int64_t>(xs.size());
  double base = 0.0;
  for (auto l : labels) base += l;
  if (n < hyper.min_positives) {
    std::fprintf(stderr, "[delay_model] only %lld positives (< %d); empirical-constant fallback\n",
                 static_cast<long long>(n), hyper.min_positives);
    return constant(n > 0 ? base / static_cast<double>(n) : 0.0, window, n, true);
  }

  DelayTailModel m;
  m.vocab_.assign(vocab.begin(), vocab.end());
  m.d_ = hyper.d_emb;
  m.meta_ = {n, hyper.epochs, hyper.seed, false, window};
  Rng rng(hyper.seed);
  m.emb_.resize(vocab.size());
  for (std::size_t f = 0; f < vocab.size(); ++f) {
    m.emb_[f].resize((static_cast<std::size_t>(vocab[f]) + 1) * m.d_);
    for (auto& w : m.emb_[f]) w = static_cast<float>(rng.normal(0.0, 0.03));
  }
  m.head_w_.resize(vocab.size() * m.d_);
  for (auto& w : m.head_w_) w = static_cast<float>(rng.normal(0.0, 0.1));
  m.head_b_ = static_cast<float>(logit(std::clamp(base / static_cast<double>(n), 1e-4, 1.0 - 1e-4)));

  // Adam over (embeddings, head); gradients accumulated per minibatch.
  struct Moments {
    std::vector<float> m1, m2;
  };
  std::vector<Moments> emb_mom(m.emb_.size());
  for (std::size_t f = 0; f < m.emb_.size(); ++f) {
    emb_mom[f].m1.assign(m.emb_[f].size(), 0.0f);
    emb_mom[f].m2.assign(m.emb_[f].size(), 0.0f);
  }
  Moments head_mom{std::vector<float>(m.head_w_.size(), 0.0f),
                   std::vector<float>(m.head_w_.size(), 0.0f)};
  float bias_m1 = 0.0f, bias_m2 = 0.0f;
  const float lr = static_cast<float>(hyper.lr), b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  std::int64_t step = 0;

  std::vector<std::vector<float>> emb_g(m.emb_.size());
  for (std::size_t f = 0; f < m.emb_.size(); ++f) emb_g[f].assign(m.emb_[f].size(), 0.0f);
  std::vector<float> head_g(m.head_w_.size(), 0.0f);

  std::vector<std::int32_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      float bias_g = 0.0f;
      for (std::size_t ii = start; ii < end; ++ii) {
        const FeatureVec& x = *xs[order[ii]];
        const float g = static_cast<float>(sigmoid(m.logit_of(x)) - labels[order[ii]]);
        bias_g += g;
        for (std::size_t f = 0; f < m.vocab_.size(); ++f) {
          const std::uint32_t row =
              x[f] < static_cast<std::uint32_t>(m.vocab_[f]) ? x[f] : m.vocab_[f];
          float* e = m.emb_[f].data() + static_cast<std::size_t>(row) * m.d_;
          float* ge = emb_g[f].data() + static_cast<std::size_t>(row) * m.d_;
          const float* hw = m.head_w_.data() + f * m.d_;
          float* gh = head_g.data() + f * m.d_;
          for (int k = 0; k < m.d_; ++k) {
            ge[k] += g * hw[k];
            gh[k] += g * e[k];
          }
        }
      }
      ++step;
      const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step));
      const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step));
      const float inv_b = 1.0f / static_cast<float>(end - start);
      auto adam = [&](float* w, float* g, float* m1, float* m2, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) {
          const float gk = g[k] * inv_b;
          m1[k] = b1 * m1[k] + (1.0f - b1) * gk;
          m2[k] = b2 * m2[k] + (1.0f - b2) * gk * gk;
          w[k] -= lr * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + eps);
          g[k] = 0.0f;
        }
      };
      for (std::size_t f = 0; f < m.emb_.size(); ++f)
        adam(m.emb_[f].data(), emb_g[f].data(), emb_mom[f].m1.data(), emb_mom[f].m2.data(),
             m.emb_[f].size());
      adam(m.head_w_.data(), head_g.data(), head_mom.m1.data(), head_mom.m2.data(), m.head_w_.size());
      float gb = bias_g * inv_b;
      bias_m1 = b1 * bias_m1 + (1.0f - b1) * gb;
      bias_m2 = b2 * bias_m2 + (1.0f - b2) * gb * gb;
      m.head_b_ -= lr * (bias_m1 / bc1) / (std::sqrt(bias_m2 / bc2) + eps);
    }
  }
  return m;
}

double DelayTailModel::logit_of(const FeatureVec& x) const {
  double o = head_b_;
  for (std::size_t f = 0; f < vocab_.size(); ++f) {
    const std::uint32_t row = x[f] < static_cast<std::uint32_t>(vocab_[f]) ? x[f] : vocab_[f];
    const float* e = emb_[f].data() + static_cast<std::size_t>(row) * d_;
    const float* hw = head_w_.data() + f * d_;
    for (int k = 0; k < d_; ++k) o += static_cast<double>(e[k]) * hw[k];
  }
  return o;
}

float DelayTailModel::predict(const FeatureVec& x) const {
  if (constant_) return constant_tail_;
  return clamp_unit(sigmoid(logit_of(x)));
}

double DelayTailModel::mean_prediction(std::span<const FeatureVec* const> xs) const {
  double s = 0.0;
  for (const FeatureVec* x : xs) s += predict(*x);
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::uint64_t DelayTailModel::param_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  mix_bytes(&constant_, sizeof(constant_));
  mix_bytes(&constant_tail_, sizeof(constant_tail_));
  mix_bytes(&head_b_, sizeof(head_b_));
  mix_bytes(head_w_.data(), head_w_.size() * sizeof(float));
  for (const auto& t : emb_) mix_bytes(t.data(), t.size() * sizeof(float));
  return h;
}

void DelayTailModel::serialize(std::ostream& out) const {
  put(out, constant_);
  put(out, constant_tail_);
  put(out, meta_.n_positives);
  put(out, meta_.epochs);
  put(out, meta_.seed);
  put(out, meta_.fallback);
  put(out, meta_.window);
  put(out, d_);
  std::uint32_t nf = static_cast<std::uint32_t>(vocab_.size());
  put(out, nf);
  for (auto v : vocab_) put(out, v);
  for (const auto& t : emb_) out.write(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  out.write(reinterpret_cast<const char*>(head_w_.data()), head_w_.size() * sizeof(float));
  put(out, head_b_);
}

DelayTailModel DelayTailModel::deserialize(std::istream& in) {
  DelayTailModel m;
  get(in, m.constant_);
  get(in, m.constant_tail_);
  get(in, m.meta_.n_positives);
  get(in, m.meta_.epochs);
  get(in, m.meta_.seed);
  get(in, m.meta_.fallback);
  get(in, m.meta_.window);
  get(in, m.d_);
  std::uint32_t nf = 0;
  get(in, nf);
  m.vocab_.resize(nf);
  for (auto& v : m.vocab_) get(in, v);
  if (!m.constant_ || nf > 0) {
    m.emb_.resize(nf);
    for (std::uint32_t f = 0; f < nf; ++f) {
      m.emb_[f].resize((static_cast<std::size_t>(m.vocab_[f]) + 1) * m.d_);
      in.read(reinterpret_cast<char*>(m.emb_[f].data()), m.emb_[f].size() * sizeof(float));
    }
    m.head_w_.resize(static_cast<std::size_t>(nf) * m.d_);
    in.read(reinterpret_cast<char*>(m.head_w_.data()), m.head_w_.size() * sizeof(float));
  }
  get(in, m.head_b_);
  if (!in) throw std::runtime_error("DelayTailModel: truncated stream");
  return m;
}

namespace {

DelayTailModel fit_tail_impl(std::span<const ClickEvent> events, const WindowConfig& windows,
                             std::span<const std::int32_t> vocab, const DelayTailHyper& hyper,
                             bool refund_side) {
  std::vector<const FeatureVec*> xs;
  std::vector<std::uint8_t> labels;
  for (const ClickEvent& e : events) {
    ResolvedLabels lab = resolve_labels(e, windows);
    if (!refund_side) {
      if (!lab.y) continue;
      xs.push_back(&e.feat);
      labels.push_back(*e.t_v - e.t_c > windows.w_obs_v ? 1 : 0);
    } else {
      if (!lab.z) continue;
      xs.push_back(&e.feat);
      labels.push_back(*e.t_r - *e.t_v > windows.w_obs_r ? 1 : 0);
    }
  }
  const double window = refund_side ? windows.w_obs_r : windows.w_obs_v;
  return DelayTailModel::fit(xs, labels, vocab, window, hyper);
}

}  // namespace

DelayTailModel fit_conversion_tail(std::span<const ClickEvent> pretrain_events,
                                   const WindowConfig& windows,
                                   std::span<const std::int32_t> vocab,
                                   const DelayTailHyper& hyper) {
  return fit_tail_impl(pretrain_events, windows, vocab, hyper, false);
}

DelayTailModel fit_refund_tail(std::span<const ClickEvent> pretrain_events,
                               const WindowConfig& windows, std::span<const std::int32_t> vocab,
                               const DelayTailHyper& hyper) {
  return fit_tail_impl(pretrain_events, windows, vocab, hyper, true);
}

}  // namespace netcvr
