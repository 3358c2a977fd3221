#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "netcvr/common.hpp"

namespace netcvr {

// Stage-wise importance weights. p is the streaming model's own estimate for
// the sample; tail is the pretrained delay model's P(h > W_obs | positive, x).
// Weights are treated as constants by the losses: no gradient flows through
// them.
template <class T>
struct WeightPair {
  T pos, neg;
};

template <class T>
WeightPair<T> importance_weights(T p, T tail) {
  const T pt = p * tail;
  return {T(1) + pt, (T(1) - p) * (T(1) + pt) / (T(1) - p + pt)};
}

template <class T>
WeightPair<T> cvr_weights(T p_hat_v, T tail_v) {
  return importance_weights(p_hat_v, tail_v);
}

template <class T>
WeightPair<T> rfr_weights(T p_hat_r, T tail_r) {
  return importance_weights(p_hat_r, tail_r);
}

// Observed-label distribution under duplicate insertion: the stream carries
// one positive per recaptured conversion plus the original negative, so the
// normalizer is 1 + p*tail. Exposed for the identity tests
// w+ * q_pos == p and w- * q_neg == 1 - p.
template <class T>
struct ObservedDistribution {
  T q_pos, q_neg;
};

template <class T>
ObservedDistribution<T> observed_distribution(T p_true, T tail) {
  const T norm = T(1) + p_true * tail;
  return {p_true / norm, (T(1) - p_true + p_true * tail) / norm};
}

enum class SamplingMode : std::uint8_t {
  low_uncertainty_softmax = 0,  // pi_j ~ exp((1 - p_j) / tau)
  literal_linear,               // pi_j ~ (1 - p_j) / tau (tau cancels)
  random,
  high_uncertainty,  // pi_j ~ exp(p_j / tau)
};

const char* to_string(SamplingMode m);
SamplingMode sampling_mode_from_string(const std::string& s);

enum class DelayUnit : std::uint8_t { minutes = 0, days = 1 };

struct RankingConfig {
  double alpha = 1.0;
  double w_min = 0.2;
  double tau = 1.0;
  int K = 4;
  SamplingMode mode = SamplingMode::low_uncertainty_softmax;
  bool positive_weighting = true;
  DelayUnit delay_unit = DelayUnit::minutes;
  bool include_duplicates = true;

  void validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("RankingConfig: alpha must be >= 0");
    if (!(w_min > 0.0)) throw std::invalid_argument("RankingConfig: w_min must be > 0");
    if (!(tau > 0.0)) throw std::invalid_argument("RankingConfig: tau must be > 0");
    if (K < 1) throw std::invalid_argument("RankingConfig: K must be >= 1");
  }
};

struct BatchDelayStats {
  double m = 0.0;  // median delay
  double s = 1.0;  // max(std, 1)
};

inline BatchDelayStats batch_delay_stats(std::span<const double> delays) {
  if (delays.empty()) throw std::invalid_argument("batch_delay_stats: empty delay list");
  BatchDelayStats st;
  st.m = median(std::vector<double>(delays.begin(), delays.end()));
  st.s = std::max(stddev(delays), 1.0);  // clamp against tiny-variance overconfidence
  return st;
}

// Delay-based positive weights: w_i = w_min + alpha * sigmoid((m - h_i)/s).
// Delays arrive in the configured unit.
template <class T>
std::vector<T> positive_weights(std::span<const double> delays, const RankingConfig& cfg) {
  const BatchDelayStats st = batch_delay_stats(delays);
  std::vector<T> w(delays.size());
  for (std::size_t i = 0; i < delays.size(); ++i)
    w[i] = static_cast<T>(cfg.w_min + cfg.alpha * sigmoid((st.m - delays[i]) / st.s));
  return w;
}

// Selection distribution over the batch negatives.
template <class T>
std::vector<double> sampling_distribution(std::span<const T> p_hat_neg, const RankingConfig& cfg,
                                          bool* degenerate = nullptr) {
  if (p_hat_neg.empty()) throw std::invalid_argument("sample_negatives: no negatives in batch");
  std::vector<double> pi(p_hat_neg.size());
  double total = 0.0;
  switch (cfg.mode) {
    case SamplingMode::low_uncertainty_softmax:
      for (std::size_t j = 0; j < pi.size(); ++j)
        total += pi[j] = std::exp((1.0 - static_cast<double>(p_hat_neg[j])) / cfg.tau);
      break;
    case SamplingMode::literal_linear:
      for (std::size_t j = 0; j < pi.size(); ++j)
        total += pi[j] = (1.0 - static_cast<double>(p_hat_neg[j])) / cfg.tau;
      break;
    case SamplingMode::random:
      for (auto& v : pi) total += v = 1.0;
      break;
    case SamplingMode::high_uncertainty:
      for (std::size_t j = 0; j < pi.size(); ++j)
        total += pi[j] = std::exp(static_cast<double>(p_hat_neg[j]) / cfg.tau);
      break;
  }
  if (degenerate) *degenerate = false;
  if (!(total > 0.0)) {
    // all p_hat exactly 1 in linear mode: fall back to uniform
    if (degenerate) *degenerate = true;
    const double u = 1.0 / static_cast<double>(pi.size());
    for (auto& v : pi) v = u;
    return pi;
  }
  for (auto& v : pi) v /= total;
  return pi;
}

// K negatives per positive, sampled independently with replacement from pi.
// Returns n_pos * K indices into the negative set, row-major per positive.
template <class T>
std::vector<std::int32_t> sample_negatives(std::span<const T> p_hat_neg, std::size_t n_pos,
                                           const RankingConfig& cfg, Rng& rng,
                                           bool* degenerate = nullptr) {
  std::vector<double> pi = sampling_distribution(p_hat_neg, cfg, degenerate);
  std::vector<double> cdf(pi.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < pi.size(); ++j) cdf[j] = acc += pi[j];
  cdf.back() = 1.0;
  std::vector<std::int32_t> out(n_pos * static_cast<std::size_t>(cfg.K));
  for (auto& idx : out) {
    const double u = rng.uniform01();
    idx = static_cast<std::int32_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
  return out;
}

// Debiased cross entropy over one tower's batch, the sum over samples of
// -[y w+ log p + (1-y) w- log(1-p)]. logit_clamp keeps the log terms finite;
// the returned gradient is d(loss)/d(logit) = w * (p - y) per sample.
template <class T>
struct BceResult {
  double loss = 0.0;
  std::vector<T> dlogits;
};

template <class T>
BceResult<T> debiased_bce(std::span<const T> logits, std::span<const std::uint8_t> labels,
                          std::span<const T> weights, double logit_clamp = 15.0) {
  if (logits.size() != labels.size() || logits.size() != weights.size())
    throw std::invalid_argument("debiased_bce: size mismatch");
  BceResult<T> r;
  r.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double o = std::clamp(static_cast<double>(logits[i]), -logit_clamp, logit_clamp);
    const double w = static_cast<double>(weights[i]);
    if (labels[i]) {
      r.loss += w * log1p_exp_neg(o);  // -log sigmoid(o)
      r.dlogits[i] = static_cast<T>(w * (sigmoid(o) - 1.0));
    } else {
      r.loss += w * log1p_exp_neg(-o);  // -log(1 - sigmoid(o))
      r.dlogits[i] = static_cast<T>(w * sigmoid(o));
    }
  }
  return r;
}

// Delay-aware ranking loss: per positive i with sampled negatives j_1..j_K,
//   L += w_i * (-1/K) * sum_k log sigmoid(o_i - o_jk).
// Gradients accumulate into d_pos (per positive) and d_neg (per negative).
template <class T>
double dar_loss(std::span<const T> pos_logits, std::span<const T> neg_logits,
                std::span<const std::int32_t> pairs, std::span<const T> pos_weights, int K,
                std::span<T> d_pos, std::span<T> d_neg) {
  if (pos_logits.empty()) return 0.0;
  if (pairs.size() != pos_logits.size() * static_cast<std::size_t>(K))
    throw std::invalid_argument("dar_loss: pair table size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < pos_logits.size(); ++i) {
    const double w = static_cast<double>(pos_weights[i]);
    double dpos = 0.0;
    for (int k = 0; k < K; ++k) {
      const std::int32_t j = pairs[i * K + k];
      const double diff = static_cast<double>(pos_logits[i]) - static_cast<double>(neg_logits[j]);
      loss += w / K * log1p_exp_neg(diff);
      const double g = w / K * (sigmoid(diff) - 1.0);  // d/d(o_i)
      dpos += g;
      d_neg[j] -= static_cast<T>(g);
    }
    d_pos[i] += static_cast<T>(dpos);
  }
  return loss;
}

struct LossCoefficients {
  double bce_cvr = 1.0, bce_rfr = 1.0, dar_cvr = 1.0, dar_rfr = 1.0;
};

inline double total_loss(double l_v, double l_r, double l_dar_v, double l_dar_r,
                         const LossCoefficients& c = {}) {
  return c.bce_cvr * l_v + c.bce_rfr * l_r + c.dar_cvr * l_dar_v + c.dar_rfr * l_dar_r;
}

}  // namespace netcvr
