#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "netcvr/common.hpp"
#include "netcvr/domain.hpp"

namespace netcvr {

struct DelayTailHyper {
  int d_emb = 4;
  int epochs = 6;
  double lr = 0.02;
  int batch_size = 256;
  int min_positives = 200;
  std::uint64_t seed = 7;
};

// Pretrained estimator of P(h > W_obs | positive, x): per-field embeddings
// feeding a linear head, trained with log loss on the pretrain chunk's
// positives. Frozen once fit; streaming never updates it.
class DelayTailModel {
 public:
  struct Meta {
    std::int64_t n_positives = 0;
    int epochs = 0;
    std::uint64_t seed = 0;
    bool fallback = false;  // too little data: empirical-constant mode
    double window = 0.0;
  };

  DelayTailModel() = default;

  static DelayTailModel fit(std::span<const FeatureVec* const> xs,
                            std::span<const std::uint8_t> labels,
                            std::span<const std::int32_t> vocab, double window,
                            const DelayTailHyper& hyper);
  static DelayTailModel constant(double rate, double window, std::int64_t n, bool fallback);

  float predict(const FeatureVec& x) const;  // in (0,1)
  double mean_prediction(std::span<const FeatureVec* const> xs) const;

  const Meta& meta() const { return meta_; }
  bool is_constant() const { return constant_; }

  // Content hash over all parameters; the frozen-weights tests compare it
  // across a streaming run.
  std::uint64_t param_hash() const;

  void serialize(std::ostream& out) const;
  static DelayTailModel deserialize(std::istream& in);

 private:
  double logit_of(const FeatureVec& x) const;

  std::vector<std::int32_t> vocab_;
  int d_ = 0;
  std::vector<std::vector<float>> emb_;  // [field][(vocab+1)*d]
  std::vector<float> head_w_;            // 22*d
  float head_b_ = 0.0f;
  bool constant_ = false;
  float constant_tail_ = 0.0f;
  Meta meta_;
};

// Labels 1{h_v > w_obs_v} over attributed conversions in the pretrain span.
DelayTailModel fit_conversion_tail(std::span<const ClickEvent> pretrain_events,
                                   const WindowConfig& windows,
                                   std::span<const std::int32_t> vocab,
                                   const DelayTailHyper& hyper);

// Labels 1{h_r > w_obs_r} over attributed refunded conversions.
DelayTailModel fit_refund_tail(std::span<const ClickEvent> pretrain_events,
                               const WindowConfig& windows, std::span<const std::int32_t> vocab,
                               const DelayTailHyper& hyper);

}  // namespace netcvr
