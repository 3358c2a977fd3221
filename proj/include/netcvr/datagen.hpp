#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "netcvr/domain.hpp"

namespace netcvr {

enum class DelayFamily : std::uint8_t { exponential = 0, weibull = 1 };

// Synthetic ground truth. Clicks draw hashed features from fixed user/item
// pools; conversion and refund outcomes follow per-feature logistic models
// with exponential (optionally Weibull) delays whose rates may depend on the
// same features. Every probability and delay tail is available in closed
// form, which is what the debiasing acceptance tests lean on.
struct GroundTruthConfig {
  std::int64_t n_clicks = 2'000'000;
  std::int32_t n_users = 10'000;
  std::int32_t n_items = 2'000;
  std::array<std::int32_t, kNumFields> field_cardinalities{};  // zeros => defaults

  // Latent logistic coefficients, [field][value]. Empty => drawn from the
  // seed using the scales below. Intercepts are on the logit scale.
  std::vector<std::vector<double>> cvr_weights;
  std::vector<std::vector<double>> rfr_weights;
  double base_cvr = -2.3;  // ~ logit(0.091)
  double base_rfr = -1.1;  // ~ logit(0.25)
  double cvr_weight_scale_user = 0.25;
  double cvr_weight_scale_item = 0.40;
  double cvr_weight_scale_context = 0.10;
  double rfr_weight_scale = 0.45;
  // rfr latent = corr * cvr latent (rescaled) + sqrt(1-corr^2) * fresh draw.
  double rfr_cvr_corr = -0.35;

  // Delay model: rate(x) = lambda * exp(coupling * (task_logit(x) - intercept)).
  // Positive coupling makes likely converters (refunders) resolve faster.
  // Explicit per-feature log-rate offsets override the coupling when present.
  double lambda_v = 12.0;  // events/day
  double lambda_r = 24.0;
  double delay_coupling_v = 0.6;
  double delay_coupling_r = 0.8;
  std::vector<std::vector<double>> v_rate_log_offsets;
  std::vector<std::vector<double>> r_rate_log_offsets;
  DelayFamily delay_family_v = DelayFamily::exponential;
  DelayFamily delay_family_r = DelayFamily::exponential;
  double weibull_shape = 1.0;

  // Multiplicative CVR profile by hour of day; all-ones disables it.
  std::array<double, 24> hourly_modulation{};  // zeros => default profile
  bool flat_hourly = false;

  // Sampling weight multiplier for the top-decile refund-prone users.
  double high_rfr_upsample = 1.0;

  double horizon_days = 25.0;
  std::uint64_t seed = 1;

  static std::array<std::int32_t, kNumFields> default_cardinalities(std::int32_t n_users,
                                                                    std::int32_t n_items);
  static std::array<double, 24> default_hourly_profile();
  void validate() const;
};

struct TruthProbe {
  double p_v = 0.0;  // P(y=1 | x), hourly factor 1
  double p_r = 0.0;  // P(z=1 | y=1, x)
  double p_n = 0.0;  // p_v * (1 - p_r)
  double rate_v = 0.0;
  double rate_r = 0.0;
  double tail_v(double window) const;  // P(h_v > window | y=1, x)
  double tail_r(double window) const;
  DelayFamily family_v = DelayFamily::exponential;
  DelayFamily family_r = DelayFamily::exponential;
  double weibull_shape = 1.0;
};

class GroundTruth {
 public:
  // Materializes all latent tables deterministically from cfg.seed.
  explicit GroundTruth(GroundTruthConfig cfg);

  const GroundTruthConfig& config() const { return cfg_; }

  double cvr_logit(const FeatureVec& x) const;
  double rfr_logit(const FeatureVec& x) const;
  double conversion_rate(const FeatureVec& x) const;  // rate of h_v
  double refund_rate_param(const FeatureVec& x) const;

  TruthProbe probe(const FeatureVec& x) const;
  // CVR with the hourly factor applied; throws if it saturates out of (0,1).
  double p_v_at(const FeatureVec& x, double t) const;
  double hourly_factor(double t) const;

  std::vector<ClickEvent> generate() const;

  const FeatureVec& user_features(std::int32_t user) const { return users_[user]; }
  const FeatureVec& item_features(std::int32_t item) const { return items_[item]; }

 private:
  double field_sum(const std::vector<std::vector<double>>& table, const FeatureVec& x) const;

  GroundTruthConfig cfg_;
  // Per-entity field values; user fields live in [0,8), item in [8,14).
  std::vector<FeatureVec> users_;
  std::vector<FeatureVec> items_;
  std::vector<double> user_cdf_;  // non-uniform user sampling (upsample knob)
};

inline TruthProbe probe_truth(const GroundTruthConfig& cfg, const FeatureVec& x) {
  return GroundTruth(cfg).probe(x);
}

}  // namespace netcvr
