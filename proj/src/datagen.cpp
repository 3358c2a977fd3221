#include "netcvr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace netcvr {

namespace {

constexpr std::array<std::int32_t, kNumFields> kSmallCardinalities = {
    // user: id bucket + demographic-style fields
    0, 8, 4, 16, 6, 10, 5, 3,
    // item: id bucket + category-style fields
    0, 30, 12, 50, 8, 6,
    // context
    12, 7, 5, 9, 4, 6, 3, 8};

double tail_of(DelayFamily f, double rate, double shape, double window) {
  if (window <= 0.0) return 1.0;
  if (f == DelayFamily::exponential) return std::exp(-rate * window);
  return std::exp(-std::pow(rate * window, shape));
}

}  // namespace

std::array<std::int32_t, kNumFields> GroundTruthConfig::default_cardinalities(std::int32_t n_users,
                                                                              std::int32_t n_items) {
  auto card = kSmallCardinalities;
  card[kUserFieldBegin] = n_users;
  card[kItemFieldBegin] = n_items;
  return card;
}

std::array<double, 24> GroundTruthConfig::default_hourly_profile() {
  // Smooth diurnal cycle with the trough in the small hours (~02:00) and the
  // peak mid-afternoon.
  std::array<double, 24> p{};
  for (int h = 0; h < 24; ++h)
    p[h] = 1.0 + 0.4 * std::cos(2.0 * 3.14159265358979323846 * (h - 14.0) / 24.0);
  return p;
}

void GroundTruthConfig::validate() const {
  if (n_clicks <= 0 || n_users <= 0 || n_items <= 0)
    throw std::invalid_argument("GroundTruthConfig: population sizes must be positive");
  if (!(lambda_v > 0.0 && lambda_r > 0.0))
    throw std::invalid_argument("GroundTruthConfig: delay rates must be positive");
  if (!(horizon_days > 0.0)) throw std::invalid_argument("GroundTruthConfig: horizon must be positive");
  if (!(weibull_shape > 0.0)) throw std::invalid_argument("GroundTruthConfig: weibull_shape must be positive");
  if (high_rfr_upsample <= 0.0)
    throw std::invalid_argument("GroundTruthConfig: high_rfr_upsample must be positive");
}

double TruthProbe::tail_v(double window) const { return tail_of(family_v, rate_v, weibull_shape, window); }
double TruthProbe::tail_r(double window) const { return tail_of(family_r, rate_r, weibull_shape, window); }

GroundTruth::GroundTruth(GroundTruthConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  bool card_unset = true;
  for (auto c : cfg_.field_cardinalities)
    if (c != 0) card_unset = false;
  if (card_unset)
    cfg_.field_cardinalities = GroundTruthConfig::default_cardinalities(cfg_.n_users, cfg_.n_items);
  for (auto c : cfg_.field_cardinalities)
    if (c <= 0) throw std::invalid_argument("GroundTruthConfig: all 22 field cardinalities must be positive");

  bool hourly_unset = true;
  for (double v : cfg_.hourly_modulation)
    if (v != 0.0) hourly_unset = false;
  if (hourly_unset) {
    if (cfg_.flat_hourly)
      cfg_.hourly_modulation.fill(1.0);
    else
      cfg_.hourly_modulation = GroundTruthConfig::default_hourly_profile();
  }
  for (double v : cfg_.hourly_modulation)
    if (!(v > 0.0)) throw std::invalid_argument("GroundTruthConfig: hourly factors must be positive");

  // Latent coefficient tables, drawn once from a dedicated stream.
  Rng wrng(cfg_.seed ^ 0x9d2c5680aull);
  auto draw_table = [&](double scale) {
    std::vector<std::vector<double>> t(kNumFields);
    for (int f = 0; f < kNumFields; ++f) {
      t[f].resize(static_cast<std::size_t>(cfg_.field_cardinalities[f]));
      for (auto& w : t[f]) w = wrng.normal(0.0, scale);
    }
    return t;
  };
  auto scale_for = [&](int f) {
    if (f < kItemFieldBegin) return cfg_.cvr_weight_scale_user;
    if (f < kContextFieldBegin) return cfg_.cvr_weight_scale_item;
    return cfg_.cvr_weight_scale_context;
  };
  if (cfg_.cvr_weights.empty()) {
    cfg_.cvr_weights.resize(kNumFields);
    for (int f = 0; f < kNumFields; ++f) {
      cfg_.cvr_weights[f].resize(static_cast<std::size_t>(cfg_.field_cardinalities[f]));
      for (auto& w : cfg_.cvr_weights[f]) w = wrng.normal(0.0, scale_for(f));
    }
  }
  if (cfg_.rfr_weights.empty()) {
    auto fresh = draw_table(cfg_.rfr_weight_scale);
    cfg_.rfr_weights.resize(kNumFields);
    const double rho = cfg_.rfr_cvr_corr;
    const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (int f = 0; f < kNumFields; ++f) {
      cfg_.rfr_weights[f].resize(static_cast<std::size_t>(cfg_.field_cardinalities[f]));
      const double s = scale_for(f);
      for (std::size_t v = 0; v < cfg_.rfr_weights[f].size(); ++v) {
        double aligned = s > 0.0 ? cfg_.cvr_weights[f][v] * (cfg_.rfr_weight_scale / s) : 0.0;
        cfg_.rfr_weights[f][v] = rho * aligned + mix * fresh[f][v];
      }
    }
  }
  if (cfg_.v_rate_log_offsets.empty()) {
    cfg_.v_rate_log_offsets.resize(kNumFields);
    for (int f = 0; f < kNumFields; ++f) {
      cfg_.v_rate_log_offsets[f].resize(cfg_.cvr_weights[f].size());
      for (std::size_t v = 0; v < cfg_.cvr_weights[f].size(); ++v)
        cfg_.v_rate_log_offsets[f][v] = cfg_.delay_coupling_v * cfg_.cvr_weights[f][v];
    }
  }
  if (cfg_.r_rate_log_offsets.empty()) {
    cfg_.r_rate_log_offsets.resize(kNumFields);
    for (int f = 0; f < kNumFields; ++f) {
      cfg_.r_rate_log_offsets[f].resize(cfg_.rfr_weights[f].size());
      for (std::size_t v = 0; v < cfg_.rfr_weights[f].size(); ++v)
        cfg_.r_rate_log_offsets[f][v] = cfg_.delay_coupling_r * cfg_.rfr_weights[f][v];
    }
  }
  for (auto* t : {&cfg_.cvr_weights, &cfg_.rfr_weights, &cfg_.v_rate_log_offsets, &cfg_.r_rate_log_offsets}) {
    if (t->size() != kNumFields) throw std::invalid_argument("GroundTruthConfig: weight tables need 22 fields");
    for (int f = 0; f < kNumFields; ++f)
      if ((*t)[f].size() != static_cast<std::size_t>(cfg_.field_cardinalities[f]))
        throw std::invalid_argument("GroundTruthConfig: weight table size mismatch at field " + std::to_string(f));
  }

  // Entity pools: field values are a stateless hash of (seed, entity, field),
  // so probe() never needs the generation stream.
  users_.resize(static_cast<std::size_t>(cfg_.n_users));
  for (std::int32_t u = 0; u < cfg_.n_users; ++u) {
    users_[u].fill(0);
    users_[u][kUserFieldBegin] = static_cast<std::uint32_t>(u);
    for (int f = kUserFieldBegin + 1; f < kUserFieldBegin + kUserFieldCount; ++f)
      users_[u][f] = static_cast<std::uint32_t>(mix64(cfg_.seed, static_cast<std::uint64_t>(u), f) %
                                                cfg_.field_cardinalities[f]);
  }
  items_.resize(static_cast<std::size_t>(cfg_.n_items));
  for (std::int32_t i = 0; i < cfg_.n_items; ++i) {
    items_[i].fill(0);
    items_[i][kItemFieldBegin] = static_cast<std::uint32_t>(i);
    for (int f = kItemFieldBegin + 1; f < kItemFieldBegin + kItemFieldCount; ++f)
      items_[i][f] = static_cast<std::uint32_t>(mix64(cfg_.seed ^ 0x5851f42dull, static_cast<std::uint64_t>(i), f) %
                                                cfg_.field_cardinalities[f]);
  }

  if (cfg_.high_rfr_upsample != 1.0) {
    // Rank users by their refund latent; the top decile gets the multiplier.
    std::vector<double> score(users_.size());
    for (std::size_t u = 0; u < users_.size(); ++u) {
      double s = 0.0;
      for (int f = kUserFieldBegin; f < kUserFieldBegin + kUserFieldCount; ++f)
        s += cfg_.rfr_weights[f][users_[u][f]];
      score[u] = s;
    }
    std::vector<double> sorted = score;
    std::sort(sorted.begin(), sorted.end());
    double thresh = sorted[static_cast<std::size_t>(0.9 * (sorted.size() - 1))];
    user_cdf_.resize(users_.size());
    double acc = 0.0;
    for (std::size_t u = 0; u < users_.size(); ++u) {
      acc += score[u] >= thresh ? cfg_.high_rfr_upsample : 1.0;
      user_cdf_[u] = acc;
    }
  }
}

double GroundTruth::field_sum(const std::vector<std::vector<double>>& table, const FeatureVec& x) const {
  double s = 0.0;
  for (int f = 0; f < kNumFields; ++f) {
    // Unknown hashed values fall back to the intercept-only contribution.
    if (x[f] < table[f].size()) s += table[f][x[f]];
  }
  return s;
}

double GroundTruth::cvr_logit(const FeatureVec& x) const { return cfg_.base_cvr + field_sum(cfg_.cvr_weights, x); }
double GroundTruth::rfr_logit(const FeatureVec& x) const { return cfg_.base_rfr + field_sum(cfg_.rfr_weights, x); }

double GroundTruth::conversion_rate(const FeatureVec& x) const {
  return cfg_.lambda_v * std::exp(field_sum(cfg_.v_rate_log_offsets, x));
}
double GroundTruth::refund_rate_param(const FeatureVec& x) const {
  return cfg_.lambda_r * std::exp(field_sum(cfg_.r_rate_log_offsets, x));
}

TruthProbe GroundTruth::probe(const FeatureVec& x) const {
  TruthProbe p;
  p.p_v = sigmoid(cvr_logit(x));
  p.p_r = sigmoid(rfr_logit(x));
  p.p_n = p.p_v * (1.0 - p.p_r);
  p.rate_v = conversion_rate(x);
  p.rate_r = refund_rate_param(x);
  p.family_v = cfg_.delay_family_v;
  p.family_r = cfg_.delay_family_r;
  p.weibull_shape = cfg_.weibull_shape;
  return p;
}

double GroundTruth::hourly_factor(double t) const {
  double frac = t - std::floor(t);
  int h = std::min(23, static_cast<int>(frac * 24.0));
  return cfg_.hourly_modulation[h];
}

double GroundTruth::p_v_at(const FeatureVec& x, double t) const {
  double p = sigmoid(cvr_logit(x)) * hourly_factor(t);
  if (!(p > 0.0 && p < 1.0))
    throw std::runtime_error("ground truth saturated: p_v = " + std::to_string(p));
  return p;
}

std::vector<ClickEvent> GroundTruth::generate() const {
  Rng rng(cfg_.seed);

  std::vector<double> times(static_cast<std::size_t>(cfg_.n_clicks));
  for (auto& t : times) t = rng.uniform01() * cfg_.horizon_days;
  std::sort(times.begin(), times.end());

  std::vector<ClickEvent> log(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    ClickEvent& e = log[i];
    e.id = static_cast<std::int64_t>(i);
    e.t_c = times[i];

    std::int32_t user;
    if (user_cdf_.empty()) {
      user = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(cfg_.n_users)));
    } else {
      double u = rng.uniform01() * user_cdf_.back();
      user = static_cast<std::int32_t>(
          std::lower_bound(user_cdf_.begin(), user_cdf_.end(), u) - user_cdf_.begin());
    }
    std::int32_t item = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(cfg_.n_items)));

    const FeatureVec& uf = users_[user];
    const FeatureVec& itf = items_[item];
    for (int f = kUserFieldBegin; f < kUserFieldBegin + kUserFieldCount; ++f) e.feat[f] = uf[f];
    for (int f = kItemFieldBegin; f < kItemFieldBegin + kItemFieldCount; ++f) e.feat[f] = itf[f];
    for (int f = kContextFieldBegin; f < kNumFields; ++f)
      e.feat[f] = static_cast<std::uint32_t>(rng.uniform_int(static_cast<std::uint64_t>(cfg_.field_cardinalities[f])));

    const double p_v = p_v_at(e.feat, e.t_c);
    if (rng.bernoulli(p_v)) {
      double rate_v = conversion_rate(e.feat);
      double h_v = cfg_.delay_family_v == DelayFamily::exponential
                       ? rng.exponential(rate_v)
                       : rng.weibull(rate_v, cfg_.weibull_shape);
      e.t_v = e.t_c + h_v;
      const double p_r = sigmoid(rfr_logit(e.feat));
      if (!(p_r > 0.0 && p_r < 1.0))
        throw std::runtime_error("ground truth saturated: p_r = " + std::to_string(p_r));
      if (rng.bernoulli(p_r)) {
        double rate_r = refund_rate_param(e.feat);
        double h_r = cfg_.delay_family_r == DelayFamily::exponential
                         ? rng.exponential(rate_r)
                         : rng.weibull(rate_r, cfg_.weibull_shape);
        e.t_r = *e.t_v + h_r;
      }
    }
  }
  return log;
}

}  // namespace netcvr
