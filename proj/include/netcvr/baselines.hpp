#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netcvr/checkpoint.hpp"
#include "netcvr/delay_model.hpp"
#include "netcvr/metrics.hpp"
#include "netcvr/model.hpp"
#include "netcvr/objective.hpp"
#include "netcvr/stream.hpp"

namespace netcvr {

enum class Regime : std::uint8_t { pretrained, oracle, bdl, fnc, fnw, esdfm, tesla };
const char* to_string(Regime r);
Regime regime_from_string(const std::string& s);

// A training regime over the shared model/stream machinery. The regime fixes
// the legal flag combinations; the flags only have effect under tesla.
struct RegimeSpec {
  Regime regime = Regime::tesla;
  Variant variant = Variant::hybrid;
  bool use_refund_obs_window = true;  // ROW
  bool use_cvr_debias = true;
  bool use_refund_debias = true;  // DS, requires ROW
  bool use_dar = true;
  bool direct_netcvr_head = false;  // second tower learns net labels directly
  RankingConfig ranking;

  void validate() const;

  // Sample-delivery windows actually used for the schedule. fnc/fnw ingest
  // negatives at click time and refunds at actual refund time; esdfm keeps
  // the conversion window but not the refund one.
  WindowConfig effective_windows(const WindowConfig& w) const;

  bool online() const { return regime >= Regime::fnc; }
  bool cvr_debias() const {
    return regime == Regime::esdfm || (regime == Regime::tesla && use_cvr_debias);
  }
  bool rfr_debias() const {
    return regime == Regime::tesla && use_refund_debias && use_refund_obs_window;
  }
  bool dar() const { return regime == Regime::tesla && use_dar; }
  bool fnw_weighting() const { return regime == Regime::fnw; }
};

// Canonical flag set for a named regime (tesla keeps the full method on).
RegimeSpec make_regime_spec(Regime regime, Variant variant = Variant::hybrid);

struct TrainSettings {
  AdamConfig<float> adam{1e-3f};
  AdamConfig<float> pretrain_adam{1e-3f};
  int batch_size = 512;
  int pretrain_epochs = 2;
  LossCoefficients coefficients;
  std::uint64_t sampling_seed = 99;
  int trace_every = 50;
};

struct SegmentTraceRow {
  int segment = 0;
  std::int64_t n_eval = 0;
  // cumulative pooled metrics up to this segment; NaN when undefined
  double auc_cvr = 0, auc_net = 0, nll_net = 0, pcoc_net = 0;
};

struct EvalArrays {
  std::vector<std::int32_t> segment;
  std::vector<std::uint8_t> y, net;
  std::vector<float> p_v, p_n;
};

struct RunResult {
  MetricsReport metrics;
  MetricsReport final_quarter;  // pooled over the last quarter of segments
  std::vector<SegmentTraceRow> trace;
  EvalArrays eval;
  std::int64_t n_train_records = 0;
  std::int64_t n_train_batches = 0;
  std::uint64_t tail_hash_v = 0, tail_hash_r = 0;  // post-run parameter hashes
};

// Offline pretraining on fully attributed labels; the resulting model is the
// common starting point for every regime.
Model<float> pretrain_model(const ModelConfig& cfg, std::uint64_t init_seed,
                            std::span<const ClickEvent> clicks,
                            std::span<const std::int32_t> click_idx, const WindowConfig& windows,
                            const TrainSettings& settings, bool direct_netcvr_head);

// Executes the segment protocol for one regime starting from `init`. clicks
// must be the stream chunk (t_c >= plan.stream_start()), click-time sorted.
RunResult run_regime(const RegimeSpec& spec, std::span<const ClickEvent> clicks,
                     const SplitPlan& plan, const WindowConfig& windows, const Checkpoint& init,
                     const TrainSettings& settings,
                     MetricAggregation aggregation = MetricAggregation::pooled);

}  // namespace netcvr
