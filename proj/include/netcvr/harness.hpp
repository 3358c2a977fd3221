#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "netcvr/baselines.hpp"
#include "netcvr/datagen.hpp"
#include "netcvr/harness_fwd.hpp"

namespace netcvr {

struct SeedConfig {
  std::uint64_t data = 1, init = 2, sampling = 3;
};

// Everything a run needs; embedded verbatim in its report.
struct RunConfig {
  int schema_version = 1;
  SeedConfig seeds;
  WindowConfig windows;
  GroundTruthConfig datagen;
  double pretrain_end = 5.0;
  ModelConfig model;  // vocab left empty here; filled from the generator config
  double lr = 1e-3;
  double pretrain_lr = 1e-3;
  int batch_size = 512;
  int pretrain_epochs = 2;
  RegimeSpec regime;
  DelayTailHyper delay_model;
  LossCoefficients coefficients;
  MetricAggregation aggregation = MetricAggregation::pooled;
  int trace_every = 50;

  TrainSettings train_settings() const;
  std::vector<std::int32_t> vocab() const;  // model vocab from field cardinalities
  void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

// References for RI-AUC / RI-PRAUC, typically the pretrained and oracle runs.
struct RiReferences {
  double pretrained_auc_cvr, pretrained_auc_net;
  double oracle_auc_cvr, oracle_auc_net;
  double pretrained_prauc_cvr, pretrained_prauc_net;
  double oracle_prauc_cvr, oracle_prauc_net;
};

struct RunArtifacts {
  RunResult result;
  nlohmann::json report;
};

// Pretrains the model and fits the delay-tail models on the pretrain chunk.
Checkpoint build_pretrained_checkpoint(const RunConfig& cfg, std::span<const ClickEvent> clicks);

// Stream clicks = t_c in [stream_start, horizon); the returned span indexes
// into `clicks`.
std::span<const ClickEvent> stream_chunk(const RunConfig& cfg, std::span<const ClickEvent> clicks);

RunArtifacts execute_run(const RunConfig& cfg, std::span<const ClickEvent> clicks,
                         const Checkpoint& init,
                         const std::optional<RiReferences>& refs = std::nullopt);

void write_report_json(const std::string& path, const nlohmann::json& report);
void write_trace_csv(const std::string& path, std::span<const SegmentTraceRow> trace);

// Exploratory-analysis tables over a raw log: hourly rates, item-CVR bins
// vs refund/net rates, delay moments by user group, and delay CDFs.
void write_analysis_reports(const std::string& out_dir, std::span<const ClickEvent> events,
                            const WindowConfig& windows, int item_field = kItemFieldBegin,
                            int user_field = kUserFieldBegin);

struct SweepRow {
  double value = 0.0;
  double auc_cvr = 0, auc_net = 0, prauc_cvr = 0, prauc_net = 0, nll_net = 0, pcoc_net = 0;
};

enum class SweepAxis { w_obs_v, w_obs_r, w_attr_r };
SweepAxis sweep_axis_from_string(const std::string& s);
const char* to_string(SweepAxis a);

// One full run per value over a shared log; pretraining is reused when the
// axis does not change the attributed labels.
std::vector<SweepRow> run_sweep(const RunConfig& cfg, SweepAxis axis,
                                std::span<const double> values,
                                std::span<const ClickEvent> clicks);

void write_sweep_outputs(const std::string& out_dir, SweepAxis axis,
                         std::span<const SweepRow> rows);

}  // namespace netcvr
