#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace netcvr {

// Probability a random positive outranks a random negative, ties at 0.5;
// rank-sum implementation. Absent when either class is missing.
std::optional<double> auc(std::span<const float> scores, std::span<const std::uint8_t> labels);

// Area under the precision-recall step curve using the precision envelope
// (max precision at recall >= r). Absent when there are no positives.
std::optional<double> prauc(std::span<const float> scores, std::span<const std::uint8_t> labels);

// Mean negative log-likelihood; scores clamped to [1e-7, 1-1e-7].
double nll(std::span<const float> scores, std::span<const std::uint8_t> labels);

// Mean predicted probability over empirical positive rate.
std::optional<double> pcoc(std::span<const float> scores, std::span<const std::uint8_t> labels);

// (model - pretrained) / (oracle - pretrained) * 100. Absent on a zero
// denominator.
std::optional<double> relative_improvement(double model_val, double pretrained_val,
                                           double oracle_val);

struct TaskMetrics {
  std::optional<double> auc, prauc;
  double nll = 0.0;
  std::optional<double> pcoc;
  std::optional<double> ri_auc, ri_prauc;
};

struct MetricsReport {
  TaskMetrics cvr, netcvr;
  std::int64_t n_samples = 0;
  std::int64_t n_positives_cvr = 0;
  std::int64_t n_positives_net = 0;
};

enum class MetricAggregation : std::uint8_t { pooled = 0, per_segment = 1 };
const char* to_string(MetricAggregation a);
MetricAggregation aggregation_from_string(const std::string& s);

TaskMetrics compute_task_metrics(std::span<const float> scores,
                                 std::span<const std::uint8_t> labels);

// Per-segment averaging over segments where the metric is defined;
// segment_of[i] must be non-decreasing.
TaskMetrics compute_task_metrics_segmented(std::span<const float> scores,
                                           std::span<const std::uint8_t> labels,
                                           std::span<const std::int32_t> segment_of);

}  // namespace netcvr
