#include "netcvr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "netcvr/common.hpp"

namespace netcvr {

std::optional<double> auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  const std::size_t n = scores.size();
  std::int64_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1 : 0;
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::int32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::int32_t a, std::int32_t b) { return scores[a] < scores[b]; });

  // Average ranks across tie groups; ranks are half-integers, exact in double.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::optional<double> prauc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("prauc: size mismatch");
  const std::size_t n = scores.size();
  std::int64_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1 : 0;
  if (n_pos == 0) return std::nullopt;

  std::vector<std::int32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::int32_t a, std::int32_t b) { return scores[a] > scores[b]; });

  // (recall, precision) at the end of every tie block, descending by score.
  std::vector<double> recall, precision;
  std::int64_t tp = 0;
  std::size_t seen = 0, i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) tp += labels[idx[k]] ? 1 : 0;
    seen = j;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }
  // Precision envelope from the right, then the step-wise area.
  for (std::size_t k = precision.size(); k-- > 1;)
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double area = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    area += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return area;
}

double nll(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("nll: size mismatch");
  if (scores.empty()) return 0.0;
  std::vector<double> terms(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::clamp(static_cast<double>(scores[i]), 1e-7, 1.0 - 1e-7);
    terms[i] = labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return pairwise_sum(std::span<const double>(terms)) / static_cast<double>(terms.size());
}

std::optional<double> pcoc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("pcoc: size mismatch");
  if (scores.empty()) return std::nullopt;
  const double mean_p = pairwise_sum(scores) / static_cast<double>(scores.size());
  double pos = 0.0;
  for (auto l : labels) pos += l ? 1.0 : 0.0;
  if (pos == 0.0) return std::nullopt;
  return mean_p / (pos / static_cast<double>(labels.size()));
}

std::optional<double> relative_improvement(double model_val, double pretrained_val,
                                           double oracle_val) {
  const double denom = oracle_val - pretrained_val;
  if (denom == 0.0) return std::nullopt;
  return (model_val - pretrained_val) / denom * 100.0;
}

const char* to_string(MetricAggregation a) {
  return a == MetricAggregation::pooled ? "pooled" : "per_segment";
}

MetricAggregation aggregation_from_string(const std::string& s) {
  if (s == "pooled") return MetricAggregation::pooled;
  if (s == "per_segment") return MetricAggregation::per_segment;
  throw std::invalid_argument("unknown aggregation mode: " + s);
}

TaskMetrics compute_task_metrics(std::span<const float> scores,
                                 std::span<const std::uint8_t> labels) {
  TaskMetrics t;
  t.auc = auc(scores, labels);
  t.prauc = prauc(scores, labels);
  t.nll = nll(scores, labels);
  t.pcoc = pcoc(scores, labels);
  return t;
}

TaskMetrics compute_task_metrics_segmented(std::span<const float> scores,
                                           std::span<const std::uint8_t> labels,
                                           std::span<const std::int32_t> segment_of) {
  if (scores.size() != segment_of.size()) throw std::invalid_argument("segmented metrics: size mismatch");
  TaskMetrics out;
  double sum_auc = 0, sum_prauc = 0, sum_nll = 0, sum_pcoc = 0;
  std::int64_t n_auc = 0, n_prauc = 0, n_nll = 0, n_pcoc = 0;
  std::size_t i = 0;
  while (i < scores.size()) {
    std::size_t j = i;
    while (j < scores.size() && segment_of[j] == segment_of[i]) ++j;
    auto s = scores.subspan(i, j - i);
    auto l = labels.subspan(i, j - i);
    if (auto v = auc(s, l)) {
      sum_auc += *v;
      ++n_auc;
    }
    if (auto v = prauc(s, l)) {
      sum_prauc += *v;
      ++n_prauc;
    }
    sum_nll += nll(s, l);
    ++n_nll;
    if (auto v = pcoc(s, l)) {
      sum_pcoc += *v;
      ++n_pcoc;
    }
    i = j;
  }
  if (n_auc) out.auc = sum_auc / n_auc;
  if (n_prauc) out.prauc = sum_prauc / n_prauc;
  if (n_nll) out.nll = sum_nll / n_nll;
  if (n_pcoc) out.pcoc = sum_pcoc / n_pcoc;
  return out;
}

}  // namespace netcvr
