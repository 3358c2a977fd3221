#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netcvr/domain.hpp"

namespace netcvr {

enum class DeliveryKind : std::uint8_t {
  cvr_negative_initial = 0,
  cvr_positive_window,
  cvr_positive_duplicate,
  rfr_negative_window,
  rfr_positive_window,
  rfr_positive_duplicate,
};

const char* to_string(DeliveryKind k);
inline bool is_cvr_kind(DeliveryKind k) { return k <= DeliveryKind::cvr_positive_duplicate; }

// One training sample as the model sees it at delivery time t_o. Features
// are referenced through event_index; delays are carried only when already
// observable at t_o.
struct DeliveryRecord {
  std::int64_t event_id = 0;
  std::int32_t event_index = 0;  // into the click vector the schedule was built from
  double t_o = 0.0;
  DeliveryKind kind = DeliveryKind::cvr_negative_initial;
  std::uint8_t observed_y = 0;
  std::uint8_t observed_z = 0;
  float h_v = -1.0f;  // t_v - t_c, if known at t_o (else negative)
  float h_r = -1.0f;  // t_r - t_v, if known at t_o

  double e_v(const ClickEvent& e) const { return t_o - e.t_c; }
  double e_r(const ClickEvent& e) const { return e.t_v ? t_o - *e.t_v : 0.0; }
};

// Four-window delivery rules. Per click: an initial CVR label at the end of
// the conversion observation window, a positive duplicate at conversion time
// when the conversion lands beyond it, and the analogous refund pair anchored
// at the conversion. Output is sorted by (t_o, event_id).
std::vector<DeliveryRecord> build_delivery_schedule(std::span<const ClickEvent> events,
                                                    const WindowConfig& windows);

// Privileged stream: fully attributed labels delivered at click time.
std::vector<DeliveryRecord> build_oracle_schedule(std::span<const ClickEvent> events,
                                                  const WindowConfig& windows);

// Daily batch stream: fully attributed labels for day D delivered as one
// batch at (D+1) + w_attr_v + w_attr_r.
std::vector<DeliveryRecord> build_bdl_schedule(std::span<const ClickEvent> events,
                                               const WindowConfig& windows);

struct SplitPlan {
  double pretrain_end = 5.0;
  double horizon = 25.0;
  double segment_len = 0.01;
  double gap = 6.0;  // w_attr_v + w_attr_r

  double stream_start() const { return pretrain_end + gap; }
  int n_segments() const {
    double span = horizon - stream_start();
    return span > 0.0 ? static_cast<int>(span / segment_len) : 0;
  }
  double segment_begin(int k) const { return stream_start() + k * segment_len; }
  void validate() const;
};

SplitPlan make_split_plan(const WindowConfig& windows, double pretrain_end, double horizon);

struct EvalBatch {
  std::vector<std::int32_t> click_idx;
  std::vector<std::uint8_t> y, z, net;  // fully attributed ground truth
};

// Precomputed segment views over a sorted schedule and a click-time-sorted
// log. The driver evaluates the clicks of segment k before training on its
// delivery records, which realizes train-on-n / evaluate-on-(n+1): after the
// model trains on segment n, the next predictions it makes are for the
// clicks of segment n+1.
class Protocol {
 public:
  Protocol(std::span<const ClickEvent> clicks, std::span<const DeliveryRecord> schedule,
           const SplitPlan& plan, const WindowConfig& windows);

  int n_segments() const { return plan_.n_segments(); }
  const SplitPlan& plan() const { return plan_; }

  std::span<const DeliveryRecord> train_records(int segment) const;
  EvalBatch eval_batch(int segment) const;

  // Clicks with t_c < pretrain_end, for offline pretraining.
  std::vector<std::int32_t> pretrain_click_indices() const;

 private:
  std::span<const ClickEvent> clicks_;
  std::span<const DeliveryRecord> schedule_;
  SplitPlan plan_;
  WindowConfig windows_;
  std::vector<std::size_t> rec_seg_begin_;    // schedule index of each segment start
  std::vector<std::size_t> click_seg_begin_;  // click index of each segment start
};

// JSONL event log: {"id":int,"feat":[22 ints],"tc":f,"tv":f|null,"tr":f|null}
// one object per line, click-time sorted. Floats round-trip exactly.
std::vector<ClickEvent> ingest_cascade_jsonl(const std::string& path);
void write_cascade_jsonl(const std::string& path, std::span<const ClickEvent> events);

}  // namespace netcvr
