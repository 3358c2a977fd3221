#include "netcvr/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace netcvr {

const char* to_string(DeliveryKind k) {
  switch (k) {
    case DeliveryKind::cvr_negative_initial: return "cvr_negative_initial";
    case DeliveryKind::cvr_positive_window: return "cvr_positive_window";
    case DeliveryKind::cvr_positive_duplicate: return "cvr_positive_duplicate";
    case DeliveryKind::rfr_negative_window: return "rfr_negative_window";
    case DeliveryKind::rfr_positive_window: return "rfr_positive_window";
    case DeliveryKind::rfr_positive_duplicate: return "rfr_positive_duplicate";
  }
  return "?";
}

namespace {

void sort_schedule(std::vector<DeliveryRecord>& out) {
  std::sort(out.begin(), out.end(), [](const DeliveryRecord& a, const DeliveryRecord& b) {
    if (a.t_o != b.t_o) return a.t_o < b.t_o;
    if (a.event_id != b.event_id) return a.event_id < b.event_id;
    return a.kind < b.kind;
  });
}

}  // namespace

std::vector<DeliveryRecord> build_delivery_schedule(std::span<const ClickEvent> events,
                                                    const WindowConfig& w) {
  std::vector<DeliveryRecord> out;
  out.reserve(events.size() * 5 / 4);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const ClickEvent& e = events[i];
    const auto idx = static_cast<std::int32_t>(i);
    const bool conv = e.t_v.has_value() && (*e.t_v - e.t_c <= w.w_attr_v);
    const double h_v = conv ? *e.t_v - e.t_c : -1.0;

    if (conv && h_v <= w.w_obs_v) {
      out.push_back({e.id, idx, e.t_c + w.w_obs_v, DeliveryKind::cvr_positive_window, 1, 0,
                     static_cast<float>(h_v), -1.0f});
    } else {
      // Initial negative; delayed conversions keep it and add a duplicate.
      out.push_back({e.id, idx, e.t_c + w.w_obs_v, DeliveryKind::cvr_negative_initial, 0, 0, -1.0f, -1.0f});
      if (conv)
        out.push_back({e.id, idx, *e.t_v, DeliveryKind::cvr_positive_duplicate, 1, 0,
                       static_cast<float>(h_v), -1.0f});
    }

    if (conv) {
      const bool refund = e.t_r.has_value() && (*e.t_r - *e.t_v <= w.w_attr_r);
      const double h_r = refund ? *e.t_r - *e.t_v : -1.0;
      if (refund && h_r <= w.w_obs_r) {
        out.push_back({e.id, idx, *e.t_v + w.w_obs_r, DeliveryKind::rfr_positive_window, 1, 1,
                       static_cast<float>(h_v), static_cast<float>(h_r)});
      } else {
        out.push_back({e.id, idx, *e.t_v + w.w_obs_r, DeliveryKind::rfr_negative_window, 1, 0,
                       static_cast<float>(h_v), -1.0f});
        if (refund)
          out.push_back({e.id, idx, *e.t_r, DeliveryKind::rfr_positive_duplicate, 1, 1,
                         static_cast<float>(h_v), static_cast<float>(h_r)});
      }
    }
  }
  sort_schedule(out);
  return out;
}

std::vector<DeliveryRecord> build_oracle_schedule(std::span<const ClickEvent> events,
                                                  const WindowConfig& w) {
  std::vector<DeliveryRecord> out;
  out.reserve(events.size() * 5 / 4);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const ClickEvent& e = events[i];
    const auto idx = static_cast<std::int32_t>(i);
    ResolvedLabels lab = resolve_labels(e, w);
    if (lab.y) {
      float h_v = static_cast<float>(*e.t_v - e.t_c);
      out.push_back({e.id, idx, e.t_c, DeliveryKind::cvr_positive_window, 1, lab.z, h_v, -1.0f});
      float h_r = lab.z ? static_cast<float>(*e.t_r - *e.t_v) : -1.0f;
      out.push_back({e.id, idx, e.t_c,
                     lab.z ? DeliveryKind::rfr_positive_window : DeliveryKind::rfr_negative_window, 1,
                     lab.z, h_v, h_r});
    } else {
      out.push_back({e.id, idx, e.t_c, DeliveryKind::cvr_negative_initial, 0, 0, -1.0f, -1.0f});
    }
  }
  sort_schedule(out);
  return out;
}

std::vector<DeliveryRecord> build_bdl_schedule(std::span<const ClickEvent> events,
                                               const WindowConfig& w) {
  auto out = build_oracle_schedule(events, w);
  for (auto& r : out) {
    const ClickEvent& e = events[static_cast<std::size_t>(r.event_index)];
    r.t_o = std::floor(e.t_c) + 1.0 + w.w_attr_v + w.w_attr_r;
  }
  sort_schedule(out);
  return out;
}

void SplitPlan::validate() const {
  if (!(pretrain_end > 0.0)) throw std::invalid_argument("SplitPlan: pretrain_end must be > 0");
  if (!(segment_len > 0.0)) throw std::invalid_argument("SplitPlan: segment_len must be > 0");
  if (n_segments() <= 0) throw std::invalid_argument("SplitPlan: no streaming segments fit before the horizon");
}

SplitPlan make_split_plan(const WindowConfig& windows, double pretrain_end, double horizon) {
  SplitPlan p;
  p.pretrain_end = pretrain_end;
  p.horizon = horizon;
  p.segment_len = windows.segment_len;
  p.gap = windows.w_attr_v + windows.w_attr_r;
  p.validate();
  return p;
}

Protocol::Protocol(std::span<const ClickEvent> clicks, std::span<const DeliveryRecord> schedule,
                   const SplitPlan& plan, const WindowConfig& windows)
    : clicks_(clicks), schedule_(schedule), plan_(plan), windows_(windows) {
  plan_.validate();
  const int n = plan_.n_segments();
  rec_seg_begin_.resize(static_cast<std::size_t>(n) + 1);
  click_seg_begin_.resize(static_cast<std::size_t>(n) + 1);
  auto rec_lower = [&](double t) {
    return static_cast<std::size_t>(
        std::lower_bound(schedule_.begin(), schedule_.end(), t,
                         [](const DeliveryRecord& r, double v) { return r.t_o < v; }) -
        schedule_.begin());
  };
  auto click_lower = [&](double t) {
    return static_cast<std::size_t>(std::lower_bound(clicks_.begin(), clicks_.end(), t,
                                                     [](const ClickEvent& e, double v) { return e.t_c < v; }) -
                                    clicks_.begin());
  };
  for (int k = 0; k <= n; ++k) {
    const double t = plan_.segment_begin(k);
    rec_seg_begin_[k] = rec_lower(t);
    click_seg_begin_[k] = click_lower(t);
  }
}

std::span<const DeliveryRecord> Protocol::train_records(int segment) const {
  return schedule_.subspan(rec_seg_begin_[segment],
                           rec_seg_begin_[segment + 1] - rec_seg_begin_[segment]);
}

EvalBatch Protocol::eval_batch(int segment) const {
  EvalBatch b;
  const std::size_t lo = click_seg_begin_[segment], hi = click_seg_begin_[segment + 1];
  b.click_idx.reserve(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    ResolvedLabels lab = resolve_labels(clicks_[i], windows_);
    b.click_idx.push_back(static_cast<std::int32_t>(i));
    b.y.push_back(lab.y);
    b.z.push_back(lab.z);
    b.net.push_back(lab.net);
  }
  return b;
}

std::vector<std::int32_t> Protocol::pretrain_click_indices() const {
  std::vector<std::int32_t> out;
  for (std::size_t i = 0; i < clicks_.size() && clicks_[i].t_c < plan_.pretrain_end; ++i)
    out.push_back(static_cast<std::int32_t>(i));
  return out;
}

std::vector<ClickEvent> ingest_cascade_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log: " + path);
  std::vector<ClickEvent> events;
  std::string line;
  std::size_t lineno = 0;
  double prev_tc = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ClickEvent e;
      e.id = j.at("id").get<std::int64_t>();
      const auto& feat = j.at("feat");
      if (!feat.is_array() || feat.size() != kNumFields)
        throw std::runtime_error("feat must have exactly 22 entries");
      for (int f = 0; f < kNumFields; ++f) {
        std::int64_t v = feat[f].get<std::int64_t>();
        if (v < 0 || v > std::numeric_limits<std::uint32_t>::max())
          throw std::runtime_error("feature value out of range");
        e.feat[f] = static_cast<std::uint32_t>(v);
      }
      e.t_c = j.at("tc").get<double>();
      if (!j.at("tv").is_null()) e.t_v = j.at("tv").get<double>();
      if (!j.at("tr").is_null()) e.t_r = j.at("tr").get<double>();
      e.validate();
      if (e.t_c < prev_tc)
        throw std::runtime_error("out-of-order click time, first offending id " + std::to_string(e.id));
      prev_tc = e.t_c;
      events.push_back(e);
    } catch (const std::exception& ex) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return events;
}

void write_cascade_jsonl(const std::string& path, std::span<const ClickEvent> events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const ClickEvent& e : events) {
    nlohmann::json j;
    j["id"] = e.id;
    j["feat"] = e.feat;
    j["tc"] = e.t_c;
    j["tv"] = e.t_v ? nlohmann::json(*e.t_v) : nlohmann::json(nullptr);
    j["tr"] = e.t_r ? nlohmann::json(*e.t_r) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace netcvr
