#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "netcvr/common.hpp"

namespace netcvr {

// One click with its downstream outcomes, when any. Times are fractional
// days since the log epoch.
struct ClickEvent {
  std::int64_t id = 0;
  FeatureVec feat{};
  double t_c = 0.0;
  std::optional<double> t_v;  // conversion time, >= t_c
  std::optional<double> t_r;  // refund time, requires t_v, >= t_v

  void validate() const;
};

struct WindowConfig {
  double w_obs_v = 0.01;   // conversion observation window, days
  double w_obs_r = 0.01;   // refund observation window, days
  double w_attr_v = 3.0;   // conversion attribution window, days
  double w_attr_r = 3.0;   // refund attribution window, days
  double segment_len = 0.01;

  void validate() const;
};

enum class TrajectoryType : std::uint8_t {
  nConv = 0,
  iConv,
  dConv,
  iConv_iRefund,
  iConv_dRefund,
  dConv_iRefund,
  dConv_dRefund,
};
inline constexpr int kNumTrajectoryTypes = 7;

const char* to_string(TrajectoryType t);

struct ResolvedLabels {
  std::uint8_t y = 0;    // conversion within w_attr_v
  std::uint8_t z = 0;    // refund within w_attr_r of the conversion
  std::uint8_t net = 0;  // y * (1 - z)
};

// Window-boundary hits count as inside (<=).
TrajectoryType classify_trajectory(const ClickEvent& event, const WindowConfig& windows);
ResolvedLabels resolve_labels(const ClickEvent& event, const WindowConfig& windows);

}  // namespace netcvr
