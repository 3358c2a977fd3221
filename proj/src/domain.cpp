#include "netcvr/domain.hpp"

#include <stdexcept>

namespace netcvr {

void ClickEvent::validate() const {
  if (t_r.has_value() && !t_v.has_value())
    throw std::invalid_argument("event " + std::to_string(id) + ": refund without conversion");
  if (t_v.has_value() && *t_v < t_c)
    throw std::invalid_argument("event " + std::to_string(id) + ": t_v < t_c");
  if (t_r.has_value() && *t_r < *t_v)
    throw std::invalid_argument("event " + std::to_string(id) + ": t_r < t_v");
}

void WindowConfig::validate() const {
  if (!(w_obs_v > 0.0 && w_obs_v <= w_attr_v))
    throw std::invalid_argument("WindowConfig: need 0 < w_obs_v <= w_attr_v");
  if (!(w_obs_r >= 0.0 && w_obs_r <= w_attr_r))
    throw std::invalid_argument("WindowConfig: need 0 <= w_obs_r <= w_attr_r");
  if (!(segment_len > 0.0)) throw std::invalid_argument("WindowConfig: segment_len must be > 0");
}

const char* to_string(TrajectoryType t) {
  switch (t) {
    case TrajectoryType::nConv: return "nConv";
    case TrajectoryType::iConv: return "iConv";
    case TrajectoryType::dConv: return "dConv";
    case TrajectoryType::iConv_iRefund: return "iConv_iRefund";
    case TrajectoryType::iConv_dRefund: return "iConv_dRefund";
    case TrajectoryType::dConv_iRefund: return "dConv_iRefund";
    case TrajectoryType::dConv_dRefund: return "dConv_dRefund";
  }
  return "?";
}

TrajectoryType classify_trajectory(const ClickEvent& e, const WindowConfig& w) {
  const bool converted = e.t_v.has_value() && (*e.t_v - e.t_c <= w.w_attr_v);
  if (!converted) return TrajectoryType::nConv;
  const bool immediate_conv = (*e.t_v - e.t_c <= w.w_obs_v);
  const bool refunded = e.t_r.has_value() && (*e.t_r - *e.t_v <= w.w_attr_r);
  if (!refunded) return immediate_conv ? TrajectoryType::iConv : TrajectoryType::dConv;
  const bool immediate_refund = (*e.t_r - *e.t_v <= w.w_obs_r);
  if (immediate_conv)
    return immediate_refund ? TrajectoryType::iConv_iRefund : TrajectoryType::iConv_dRefund;
  return immediate_refund ? TrajectoryType::dConv_iRefund : TrajectoryType::dConv_dRefund;
}

ResolvedLabels resolve_labels(const ClickEvent& e, const WindowConfig& w) {
  ResolvedLabels out;
  out.y = (e.t_v.has_value() && (*e.t_v - e.t_c <= w.w_attr_v)) ? 1 : 0;
  out.z = (out.y && e.t_r.has_value() && (*e.t_r - *e.t_v <= w.w_attr_r)) ? 1 : 0;
  out.net = static_cast<std::uint8_t>(out.y * (1 - out.z));
  return out;
}

}  // namespace netcvr
