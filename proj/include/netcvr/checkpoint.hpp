#pragma once

#include <optional>
#include <string>

#include "netcvr/delay_model.hpp"
#include "netcvr/model.hpp"

namespace netcvr {

// Versioned binary container holding the float32 model (weights + Adam
// moments + step counters) and, optionally, the pretrained delay-tail
// models. Layout: magic "NCVRCKP1", u32 version, shape header, little-endian
// 32-bit float parameter blobs in a fixed order. A JSON sidecar
// "<path>.meta.json" carries the same header plus fit metadata.
struct Checkpoint {
  Model<float> model;
  std::optional<DelayTailModel> tail_v, tail_r;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace netcvr
