// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "flow/flow_model.hpp"

namespace cdflow::flow {

/// Binary checkpoint layout, all integers and reals little-endian:
///
///   "CDFLOW"                        6 bytes magic
///   u32 version                     kCheckpointVersion
///   u32 scales, u32 steps, u32 hidden_width, f64 clamp, u32 height, u32 width
///   u8  actnorm_initialized
///   u32 parameter count
///   per parameter, in schedule order:
///     u32 name length, name bytes, u32 rank, u32 extents[rank], f64 values[]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const FlowModel& model, std::ostream& out);
void save_checkpoint(const FlowModel& model, const std::string& path);

/// Format error on bad magic, version mismatch, or parameters that disagree
/// with the schedule implied by the stored config.
FlowModel load_checkpoint(std::istream& in);
FlowModel load_checkpoint(const std::string& path);

}  // namespace cdflow::flow
