// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "flow/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "common/error.hpp"

namespace cdflow::flow {

namespace {

constexpr char kMagic[6] = {'C', 'D', 'F', 'L', 'O', 'W'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) fail(ErrorCode::format, "checkpoint is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::uint32_t to_u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

}  // namespace

void save_checkpoint(const FlowModel& model, std::ostream& out) {
  const FlowConfig& c = model.config();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.scales));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.steps));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden_width));
  put<double>(out, c.clamp);
  put<std::uint32_t>(out, to_u32(c.height));
  put<std::uint32_t>(out, to_u32(c.width));
  put<std::uint8_t>(out, model.actnorm_initialized() ? 1 : 0);
  put<std::uint32_t>(out, to_u32(model.parameters().size()));
  for (const Parameter& p : model.parameters()) {
    put<std::uint32_t>(out, to_u32(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, to_u32(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint32_t>(out, to_u32(d));
    for (double v : p.value.data()) put<double>(out, v);
  }
  if (!out) fail(ErrorCode::output, "failed writing checkpoint");
}

void save_checkpoint(const FlowModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::output, "cannot open checkpoint for writing: " + path);
  save_checkpoint(model, out);
  out.flush();
  if (!out) fail(ErrorCode::output, "failed writing checkpoint: " + path);
}

FlowModel load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::format, "not a CDFLOW checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    fail(ErrorCode::format, "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                std::to_string(kCheckpointVersion) + ")");
  }
  FlowConfig c;
  c.scales = static_cast<int>(get<std::uint32_t>(in));
  c.steps = static_cast<int>(get<std::uint32_t>(in));
  c.hidden_width = static_cast<int>(get<std::uint32_t>(in));
  c.clamp = get<double>(in);
  c.height = get<std::uint32_t>(in);
  c.width = get<std::uint32_t>(in);
  const bool initialized = get<std::uint8_t>(in) != 0;
  c.validate();

  const auto schedule = parameter_schedule(c);
  const auto count = get<std::uint32_t>(in);
  if (count != schedule.size()) {
    fail(ErrorCode::format, "checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                                std::to_string(schedule.size()));
  }
  std::vector<Parameter> params;
  params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in);
    if (name_len > 4096) fail(ErrorCode::format, "implausible parameter name length in checkpoint");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) fail(ErrorCode::format, "checkpoint is truncated");
    const auto rank = get<std::uint32_t>(in);
    if (rank == 0 || rank > 8) fail(ErrorCode::format, "implausible parameter rank in checkpoint");
    ad::Shape shape(rank);
    for (auto& d : shape) d = get<std::uint32_t>(in);
    if (shape != schedule[i].second || name != schedule[i].first) {
      fail(ErrorCode::format, "checkpoint parameter " + std::to_string(i) + " '" + name + "' " +
                                  ad::shape_str(shape) + " does not match expected '" + schedule[i].first + "' " +
                                  ad::shape_str(schedule[i].second));
    }
    std::vector<double> values(ad::shape_numel(shape));
    for (double& v : values) v = get<double>(in);
    params.push_back({std::move(name), ad::Tensor(std::move(shape), std::move(values))});
  }
  return FlowModel(c, std::move(params), initialized);
}

FlowModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::input, "cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace cdflow::flow
