#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "malite/featurizer.hpp"
#include "malite/forest.hpp"
#include "malite/net.hpp"

namespace malite {

/// Patch-histogram front end plus random forest.
struct HrfModel {
  FeaturizerSettings features;
  Forest forest;
  std::vector<std::string> labels;
};

/// Bottleneck CNN together with the input geometry it was trained on.
struct MnModel {
  MnModel(NetConfig cfg, int side, std::vector<std::string> labels)
      : side(side), labels(std::move(labels)), net(std::move(cfg)) {}

  int side;
  std::vector<std::string> labels;
  Model<float> net;

  const NetConfig& config() const { return net.config(); }
  bool rgb() const { return net.config().input_channels == 3; }
};

enum class ModelKind : std::uint8_t { Hrf = 0, Mn = 1 };

// Layout (little-endian):
//   "MLTE" | u8 version | u8 kind | u16 reserved
//   u32 metadata length | metadata JSON
//   u64 payload length  | payload (forest nodes or named tensors)
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint8_t kContainerVersion = 1;

std::vector<std::uint8_t> save_model(const HrfModel& m);
std::vector<std::uint8_t> save_model(const MnModel& m);

using AnyModel = std::variant<HrfModel, MnModel>;

/// Validates magic, version, lengths and checksum; FormatError otherwise.
AnyModel load_model(std::span<const std::uint8_t> bytes);

ModelKind peek_kind(std::span<const std::uint8_t> bytes);
bool looks_like_container(std::span<const std::uint8_t> bytes);

}  // namespace malite
