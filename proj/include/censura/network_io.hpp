#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"

#include "censura/network.hpp"
#include "censura/training.hpp"

namespace censura {

/// Everything needed to rebuild one trained network.
struct Checkpoint {
  NetworkSpec spec;
  NetworkState state;
  TrainConfig config;
  LossSpec loss;
  std::uint64_t seed = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// JSON mappings. Doubles are written in shortest round-trip form, so a
// save/load cycle reproduces every parameter bit for bit.
void to_json(nlohmann::json& j, const NetworkSpec& s);
void from_json(const nlohmann::json& j, NetworkSpec& s);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const LossSpec& l);
void from_json(const nlohmann::json& j, LossSpec& l);
void to_json(nlohmann::json& j, const NetworkState& s);
void from_json(const nlohmann::json& j, NetworkState& s);
void to_json(nlohmann::json& j, const TrainingLog& log);
void from_json(const nlohmann::json& j, TrainingLog& log);
void to_json(nlohmann::json& j, const Checkpoint& c);
void from_json(const nlohmann::json& j, Checkpoint& c);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialises with a fixed layout (2-space indent, trailing newline).
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace censura
