#pragma once

// Little-endian float32 blobs, JSON files, and JSON mappings for the shared
// value types.

#include "microsig/radar_config.hpp"
#include "microsig/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace microsig::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Raised when an expected artifact is absent. Carries the missing path.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::filesystem::path& p)
      : std::runtime_error("missing artifact: " + p.string()), path_(p) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Hex FNV-1a of a file's bytes; used to fingerprint artifacts in manifests.
std::string file_digest(const std::filesystem::path& path);

}  // namespace microsig::io

namespace microsig {

void to_json(nlohmann::json& j, const RadarConfig& c);
void from_json(const nlohmann::json& j, RadarConfig& c);

namespace sim {
void to_json(nlohmann::json& j, const MotionProfile& p);
void from_json(const nlohmann::json& j, MotionProfile& p);
void to_json(nlohmann::json& j, const BodyPart& p);
void from_json(const nlohmann::json& j, BodyPart& p);
void to_json(nlohmann::json& j, const PartMotion& m);
void from_json(const nlohmann::json& j, PartMotion& m);
void to_json(nlohmann::json& j, const ActivityStage& s);
void from_json(const nlohmann::json& j, ActivityStage& s);
void to_json(nlohmann::json& j, const ActivityModel& m);
void from_json(const nlohmann::json& j, ActivityModel& m);
void to_json(nlohmann::json& j, const Segment& s);
void from_json(const nlohmann::json& j, Segment& s);
void to_json(nlohmann::json& j, const RecordMetadata& m);
void from_json(const nlohmann::json& j, RecordMetadata& m);
}  // namespace sim

}  // namespace microsig
