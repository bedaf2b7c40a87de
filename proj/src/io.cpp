#include "microsig/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace microsig::io {

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float f : values) {
      std::uint32_t u = byteswap32(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<float> read_f32(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path);
  std::ifstream in(path, std::ios::binary);
  const auto bytes = std::filesystem::file_size(path);
  if (bytes % 4 != 0) throw std::runtime_error("float32 blob size not a multiple of 4: " + path.string());
  std::vector<float> v(bytes / 4);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("read failed: " + path.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : v) f = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(f)));
  }
  return v;
}

json read_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path);
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_digest(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace microsig::io

namespace microsig {

void to_json(nlohmann::json& j, const RadarConfig& c) {
  j = nlohmann::json{{"carrier_frequency_hz", c.carrier_frequency_hz},
                     {"bandwidth_hz", c.bandwidth_hz},
                     {"chirp_duration_s", c.chirp_duration_s},
                     {"samples_per_chirp", c.samples_per_chirp},
                     {"chirps_per_frame", c.chirps_per_frame},
                     {"n_tx", c.n_tx},
                     {"n_rx", c.n_rx},
                     {"rx_spacing_wavelengths", c.rx_spacing_wavelengths}};
  if (c.noise_enabled()) {
    j["snr_db"] = c.snr_db;
  } else {
    j["snr_db"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, RadarConfig& c) {
  RadarConfig d;
  c.carrier_frequency_hz = j.value("carrier_frequency_hz", d.carrier_frequency_hz);
  c.bandwidth_hz = j.value("bandwidth_hz", d.bandwidth_hz);
  c.chirp_duration_s = j.value("chirp_duration_s", d.chirp_duration_s);
  c.samples_per_chirp = j.value("samples_per_chirp", d.samples_per_chirp);
  c.chirps_per_frame = j.value("chirps_per_frame", d.chirps_per_frame);
  c.n_tx = j.value("n_tx", d.n_tx);
  c.n_rx = j.value("n_rx", d.n_rx);
  c.rx_spacing_wavelengths = j.value("rx_spacing_wavelengths", d.rx_spacing_wavelengths);
  if (j.contains("snr_db") && j.at("snr_db").is_null()) {
    c.snr_db = std::numeric_limits<double>::infinity();
  } else {
    c.snr_db = j.value("snr_db", d.snr_db);
  }
  c.validate();
}

namespace sim {

void to_json(nlohmann::json& j, const MotionProfile& p) {
  switch (p) {
    case MotionProfile::oscillate: j = "oscillate"; break;
    case MotionProfile::there_and_back: j = "there_and_back"; break;
    case MotionProfile::one_way: j = "one_way"; break;
  }
}

void from_json(const nlohmann::json& j, MotionProfile& p) {
  const auto s = j.get<std::string>();
  if (s == "oscillate") p = MotionProfile::oscillate;
  else if (s == "there_and_back") p = MotionProfile::there_and_back;
  else if (s == "one_way") p = MotionProfile::one_way;
  else throw std::invalid_argument("unknown motion profile: " + s);
}

void to_json(nlohmann::json& j, const BodyPart& p) {
  j = nlohmann::json{{"name", p.name},
                     {"amplitude", p.amplitude},
                     {"depth_offset_m", p.depth_offset_m},
                     {"lateral_offset_m", p.lateral_offset_m}};
}

void from_json(const nlohmann::json& j, BodyPart& p) {
  p.name = j.at("name").get<std::string>();
  p.amplitude = j.value("amplitude", 1.0);
  p.depth_offset_m = j.value("depth_offset_m", 0.0);
  p.lateral_offset_m = j.value("lateral_offset_m", 0.0);
}

void to_json(nlohmann::json& j, const PartMotion& m) {
  j = nlohmann::json{{"part", m.part},
                     {"profile", m.profile},
                     {"radial_amplitude_m", m.radial_amplitude_m},
                     {"angular_amplitude_rad", m.angular_amplitude_rad},
                     {"cycle_frequency_hz", m.cycle_frequency_hz},
                     {"phase_offset_rad", m.phase_offset_rad},
                     {"translational_velocity_mps", m.translational_velocity_mps}};
}

void from_json(const nlohmann::json& j, PartMotion& m) {
  m.part = j.at("part").get<std::string>();
  m.profile = j.value("profile", MotionProfile::oscillate);
  m.radial_amplitude_m = j.value("radial_amplitude_m", 0.0);
  m.angular_amplitude_rad = j.value("angular_amplitude_rad", 0.0);
  m.cycle_frequency_hz = j.value("cycle_frequency_hz", 1.0);
  m.phase_offset_rad = j.value("phase_offset_rad", 0.0);
  m.translational_velocity_mps = j.value("translational_velocity_mps", 0.0);
}

void to_json(nlohmann::json& j, const ActivityStage& s) {
  j = nlohmann::json{{"label", s.label}, {"duration_s", s.duration_s}, {"motions", s.motions}};
}

void from_json(const nlohmann::json& j, ActivityStage& s) {
  s.label = j.at("label").get<std::string>();
  s.duration_s = j.at("duration_s").get<double>();
  s.motions = j.at("motions").get<std::vector<PartMotion>>();
}

void to_json(nlohmann::json& j, const ActivityModel& m) {
  j = nlohmann::json{{"activity_label", m.activity_label},
                     {"parts", m.parts},
                     {"stages", m.stages},
                     {"rest_min_s", m.rest_min_s},
                     {"rest_max_s", m.rest_max_s},
                     {"timing_jitter", m.timing_jitter},
                     {"duration_s", m.duration_s},
                     {"aspect_angle_deg", m.aspect_angle_deg},
                     {"subject_scale", m.subject_scale},
                     {"base_range_m", m.base_range_m},
                     {"base_azimuth_rad", m.base_azimuth_rad},
                     {"seed", m.seed}};
}

void from_json(const nlohmann::json& j, ActivityModel& m) {
  ActivityModel d;
  m.activity_label = j.at("activity_label").get<std::string>();
  m.parts = j.at("parts").get<std::vector<BodyPart>>();
  m.stages = j.at("stages").get<std::vector<ActivityStage>>();
  m.rest_min_s = j.value("rest_min_s", d.rest_min_s);
  m.rest_max_s = j.value("rest_max_s", d.rest_max_s);
  m.timing_jitter = j.value("timing_jitter", d.timing_jitter);
  m.duration_s = j.value("duration_s", d.duration_s);
  m.aspect_angle_deg = j.value("aspect_angle_deg", d.aspect_angle_deg);
  m.subject_scale = j.value("subject_scale", d.subject_scale);
  m.base_range_m = j.value("base_range_m", d.base_range_m);
  m.base_azimuth_rad = j.value("base_azimuth_rad", d.base_azimuth_rad);
  m.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const Segment& s) {
  j = nlohmann::json{{"label", s.label}, {"start_s", s.start_s}, {"end_s", s.end_s}};
}

void from_json(const nlohmann::json& j, Segment& s) {
  s.label = j.at("label").get<std::string>();
  s.start_s = j.at("start_s").get<double>();
  s.end_s = j.at("end_s").get<double>();
}

void to_json(nlohmann::json& j, const RecordMetadata& m) {
  j = nlohmann::json{{"record_id", m.record_id},
                     {"label", m.label},
                     {"seed", m.seed},
                     {"aspect_angle_deg", m.aspect_angle_deg},
                     {"subject", m.subject},
                     {"split", m.split},
                     {"segments", m.segments}};
}

void from_json(const nlohmann::json& j, RecordMetadata& m) {
  m.record_id = j.value("record_id", std::string{});
  m.label = j.value("label", std::string{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.aspect_angle_deg = j.value("aspect_angle_deg", 0.0);
  m.subject = j.value("subject", std::string{});
  m.split = j.value("split", std::string{});
  m.segments = j.value("segments", std::vector<Segment>{});
}

}  // namespace sim
}  // namespace microsig
