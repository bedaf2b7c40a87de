#pragma once

// Synthetic FMCW MIMO baseband generation from point-scatterer body models.

#include "microsig/radar_config.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace microsig::sim {

/// Polar track of one point scatterer, one sample per chirp.
struct ScattererTrajectory {
  int id = 0;
  double amplitude = 1.0;
  Eigen::ArrayXd range_m;
  Eigen::ArrayXd azimuth_rad;

  Eigen::Index size() const { return range_m.size(); }
};

enum class MotionProfile {
  oscillate,       // tapered sinusoid at cycle_frequency_hz
  there_and_back,  // excursion and return within one occurrence
  one_way,         // excursion that persists after the occurrence
};

/// Static description of a reflecting body part, subject frame
/// (depth = away from the radar at aspect 0, lateral = to the left).
struct BodyPart {
  std::string name;
  double amplitude = 1.0;
  double depth_offset_m = 0.0;
  double lateral_offset_m = 0.0;
};

/// Motion of one body part during one occurrence of a stage.
struct PartMotion {
  std::string part;
  MotionProfile profile = MotionProfile::oscillate;
  double radial_amplitude_m = 0.0;
  double angular_amplitude_rad = 0.0;  // lateral excursion seen from the base range
  double cycle_frequency_hz = 1.0;
  double phase_offset_rad = 0.0;
  double translational_velocity_mps = 0.0;
};

/// One kind of occurrence. Stages of a model are performed cyclically.
struct ActivityStage {
  std::string label;
  double duration_s = 1.5;
  std::vector<PartMotion> motions;
};

struct ActivityModel {
  std::string activity_label;
  std::vector<BodyPart> parts;
  std::vector<ActivityStage> stages;
  double rest_min_s = 0.3;
  double rest_max_s = 0.8;
  double timing_jitter = 0.15;  // relative spread of occurrence durations
  double duration_s = 30.0;
  double aspect_angle_deg = 0.0;
  double subject_scale = 1.0;
  double base_range_m = 2.0;
  double base_azimuth_rad = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground-truth interval of one occurrence.
struct Segment {
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
  bool operator==(const Segment&) const = default;
};

struct RecordMetadata {
  std::string record_id;
  std::string label;
  std::uint64_t seed = 0;
  double aspect_angle_deg = 0.0;
  std::string subject;
  std::string split;
  std::vector<Segment> segments;
  bool operator==(const RecordMetadata&) const = default;
};

/// Complex baseband samples. Column (chirp * n_virtual + channel) holds the
/// fast-time samples of one chirp on one virtual channel, so the storage is
/// C-order [chirp, channel, sample].
struct IqCube {
  Eigen::MatrixXcf samples;
  RadarConfig config;
  RecordMetadata metadata;

  Eigen::Index n_chirps() const { return config.n_virtual() > 0 ? samples.cols() / config.n_virtual() : 0; }
  auto fast_time(Eigen::Index chirp, int channel) { return samples.col(chirp * config.n_virtual() + channel); }
  auto fast_time(Eigen::Index chirp, int channel) const { return samples.col(chirp * config.n_virtual() + channel); }
  void validate() const;
};

/// Occurrence timeline drawn from the model's seed (first draw of the generator).
std::vector<Segment> activity_timeline(const ActivityModel& model);

std::vector<ScattererTrajectory> gen_activity_trajectories(const ActivityModel& model, const RadarConfig& config);

/// Sum of point-scatterer returns plus complex white noise at config.snr_db
/// relative to the mean noise-free sample power.
IqCube simulate_iq(const std::vector<ScattererTrajectory>& trajectories, const RadarConfig& config,
                   std::uint64_t noise_seed = 0);

/// Single scatterer with constant radial and angular velocity.
IqCube point_target_cube(double range_m, double azimuth_rad, double radial_velocity_mps, double angular_velocity_radps,
                         const RadarConfig& config, Eigen::Index n_chirps = 0, std::uint64_t noise_seed = 0);

std::size_t chirp_count(double duration_s, const RadarConfig& config);

/// Writes <base>.iq (little-endian float32 re/im) and <base>.meta.json.
void write_iq_cube(const std::filesystem::path& base, const IqCube& cube);
IqCube read_iq_cube(const std::filesystem::path& base);

}  // namespace microsig::sim
