#include "microsig/sim.hpp"

#include "microsig/io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>

namespace microsig::sim {

namespace {

constexpr double kPi = std::numbers::pi;

struct Occurrence {
  Segment segment;
  std::size_t stage = 0;
};

std::vector<Occurrence> draw_occurrences(const ActivityModel& model) {
  model.validate();
  std::mt19937_64 rng(model.seed);
  std::uniform_real_distribution<double> rest(model.rest_min_s, model.rest_max_s);
  std::uniform_real_distribution<double> stretch(1.0 - model.timing_jitter, 1.0 + model.timing_jitter);
  std::uniform_real_distribution<double> lead(0.0, model.rest_max_s);

  std::vector<Occurrence> out;
  double t = lead(rng);
  std::size_t stage = 0;
  while (true) {
    const auto& st = model.stages[stage];
    const double d = st.duration_s * model.subject_scale * stretch(rng);
    if (t + d > model.duration_s) break;
    out.push_back({{st.label, t, t + d}, stage});
    t += d + rest(rng);
    stage = (stage + 1) % model.stages.size();
  }
  return out;
}

double profile_shape(MotionProfile profile, double u, double tau, double freq, double phase) {
  switch (profile) {
    case MotionProfile::oscillate: {
      const double taper = std::sin(kPi * u);
      return taper * taper * std::sin(2.0 * kPi * freq * tau + phase);
    }
    case MotionProfile::there_and_back:
      return 0.5 * (1.0 - std::cos(2.0 * kPi * u));
    case MotionProfile::one_way:
      return 0.5 * (1.0 - std::cos(kPi * u));
  }
  return 0.0;
}

void check_point(double r, double theta, const RadarConfig& config) {
  if (!(r > 0.0) || r >= config.max_range_m()) {
    throw std::invalid_argument("scatterer range " + std::to_string(r) + " m outside (0, " +
                                std::to_string(config.max_range_m()) + ") m");
  }
  if (!(std::abs(theta) < kPi / 2.0)) {
    throw std::invalid_argument("scatterer azimuth " + std::to_string(theta) + " rad outside (-pi/2, pi/2)");
  }
}

}  // namespace

void ActivityModel::validate() const {
  if (!(duration_s > 0.0)) throw std::invalid_argument("activity: duration_s must be > 0");
  if (parts.empty()) throw std::invalid_argument("activity: empty scatterer set");
  if (stages.empty()) throw std::invalid_argument("activity: no stages");
  if (!(rest_min_s >= 0.0 && rest_max_s >= rest_min_s)) throw std::invalid_argument("activity: bad rest interval");
  if (!(timing_jitter >= 0.0 && timing_jitter < 1.0)) throw std::invalid_argument("activity: timing_jitter outside [0,1)");
  if (!(subject_scale > 0.0)) throw std::invalid_argument("activity: subject_scale must be > 0");
  if (!(base_range_m > 0.0)) throw std::invalid_argument("activity: base_range_m must be > 0");
  for (const auto& st : stages) {
    if (!(st.duration_s > 0.0)) throw std::invalid_argument("activity: stage duration must be > 0");
    for (const auto& m : st.motions) {
      if (!(m.cycle_frequency_hz > 0.0)) throw std::invalid_argument("activity: cycle frequency must be > 0");
      const bool known = std::any_of(parts.begin(), parts.end(), [&](const BodyPart& p) { return p.name == m.part; });
      if (!known) throw std::invalid_argument("activity: motion references unknown part '" + m.part + "'");
    }
  }
}

void IqCube::validate() const {
  config.validate();
  if (samples.rows() != config.samples_per_chirp || samples.cols() % config.n_virtual() != 0) {
    throw std::invalid_argument("IqCube: shape inconsistent with radar config");
  }
  if (!samples.allFinite()) throw std::invalid_argument("IqCube: non-finite samples");
}

std::size_t chirp_count(double duration_s, const RadarConfig& config) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("chirp_count: duration must be > 0");
  return static_cast<std::size_t>(std::floor(duration_s / config.chirp_duration_s * (1.0 + 1e-12)));
}

std::vector<Segment> activity_timeline(const ActivityModel& model) {
  std::vector<Segment> out;
  for (auto& o : draw_occurrences(model)) out.push_back(std::move(o.segment));
  return out;
}

std::vector<ScattererTrajectory> gen_activity_trajectories(const ActivityModel& model, const RadarConfig& config) {
  config.validate();
  const auto occurrences = draw_occurrences(model);
  const auto n = static_cast<Eigen::Index>(chirp_count(model.duration_s, config));
  const double s = model.subject_scale;
  const double alpha = deg_to_rad(model.aspect_angle_deg);
  const double ca = std::cos(alpha);
  const double sa = std::sin(alpha);

  std::map<std::string, std::size_t> part_index;
  for (std::size_t i = 0; i < model.parts.size(); ++i) part_index[model.parts[i].name] = i;

  std::vector<ScattererTrajectory> out(model.parts.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].id = static_cast<int>(i);
    out[i].amplitude = model.parts[i].amplitude;
    out[i].range_m.resize(n);
    out[i].azimuth_rad.resize(n);
  }

  // Offsets that persist after an occurrence (one-way moves, translation).
  std::vector<double> carried_depth(model.parts.size(), 0.0);
  std::vector<double> carried_lateral(model.parts.size(), 0.0);
  std::vector<double> depth(model.parts.size());
  std::vector<double> lateral(model.parts.size());

  std::size_t next = 0;
  for (Eigen::Index p = 0; p < n; ++p) {
    const double t = static_cast<double>(p) * config.chirp_duration_s;
    while (next < occurrences.size() && t >= occurrences[next].segment.end_s) {
      const auto& occ = occurrences[next];
      const double d = occ.segment.end_s - occ.segment.start_s;
      for (const auto& m : model.stages[occ.stage].motions) {
        const std::size_t k = part_index.at(m.part);
        if (m.profile == MotionProfile::one_way) {
          carried_depth[k] += m.radial_amplitude_m * s;
          carried_lateral[k] += m.angular_amplitude_rad * model.base_range_m * s;
        }
        carried_depth[k] += m.translational_velocity_mps * d;
      }
      ++next;
    }
    for (std::size_t k = 0; k < model.parts.size(); ++k) {
      depth[k] = model.parts[k].depth_offset_m * s + carried_depth[k];
      lateral[k] = model.parts[k].lateral_offset_m * s + carried_lateral[k];
    }
    if (next < occurrences.size() && t >= occurrences[next].segment.start_s) {
      const auto& occ = occurrences[next];
      const double d = occ.segment.end_s - occ.segment.start_s;
      const double tau = t - occ.segment.start_s;
      const double u = tau / d;
      for (const auto& m : model.stages[occ.stage].motions) {
        const std::size_t k = part_index.at(m.part);
        const double shape = profile_shape(m.profile, u, tau, m.cycle_frequency_hz, m.phase_offset_rad);
        depth[k] += m.radial_amplitude_m * s * shape + m.translational_velocity_mps * tau;
        lateral[k] += m.angular_amplitude_rad * model.base_range_m * s * shape;
      }
    }
    for (std::size_t k = 0; k < model.parts.size(); ++k) {
      const double along = model.base_range_m + depth[k] * ca - lateral[k] * sa;
      const double across = depth[k] * sa + lateral[k] * ca;
      out[k].range_m(p) = std::hypot(along, across);
      out[k].azimuth_rad(p) = model.base_azimuth_rad + std::atan2(across, along);
    }
  }
  return out;
}

IqCube simulate_iq(const std::vector<ScattererTrajectory>& trajectories, const RadarConfig& config,
                   std::uint64_t noise_seed) {
  config.validate();
  if (trajectories.empty()) throw std::invalid_argument("simulate_iq: no scatterers");
  const Eigen::Index n_chirps = trajectories.front().size();
  if (n_chirps == 0) throw std::invalid_argument("simulate_iq: empty trajectories");
  for (const auto& tr : trajectories) {
    if (tr.size() != n_chirps || tr.azimuth_rad.size() != n_chirps) {
      throw std::invalid_argument("simulate_iq: trajectories differ in length");
    }
  }

  const int ns = config.samples_per_chirp;
  const int nv = config.n_virtual();
  const double lambda = config.wavelength_m();
  const double beat_step_per_m = 2.0 * kPi * 2.0 * config.bandwidth_hz / (kSpeedOfLight * ns);
  const double carrier_per_m = 4.0 * kPi / lambda;
  const double channel_scale = 2.0 * kPi * config.rx_spacing_wavelengths;

  IqCube cube;
  cube.config = config;
  cube.samples.resize(ns, n_chirps * nv);

  Eigen::VectorXcd fast(ns);
  Eigen::RowVectorXcd across(nv);
  Eigen::MatrixXcd block(ns, nv);
  for (Eigen::Index p = 0; p < n_chirps; ++p) {
    block.setZero();
    for (const auto& tr : trajectories) {
      const double r = tr.range_m(p);
      const double th = tr.azimuth_rad(p);
      check_point(r, th, config);
      const std::complex<double> base = tr.amplitude * std::polar(1.0, carrier_per_m * r);
      const std::complex<double> k_step = std::polar(1.0, beat_step_per_m * r);
      const std::complex<double> n_step = std::polar(1.0, channel_scale * std::sin(th));
      fast(0) = base;
      for (int k = 1; k < ns; ++k) fast(k) = fast(k - 1) * k_step;
      across(0) = 1.0;
      for (int v = 1; v < nv; ++v) across(v) = across(v - 1) * n_step;
      block.noalias() += fast * across;
    }
    cube.samples.middleCols(p * nv, nv) = block.cast<std::complex<float>>();
  }

  if (config.noise_enabled()) {
    const double signal_power = cube.samples.cast<std::complex<double>>().squaredNorm() /
                                static_cast<double>(cube.samples.size());
    const double sigma = std::sqrt(signal_power / std::pow(10.0, config.snr_db / 10.0) / 2.0);
    if (sigma > 0.0) {
      std::mt19937_64 rng(noise_seed);
      std::normal_distribution<double> g(0.0, sigma);
      std::complex<float>* data = cube.samples.data();
      for (Eigen::Index i = 0; i < cube.samples.size(); ++i) {
        const double re = g(rng);
        const double im = g(rng);
        data[i] += std::complex<float>(static_cast<float>(re), static_cast<float>(im));
      }
    }
  }
  return cube;
}

IqCube point_target_cube(double range_m, double azimuth_rad, double radial_velocity_mps, double angular_velocity_radps,
                         const RadarConfig& config, Eigen::Index n_chirps, std::uint64_t noise_seed) {
  config.validate();
  if (!(std::abs(radial_velocity_mps) < config.max_velocity_mps())) {
    throw std::invalid_argument("point_target_cube: |v| must be below lambda/(4 T_c) = " +
                                std::to_string(config.max_velocity_mps()) + " m/s");
  }
  if (n_chirps <= 0) n_chirps = 4 * config.chirps_per_frame;
  ScattererTrajectory tr;
  tr.range_m.resize(n_chirps);
  tr.azimuth_rad.resize(n_chirps);
  for (Eigen::Index p = 0; p < n_chirps; ++p) {
    const double t = static_cast<double>(p) * config.chirp_duration_s;
    tr.range_m(p) = range_m + radial_velocity_mps * t;
    tr.azimuth_rad(p) = azimuth_rad + angular_velocity_radps * t;
  }
  IqCube cube = simulate_iq({tr}, config, noise_seed);
  cube.metadata.record_id = "point_target";
  cube.metadata.label = "point_target";
  cube.metadata.seed = noise_seed;
  return cube;
}

void write_iq_cube(const std::filesystem::path& base, const IqCube& cube) {
  const auto bin = std::filesystem::path(base.string() + ".iq");
  const auto meta = std::filesystem::path(base.string() + ".meta.json");
  const std::span<const float> values(reinterpret_cast<const float*>(cube.samples.data()),
                                      static_cast<std::size_t>(cube.samples.size()) * 2);
  io::write_f32(bin, values);
  io::json j{{"schema_version", io::kSchemaVersion},
             {"format", "complex64 little-endian interleaved re/im, C-order [chirp, channel, sample]"},
             {"shape", {cube.n_chirps(), cube.config.n_virtual(), cube.config.samples_per_chirp}},
             {"radar", cube.config},
             {"label", cube.metadata.label},
             {"seed", cube.metadata.seed},
             {"aspect_angle_deg", cube.metadata.aspect_angle_deg},
             {"metadata", cube.metadata}};
  io::write_json(meta, j);
}

IqCube read_iq_cube(const std::filesystem::path& base) {
  const auto meta = io::read_json(std::filesystem::path(base.string() + ".meta.json"));
  IqCube cube;
  cube.config = meta.at("radar").get<RadarConfig>();
  cube.metadata = meta.at("metadata").get<RecordMetadata>();
  const auto shape = meta.at("shape").get<std::vector<Eigen::Index>>();
  if (shape.size() != 3 || shape[1] != cube.config.n_virtual() || shape[2] != cube.config.samples_per_chirp) {
    throw std::invalid_argument("IqCube sidecar shape inconsistent with radar config: " + base.string());
  }
  const auto values = io::read_f32(std::filesystem::path(base.string() + ".iq"));
  if (values.size() != static_cast<std::size_t>(2 * shape[0] * shape[1] * shape[2])) {
    throw std::invalid_argument("IqCube payload size does not match sidecar shape: " + base.string());
  }
  cube.samples.resize(shape[2], shape[0] * shape[1]);
  std::copy(values.begin(), values.end(), reinterpret_cast<float*>(cube.samples.data()));
  cube.validate();
  return cube;
}

}  // namespace microsig::sim
