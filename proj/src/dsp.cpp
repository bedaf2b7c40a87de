#include "microsig/dsp.hpp"

#include "microsig/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace microsig::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<double> doppler_axis(const StftConfig& cfg, const RadarConfig& radar) {
  std::vector<double> axis(static_cast<std::size_t>(cfg.window_len));
  const double lambda = radar.wavelength_m();
  for (int r = 0; r < cfg.window_len; ++r) {
    const double f = shifted_bin(r, cfg.window_len) / (cfg.window_len * radar.chirp_duration_s);
    axis[static_cast<std::size_t>(r)] = f * lambda / 2.0;
  }
  return axis;
}

std::vector<double> omega_axis(const OmegaConfig& cfg) {
  std::vector<double> axis(static_cast<std::size_t>(cfg.n_bins));
  const double step = 2.0 * cfg.omega_max_radps / cfg.n_bins;
  for (int k = 0; k < cfg.n_bins; ++k) axis[static_cast<std::size_t>(k)] = (k - cfg.n_bins / 2) * step;
  return axis;
}

void validate_stft(const StftConfig& cfg, Eigen::Index n_chirps) {
  if (cfg.hop <= 0) throw std::invalid_argument("stft: hop must be > 0");
  if (cfg.window_len <= 0) throw std::invalid_argument("stft: window_len must be > 0");
  if (cfg.window_len > n_chirps) {
    throw std::invalid_argument("stft: window of " + std::to_string(cfg.window_len) + " chirps exceeds record of " +
                                std::to_string(n_chirps));
  }
}

void validate_omega(const OmegaConfig& cfg) {
  if (!(cfg.omega_max_radps > 0.0)) throw std::invalid_argument("omega: omega_max_radps must be > 0");
  if (cfg.n_bins < 2) throw std::invalid_argument("omega: n_bins must be >= 2");
  if (cfg.rate_lag_cols < 1) throw std::invalid_argument("omega: rate_lag_cols must be >= 1");
  if (!(cfg.floor_db >= 0.0)) throw std::invalid_argument("omega: floor_db must be >= 0");
}

void check_gated(const RangeProfileCube& profiles, const std::vector<int>& gated) {
  if (gated.empty()) throw std::invalid_argument("signature: gated_bins is empty");
  for (int b : gated) {
    if (b < 0 || b >= profiles.n_range_bins()) throw std::invalid_argument("signature: gated bin out of range");
  }
}

Spectrogram empty_like(SignatureKind kind, Eigen::Index rows, Eigen::Index cols, std::vector<double> time_axis,
                       std::vector<double> value_axis, const StftConfig& cfg, const std::string& id) {
  Spectrogram s;
  s.kind = kind;
  s.power = Eigen::MatrixXf::Zero(rows, cols);
  s.time_axis_s = std::move(time_axis);
  s.value_axis = std::move(value_axis);
  s.stft = cfg;
  s.record_id = id;
  return s;
}

/// Angular rate of the Doppler-resolved channel-pair phase, deposited onto the omega grid.
void accumulate_omega(const Eigen::MatrixXcf& cross, const RadarConfig& radar, const StftConfig& stft_cfg,
                      const OmegaConfig& cfg, int n_pairs, Eigen::MatrixXf& out) {
  const Eigen::Index n_f = cross.rows();
  const Eigen::Index n_t = cross.cols();
  const double step = 2.0 * cfg.omega_max_radps / cfg.n_bins;
  const double phase_per_sin = 2.0 * kPi * radar.rx_spacing_wavelengths;
  const double col_dt = stft_cfg.hop * radar.chirp_duration_s;
  const double floor_gain = cfg.floor_db > 0.0 ? std::pow(10.0, cfg.floor_db / 10.0) : 0.0;
  std::vector<float> mag(static_cast<std::size_t>(n_f));
  for (Eigen::Index t = 0; t < n_t; ++t) {
    const Eigen::Index t0 = std::max<Eigen::Index>(0, t - cfg.rate_lag_cols);
    const Eigen::Index t1 = std::min<Eigen::Index>(n_t - 1, t + cfg.rate_lag_cols);
    if (t0 == t1) continue;
    const double dt = static_cast<double>(t1 - t0) * col_dt;
    double floor = 0.0;
    if (floor_gain > 0.0) {
      for (Eigen::Index f = 0; f < n_f; ++f) mag[static_cast<std::size_t>(f)] = std::abs(cross(f, t));
      const auto mid = mag.begin() + static_cast<std::ptrdiff_t>(mag.size() / 2);
      std::nth_element(mag.begin(), mid, mag.end());
      floor = static_cast<double>(*mid) * floor_gain;
    }
    for (Eigen::Index f = 0; f < n_f; ++f) {
      const std::complex<double> a(cross(f, t0));
      const std::complex<double> b(cross(f, t1));
      const double weight = std::sqrt(std::abs(a) * std::abs(b)) / n_pairs;
      if (!(weight > 0.0) || std::abs(cross(f, t)) < floor) continue;
      const double rate = std::arg(b * std::conj(a)) / dt;  // d(delta_eps)/dt
      double cos_theta = 1.0;
      if (!cfg.small_angle) {
        const double sin_theta = std::clamp(std::arg(std::complex<double>(cross(f, t))) / phase_per_sin, -1.0, 1.0);
        cos_theta = std::max(std::sqrt(1.0 - sin_theta * sin_theta), 0.05);
      }
      const double omega = rate / (phase_per_sin * cos_theta);
      const double x = omega / step + cfg.n_bins / 2;
      const double fl = std::floor(x);
      const auto i0 = static_cast<Eigen::Index>(fl);
      const double frac = x - fl;
      if (i0 >= 0 && i0 < cfg.n_bins) out(i0, t) += static_cast<float>(weight * (1.0 - frac));
      if (i0 + 1 >= 0 && i0 + 1 < cfg.n_bins && frac > 0.0) out(i0 + 1, t) += static_cast<float>(weight * frac);
    }
  }
}

SignaturePair signatures_impl(const RangeProfileCube& profiles, const std::vector<int>& gated,
                              const StftConfig& stft_cfg, const OmegaConfig& omega_cfg, bool want_omega) {
  check_gated(profiles, gated);
  validate_stft(stft_cfg, profiles.n_chirps());
  const int nv = profiles.config.n_virtual();
  if (want_omega) {
    validate_omega(omega_cfg);
    if (nv < 2) throw std::invalid_argument("micro_omega: needs at least two virtual channels");
  }
  const Eigen::Index n_cols = (profiles.n_chirps() - stft_cfg.window_len) / stft_cfg.hop + 1;
  const auto times = stft_time_axis(profiles.n_chirps(), stft_cfg, profiles.config);
  const std::string& id = profiles.metadata.record_id;

  SignaturePair out;
  const double duration = static_cast<double>(profiles.n_chirps()) * profiles.config.chirp_duration_s;
  out.micro_doppler = empty_like(SignatureKind::micro_doppler, stft_cfg.window_len, n_cols, times,
                                 doppler_axis(stft_cfg, profiles.config), stft_cfg, id);
  out.micro_doppler.duration_s = duration;
  if (want_omega) {
    out.micro_omega =
        empty_like(SignatureKind::micro_omega, omega_cfg.n_bins, n_cols, times, omega_axis(omega_cfg), stft_cfg, id);
    out.micro_omega.duration_s = duration;
  }

  std::vector<Eigen::MatrixXcf> per_channel(static_cast<std::size_t>(nv));
  Eigen::MatrixXcf cross;
  // Ascending bin order keeps the floating-point accumulation order fixed.
  std::vector<int> bins = gated;
  std::sort(bins.begin(), bins.end());
  for (int b : bins) {
    const Eigen::MatrixXcf series = profiles.channel_series(b);
    for (int n = 0; n < nv; ++n) {
      const Eigen::VectorXcf row = series.row(n).transpose();
      per_channel[static_cast<std::size_t>(n)] = stft<float>(row, stft_cfg.window_len, stft_cfg.hop, stft_cfg.window);
      out.micro_doppler.power += per_channel[static_cast<std::size_t>(n)].cwiseAbs2() / static_cast<float>(nv);
    }
    if (!want_omega) continue;
    cross.setZero(stft_cfg.window_len, n_cols);
    for (int n = 0; n + 1 < nv; ++n) {
      cross += per_channel[static_cast<std::size_t>(n + 1)].cwiseProduct(
          per_channel[static_cast<std::size_t>(n)].conjugate());
    }
    accumulate_omega(cross, profiles.config, stft_cfg, omega_cfg, nv - 1, out.micro_omega.power);
  }
  return out;
}

}  // namespace

double Spectrogram::record_length_s() const {
  if (duration_s > 0.0) return duration_s;
  if (time_axis_s.empty()) return 0.0;
  return time_axis_s.back() + time_axis_s.front();
}

std::string to_string(SignatureKind k) { return k == SignatureKind::micro_doppler ? "micro_doppler" : "micro_omega"; }

SignatureKind signature_kind_from_string(const std::string& s) {
  if (s == "micro_doppler") return SignatureKind::micro_doppler;
  if (s == "micro_omega") return SignatureKind::micro_omega;
  throw std::invalid_argument("unknown signature kind: " + s);
}

std::vector<double> RangeProfileCube::range_axis() const {
  std::vector<double> axis(static_cast<std::size_t>(n_range_bins()));
  for (int b = 0; b < n_range_bins(); ++b) axis[static_cast<std::size_t>(b)] = b * bin_spacing_m();
  return axis;
}

Eigen::MatrixXcf RangeProfileCube::channel_series(int range_bin) const {
  const int nv = config.n_virtual();
  using Strided = Eigen::Map<const Eigen::MatrixXcf, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  return Strided(bins.data() + range_bin, nv, n_chirps(),
                 Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(bins.rows() * nv, bins.rows()));
}

RangeProfileCube range_fft(const sim::IqCube& cube) {
  cube.validate();
  const int ns = cube.config.samples_per_chirp;
  RangeProfileCube out;
  out.config = cube.config;
  out.metadata = cube.metadata;
  out.bins.resize(ns, cube.samples.cols());
  const Eigen::VectorXcf w = make_window<float>(WindowFunction::hann, ns).cast<std::complex<float>>();
  Fft<float> fft;
  Eigen::VectorXcf frame(ns);
  for (Eigen::Index c = 0; c < cube.samples.cols(); ++c) {
    frame = cube.samples.col(c).cwiseProduct(w);
    out.bins.col(c) = fft.forward(frame);
  }
  return out;
}

double aoa_from_phase(double delta_eps_rad, const RadarConfig& config) {
  const double arg = delta_eps_rad / (2.0 * kPi * config.rx_spacing_wavelengths);
  if (!(std::abs(arg) <= 1.0)) {
    throw std::domain_error("aoa_from_phase: |lambda*delta_eps/(2 pi d_R)| = " + std::to_string(std::abs(arg)) +
                            " exceeds 1");
  }
  return std::asin(arg);
}

double angular_resolution(int n_virtual) {
  if (n_virtual < 2) throw std::invalid_argument("angular_resolution: n_virtual must be >= 2");
  return 1.78 / n_virtual;
}

RangeAoAMap range_aoa_map(const RangeProfileCube& profiles, Eigen::Index chirp_index, int min_fft) {
  if (chirp_index < 0 || chirp_index >= profiles.n_chirps()) {
    throw std::invalid_argument("range_aoa_map: chirp_index out of range");
  }
  const int nv = profiles.config.n_virtual();
  int n_fft = 1;
  while (n_fft < std::max(nv, min_fft)) n_fft *= 2;
  const double d = profiles.config.rx_spacing_wavelengths;

  std::vector<int> rows;
  RangeAoAMap map;
  for (int r = 0; r < n_fft; ++r) {
    const double s = shifted_bin(r, n_fft) / (n_fft * d);
    if (std::abs(s) < 1.0) {
      rows.push_back(r);
      map.angle_axis.push_back(std::asin(s));
    }
  }
  map.timestamp_s = static_cast<double>(chirp_index) * profiles.config.chirp_duration_s;
  map.power.resize(profiles.n_range_bins(), static_cast<Eigen::Index>(rows.size()));

  Fft<float> fft;
  Eigen::VectorXcf padded(n_fft);
  const auto block = profiles.bins.middleCols(chirp_index * nv, nv);
  for (int b = 0; b < profiles.n_range_bins(); ++b) {
    padded.setZero();
    padded.head(nv) = block.row(b).transpose();
    Eigen::VectorXcf spec = fft.forward(padded);
    fftshift_inplace(spec);
    for (std::size_t k = 0; k < rows.size(); ++k) map.power(b, static_cast<Eigen::Index>(k)) = std::norm(spec(rows[k]));
  }
  return map;
}

std::vector<int> gate_range_bins(const RangeProfileCube& profiles, double threshold_db) {
  if (!(threshold_db > 0.0)) throw std::invalid_argument("gate_range_bins: threshold_db must be > 0");
  const Eigen::VectorXd mean_power =
      profiles.bins.cwiseAbs2().cast<double>().rowwise().mean();
  std::vector<double> values(mean_power.data(), mean_power.data() + mean_power.size());
  const double threshold = median_of(values) * std::pow(10.0, threshold_db / 10.0);
  std::vector<int> out;
  for (int b = 0; b < profiles.n_range_bins(); ++b) {
    if (mean_power(b) >= threshold && mean_power(b) > 0.0) out.push_back(b);
  }
  if (out.empty()) {
    Eigen::Index best = 0;
    mean_power.maxCoeff(&best);
    out.push_back(static_cast<int>(best));
  }
  return out;
}

std::vector<double> stft_time_axis(Eigen::Index n_chirps, const StftConfig& cfg, const RadarConfig& radar) {
  validate_stft(cfg, n_chirps);
  const Eigen::Index n_cols = (n_chirps - cfg.window_len) / cfg.hop + 1;
  std::vector<double> t(static_cast<std::size_t>(n_cols));
  for (Eigen::Index c = 0; c < n_cols; ++c) {
    t[static_cast<std::size_t>(c)] =
        (static_cast<double>(c) * cfg.hop + cfg.window_len / 2.0) * radar.chirp_duration_s;
  }
  return t;
}

SignaturePair micro_signatures(const RangeProfileCube& profiles, const std::vector<int>& gated_bins,
                               const StftConfig& stft_cfg, const OmegaConfig& omega_cfg) {
  return signatures_impl(profiles, gated_bins, stft_cfg, omega_cfg, true);
}

Spectrogram micro_doppler_spectrogram(const RangeProfileCube& profiles, const std::vector<int>& gated_bins,
                                      const StftConfig& stft_cfg) {
  return signatures_impl(profiles, gated_bins, stft_cfg, {}, false).micro_doppler;
}

Spectrogram micro_omega_spectrogram(const RangeProfileCube& profiles, const std::vector<int>& gated_bins,
                                    const StftConfig& stft_cfg, const OmegaConfig& omega_cfg) {
  return signatures_impl(profiles, gated_bins, stft_cfg, omega_cfg, true).micro_omega;
}

SignaturePair process_cube(const sim::IqCube& cube, const SignatureConfig& cfg) {
  const RangeProfileCube profiles = range_fft(cube);
  const auto gated = gate_range_bins(profiles, cfg.gate_threshold_db);
  return micro_signatures(profiles, gated, cfg.stft, cfg.omega);
}

Spectrogram crop_time(const Spectrogram& spec, double start_s, double end_s) {
  Spectrogram out = spec;
  out.duration_s = 0.0;
  std::vector<Eigen::Index> keep;
  for (std::size_t c = 0; c < spec.time_axis_s.size(); ++c) {
    if (spec.time_axis_s[c] >= start_s && spec.time_axis_s[c] < end_s) keep.push_back(static_cast<Eigen::Index>(c));
  }
  out.time_axis_s.clear();
  if (keep.empty()) {
    out.power.resize(spec.n_bins(), 0);
    return out;
  }
  out.power = spec.power.middleCols(keep.front(), static_cast<Eigen::Index>(keep.size()));
  for (auto c : keep) out.time_axis_s.push_back(spec.time_axis_s[static_cast<std::size_t>(c)]);
  return out;
}

SpectrogramImage to_grayscale_image(const Spectrogram& spec, const ImageOptions& opts) {
  if (!(opts.db_range > 0.0)) throw std::invalid_argument("to_grayscale_image: db_range must be > 0");
  if (opts.rows < 1 || opts.cols < 1) throw std::invalid_argument("to_grayscale_image: output size must be positive");
  std::vector<Eigen::Index> rows;
  for (std::size_t r = 0; r < spec.value_axis.size(); ++r) {
    if (spec.value_axis[r] >= opts.value_min && spec.value_axis[r] <= opts.value_max) {
      rows.push_back(static_cast<Eigen::Index>(r));
    }
  }
  if (spec.power.size() == 0 || rows.empty()) throw std::invalid_argument("to_grayscale_image: empty spectrogram");

  // Source in display orientation: row 0 = most positive value.
  const auto src_rows = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index src_cols = spec.n_cols();
  Eigen::MatrixXd db(src_rows, src_cols);
  for (Eigen::Index i = 0; i < src_rows; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(src_rows - 1 - i)];
    for (Eigen::Index c = 0; c < src_cols; ++c) {
      db(i, c) = 10.0 * std::log10(std::max(static_cast<double>(spec.power(r, c)), 1e-300));
    }
  }
  const double ceiling = db.maxCoeff();
  const double floor = ceiling - opts.db_range;
  const Eigen::MatrixXd level = ((db.array() - floor) / opts.db_range).cwiseMax(0.0).cwiseMin(1.0) * 255.0;

  SpectrogramImage img;
  img.db_ceiling = ceiling;
  img.db_floor = floor;
  img.source = spec.record_id;
  img.pixels.resize(opts.rows, opts.cols);
  const double sy = static_cast<double>(src_rows) / opts.rows;
  const double sx = static_cast<double>(src_cols) / opts.cols;
  for (int y = 0; y < opts.rows; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_rows - 1));
    const auto y0 = static_cast<Eigen::Index>(std::floor(fy));
    const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, src_rows - 1);
    const double wy = fy - y0;
    for (int x = 0; x < opts.cols; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_cols - 1));
      const auto x0 = static_cast<Eigen::Index>(std::floor(fx));
      const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, src_cols - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * level(y0, x0) + wx * level(y0, x1)) +
                       wy * ((1 - wx) * level(y1, x0) + wx * level(y1, x1));
      img.pixels(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

void write_spectrogram(const std::filesystem::path& base, const Spectrogram& spec) {
  // C-order [value_bin, time_col].
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = spec.power;
  io::write_f32(std::filesystem::path(base.string() + ".f32"),
                std::span<const float>(rm.data(), static_cast<std::size_t>(rm.size())));
  io::json j{{"schema_version", io::kSchemaVersion},
             {"format", "float32 little-endian, C-order [value_bin, time_col]"},
             {"shape", {spec.n_bins(), spec.n_cols()}},
             {"kind", to_string(spec.kind)},
             {"value_unit", spec.kind == SignatureKind::micro_doppler ? "m/s" : "rad/s"},
             {"time_axis_s", spec.time_axis_s},
             {"value_axis", spec.value_axis},
             {"stft",
              {{"window_len", spec.stft.window_len}, {"hop", spec.stft.hop}, {"window", to_string(spec.stft.window)}}},
             {"record_id", spec.record_id},
             {"duration_s", spec.duration_s}};
  io::write_json(std::filesystem::path(base.string() + ".meta.json"), j);
}

Spectrogram read_spectrogram(const std::filesystem::path& base) {
  const auto j = io::read_json(std::filesystem::path(base.string() + ".meta.json"));
  Spectrogram s;
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  s.kind = signature_kind_from_string(j.at("kind").get<std::string>());
  s.time_axis_s = j.at("time_axis_s").get<std::vector<double>>();
  s.value_axis = j.at("value_axis").get<std::vector<double>>();
  s.stft.window_len = j.at("stft").at("window_len").get<int>();
  s.stft.hop = j.at("stft").at("hop").get<int>();
  s.stft.window = window_from_string(j.at("stft").at("window").get<std::string>());
  s.record_id = j.value("record_id", std::string{});
  s.duration_s = j.value("duration_s", 0.0);
  const auto values = io::read_f32(std::filesystem::path(base.string() + ".f32"));
  if (shape.size() != 2 || values.size() != static_cast<std::size_t>(shape[0] * shape[1]) ||
      static_cast<Eigen::Index>(s.value_axis.size()) != shape[0] ||
      static_cast<Eigen::Index>(s.time_axis_s.size()) != shape[1]) {
    throw std::invalid_argument("spectrogram sidecar inconsistent with payload: " + base.string());
  }
  s.power = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), shape[0], shape[1]);
  return s;
}

void write_pgm(const std::filesystem::path& path, const SpectrogramImage& image) {
  std::ostringstream ss;
  ss << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  ss.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  io::write_text(path, ss.str());
}

SpectrogramImage read_pgm(const std::filesystem::path& path) {
  const std::string bytes = io::read_text(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") throw std::invalid_argument("not a binary PGM: " + path.string());
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255) throw std::invalid_argument("only 8-bit PGM supported: " + path.string());
  ++pos;  // single whitespace before raster
  if (bytes.size() < pos + static_cast<std::size_t>(w) * h) throw std::invalid_argument("truncated PGM: " + path.string());
  SpectrogramImage img;
  img.pixels.resize(h, w);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
            bytes.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(w) * h), img.pixels.data());
  return img;
}

void write_png(const std::filesystem::path& path, const SpectrogramImage& image) {
  auto be32 = [](std::string& s, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xFF));
  };
  auto chunk = [&](std::string& out, const char* type, const std::string& data) {
    be32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    be32(out, static_cast<std::uint32_t>(
                  crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  };

  std::string raw;
  raw.reserve(static_cast<std::size_t>(image.rows()) * (image.cols() + 1));
  for (int y = 0; y < image.rows(); ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(image.pixels.row(y).data()), static_cast<std::size_t>(image.cols()));
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_len, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw std::runtime_error("zlib compression failed for " + path.string());
  }
  packed.resize(packed_len);

  std::string ihdr;
  be32(ihdr, static_cast<std::uint32_t>(image.cols()));
  be32(ihdr, static_cast<std::uint32_t>(image.rows()));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit grayscale, deflate, no filter, no interlace

  std::string out("\x89PNG\r\n\x1a\n", 8);
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", "");
  io::write_text(path, out);
}

}  // namespace microsig::dsp
