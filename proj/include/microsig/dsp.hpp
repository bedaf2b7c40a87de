#pragma once

// Range processing, angle estimation and the time-synchronised micro-Doppler /
// micro-angular-velocity spectrograms.

#include "microsig/fft.hpp"
#include "microsig/radar_config.hpp"
#include "microsig/sim.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace microsig::dsp {

/// Fast-time spectra. Same column layout as IqCube: column chirp * n_virtual + channel.
struct RangeProfileCube {
  Eigen::MatrixXcf bins;
  RadarConfig config;
  sim::RecordMetadata metadata;

  int n_range_bins() const { return static_cast<int>(bins.rows()); }
  Eigen::Index n_chirps() const { return bins.cols() / config.n_virtual(); }
  double bin_spacing_m() const { return config.range_resolution_m(); }
  std::vector<double> range_axis() const;

  /// n_virtual x n_chirps view of one range bin.
  Eigen::MatrixXcf channel_series(int range_bin) const;
};

struct RangeAoAMap {
  Eigen::MatrixXf power;          // n_range_bins x n_angle_bins
  std::vector<double> angle_axis; // rad, strictly increasing, |theta| < pi/2
  double timestamp_s = 0.0;
};

struct StftConfig {
  int window_len = 512;
  int hop = 128;
  WindowFunction window = WindowFunction::hann;
  bool operator==(const StftConfig&) const = default;
};

enum class SignatureKind { micro_doppler, micro_omega };

std::string to_string(SignatureKind k);
SignatureKind signature_kind_from_string(const std::string& s);

/// Time-frequency power. Row 0 is the most negative value-axis entry.
struct Spectrogram {
  Eigen::MatrixXf power;
  std::vector<double> time_axis_s;
  std::vector<double> value_axis;  // m/s (micro_doppler) or rad/s (micro_omega)
  SignatureKind kind = SignatureKind::micro_doppler;
  StftConfig stft;
  std::string record_id;
  double duration_s = 0.0;  // length of the source record; 0 when unknown

  Eigen::Index n_bins() const { return power.rows(); }
  Eigen::Index n_cols() const { return power.cols(); }
  double value_step() const { return value_axis.size() > 1 ? value_axis[1] - value_axis[0] : 0.0; }
  double time_step() const { return time_axis_s.size() > 1 ? time_axis_s[1] - time_axis_s[0] : 0.0; }
  /// duration_s, or the end of the last STFT window when that is unknown.
  double record_length_s() const;
};

/// Settings for the angular-velocity signature grid.
struct OmegaConfig {
  double omega_max_radps = 1.32;
  int n_bins = 128;
  int rate_lag_cols = 2;      // AoA rate uses columns t-lag and t+lag
  bool small_angle = false;   // take cos(theta) = 1
  // Cells whose channel-pair magnitude is below the column median + floor_db carry
  // phase noise only and are not deposited; 0 keeps every cell.
  double floor_db = 12.0;
  bool operator==(const OmegaConfig&) const = default;
};

struct SignatureConfig {
  StftConfig stft;
  OmegaConfig omega;
  double gate_threshold_db = 6.0;
  bool operator==(const SignatureConfig&) const = default;
};

struct SignaturePair {
  Spectrogram micro_doppler;
  Spectrogram micro_omega;
};

RangeProfileCube range_fft(const sim::IqCube& cube);

/// arcsin(lambda * delta_eps / (2 pi d_R)); throws std::domain_error outside [-1, 1].
double aoa_from_phase(double delta_eps_rad, const RadarConfig& config);

/// 1.78 / n_virtual radians.
double angular_resolution(int n_virtual);

RangeAoAMap range_aoa_map(const RangeProfileCube& profiles, Eigen::Index chirp_index, int min_fft = 64);

/// Range bins whose time-mean power is at least median + threshold_db; never empty.
std::vector<int> gate_range_bins(const RangeProfileCube& profiles, double threshold_db = 6.0);

/// STFT of a complex series. Result is window_len x n_columns with fftshifted rows;
/// column c covers samples [c*hop, c*hop + window_len).
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic> stft(
    const Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>& signal, int window_len, int hop,
    WindowFunction window) {
  using Complex = std::complex<Scalar>;
  if (hop <= 0) throw std::invalid_argument("stft: hop must be > 0");
  if (window_len <= 0) throw std::invalid_argument("stft: window_len must be > 0");
  if (window_len > signal.size()) throw std::invalid_argument("stft: window longer than signal");
  const Eigen::Index n_cols = (signal.size() - window_len) / hop + 1;
  const auto w = make_window<Scalar>(window, window_len);
  Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic> out(window_len, n_cols);
  Fft<Scalar> fft;
  Eigen::Matrix<Complex, Eigen::Dynamic, 1> frame(window_len);
  for (Eigen::Index c = 0; c < n_cols; ++c) {
    frame = signal.segment(c * hop, window_len).cwiseProduct(w.template cast<Complex>());
    auto spec = fft.forward(frame);
    fftshift_inplace(spec);
    out.col(c) = spec;
  }
  return out;
}

/// Column centre times shared by both signatures.
std::vector<double> stft_time_axis(Eigen::Index n_chirps, const StftConfig& cfg, const RadarConfig& radar);

/// Both signatures from one pass over the gated range bins.
SignaturePair micro_signatures(const RangeProfileCube& profiles, const std::vector<int>& gated_bins,
                               const StftConfig& stft_cfg, const OmegaConfig& omega_cfg = {});

Spectrogram micro_doppler_spectrogram(const RangeProfileCube& profiles, const std::vector<int>& gated_bins,
                                      const StftConfig& stft_cfg);

Spectrogram micro_omega_spectrogram(const RangeProfileCube& profiles, const std::vector<int>& gated_bins,
                                    const StftConfig& stft_cfg, const OmegaConfig& omega_cfg = {});

/// range_fft -> gate -> signatures; the usual per-record path.
SignaturePair process_cube(const sim::IqCube& cube, const SignatureConfig& cfg);

/// Columns whose centre time lies in [start_s, end_s).
Spectrogram crop_time(const Spectrogram& spec, double start_s, double end_s);

/// 8-bit grayscale rendering; row 0 = most positive value, 255 = db_ceiling.
struct SpectrogramImage {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pixels;
  double db_floor = 0.0;
  double db_ceiling = 0.0;
  std::string source;

  int rows() const { return static_cast<int>(pixels.rows()); }
  int cols() const { return static_cast<int>(pixels.cols()); }
};

struct ImageOptions {
  double db_range = 62.0;
  int rows = 128;
  int cols = 256;
  double value_min = -std::numeric_limits<double>::infinity();  // display crop
  double value_max = std::numeric_limits<double>::infinity();
  bool operator==(const ImageOptions&) const = default;
};

SpectrogramImage to_grayscale_image(const Spectrogram& spec, const ImageOptions& opts = {});

void write_spectrogram(const std::filesystem::path& base, const Spectrogram& spec);
Spectrogram read_spectrogram(const std::filesystem::path& base);

void write_pgm(const std::filesystem::path& path, const SpectrogramImage& image);
SpectrogramImage read_pgm(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const SpectrogramImage& image);

}  // namespace microsig::dsp
