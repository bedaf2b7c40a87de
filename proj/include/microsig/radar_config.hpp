#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace microsig {

inline constexpr double kSpeedOfLight = 299'792'458.0;

/// FMCW MIMO transmission parameters. Defaults are the 77 GHz, 2x16 module
/// parametrisation; snr_db = +inf disables the noise model.
struct RadarConfig {
  double carrier_frequency_hz = 77e9;
  double bandwidth_hz = 0.25e9;
  double chirp_duration_s = 80e-6;
  int samples_per_chirp = 112;
  int chirps_per_frame = 512;
  int n_tx = 2;
  int n_rx = 16;
  double rx_spacing_wavelengths = 0.5;
  double snr_db = 20.0;

  double wavelength_m() const { return kSpeedOfLight / carrier_frequency_hz; }
  int n_virtual() const { return n_tx * n_rx; }
  double sample_period_s() const { return chirp_duration_s / samples_per_chirp; }
  double sample_rate_hz() const { return samples_per_chirp / chirp_duration_s; }
  double range_resolution_m() const { return kSpeedOfLight / (2.0 * bandwidth_hz); }
  /// f_s * c * T_c / (4B): half the complex beat-frequency span.
  double max_range_m() const { return sample_rate_hz() * kSpeedOfLight * chirp_duration_s / (4.0 * bandwidth_hz); }
  double velocity_resolution_mps() const { return wavelength_m() / (2.0 * chirps_per_frame * chirp_duration_s); }
  double max_velocity_mps() const { return wavelength_m() / (4.0 * chirp_duration_s); }
  double angular_resolution_rad() const { return 1.78 / n_virtual(); }
  bool noise_enabled() const { return std::isfinite(snr_db); }

  void validate() const {
    if (!(carrier_frequency_hz > 0.0)) throw std::invalid_argument("radar: carrier_frequency_hz must be > 0");
    if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("radar: bandwidth_hz must be > 0");
    if (!(chirp_duration_s > 0.0)) throw std::invalid_argument("radar: chirp_duration_s must be > 0");
    if (samples_per_chirp < 2) throw std::invalid_argument("radar: samples_per_chirp must be >= 2");
    if (chirps_per_frame < 2) throw std::invalid_argument("radar: chirps_per_frame must be >= 2");
    if (n_tx < 1 || n_rx < 1) throw std::invalid_argument("radar: antenna counts must be >= 1");
    if (!(rx_spacing_wavelengths > 0.0)) throw std::invalid_argument("radar: rx_spacing_wavelengths must be > 0");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("radar: snr_db must be finite or +inf");
    }
  }

  bool operator==(const RadarConfig&) const = default;
};

inline constexpr double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }
inline constexpr double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace microsig
