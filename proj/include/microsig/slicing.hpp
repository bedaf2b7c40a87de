#pragma once

// Cutting 30 s signature pairs into single-occurrence samples: fixed windows,
// overlapping windows, and CoG/power driven adaptive boundaries.

#include "microsig/dsp.hpp"
#include "microsig/sim.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace microsig::slicing {

enum class Technique { fixed, sliding, adaptive };

std::string to_string(Technique t);
Technique technique_from_string(const std::string& s);

/// Signatures of one record together with its ground truth.
struct LabeledPair {
  dsp::SignaturePair signatures;
  sim::RecordMetadata metadata;
};

struct SliceSample {
  dsp::SpectrogramImage mu_d_image;
  dsp::SpectrogramImage mu_omega_image;
  std::string label;
  std::string source_record_id;
  double start_s = 0.0;
  double end_s = 0.0;
  Technique technique = Technique::fixed;
};

struct CoGConfig {
  double floor_db = 12.0;      // above the column median
  int smoothing_cols = 5;
  double zero_guard_mps = 0.0; // |v| below this is ignored (static returns)
  bool operator==(const CoGConfig&) const = default;
};

/// Per-column Doppler centre of gravity. Envelopes are NaN for silent columns.
struct CoGTrack {
  std::vector<double> cog;
  std::vector<double> power;
  std::vector<double> upper;
  std::vector<double> lower;

  std::size_t size() const { return cog.size(); }
  bool silent(std::size_t t) const;
};

CoGTrack doppler_cog(const dsp::Spectrogram& spec, const CoGConfig& cfg = {});

struct AdaptiveConfig {
  double expected_cycle_rate_hz = 0.35;
  double min_duration_s = 0.8;
  double max_duration_s = 3.0;
  bool operator==(const AdaptiveConfig&) const = default;
};

struct SlicingConfig {
  double window_s = 1.5;
  double overlap = 0.8;
  AdaptiveConfig adaptive;                              // default for unlisted activities
  std::map<std::string, AdaptiveConfig> per_activity;   // keyed by record label
  CoGConfig cog;
  dsp::ImageOptions image;

  const AdaptiveConfig& adaptive_for(const std::string& activity) const;
  bool operator==(const SlicingConfig&) const = default;
};

/// Interior and edge boundaries (column-edge indices 0..n) after merging.
std::vector<Eigen::Index> adaptive_boundaries(const CoGTrack& track, double col_step_s,
                                              const AdaptiveConfig& cfg);

std::vector<SliceSample> slice_fixed(const LabeledPair& pair, double window_s = 1.5,
                                     const dsp::ImageOptions& image = {});
std::vector<SliceSample> slice_sliding(const LabeledPair& pair, double window_s = 1.5, double overlap = 0.8,
                                       const dsp::ImageOptions& image = {});
std::vector<SliceSample> slice_adaptive(const LabeledPair& pair, const AdaptiveConfig& cfg,
                                        const CoGConfig& cog = {}, const dsp::ImageOptions& image = {});

/// Dispatch on technique using the settings in cfg.
std::vector<SliceSample> slice(const LabeledPair& pair, Technique technique, const SlicingConfig& cfg);

/// Number of sliding windows: floor((L - w) / hop) + 1.
std::size_t sliding_count(double length_s, double window_s, double overlap);

/// Label with the largest overlap among ground-truth segments, else the record label.
std::string label_for_interval(const sim::RecordMetadata& meta, double start_s, double end_s);

/// Writes <dir>/<stem>_mud.{pgm,png}, <dir>/<stem>_muw.{pgm,png}; returns manifest entries
/// with paths relative to the manifest directory.
struct ManifestEntry {
  std::string id;
  std::string label;
  std::string technique;
  std::string source_record_id;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string mu_d_pgm;
  std::string mu_omega_pgm;
  std::string mu_d_png;
  std::string mu_omega_png;
  double mu_d_db_ceiling = 0.0;
  double mu_omega_db_ceiling = 0.0;
  double db_range = 0.0;
};

struct Manifest {
  std::string technique;
  std::vector<ManifestEntry> entries;
};

ManifestEntry write_slice(const std::filesystem::path& dir, const std::string& stem, const SliceSample& s,
                          bool png = true);
void write_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& dir);

/// Loads every slice referenced by the manifest in <dir>.
std::vector<SliceSample> load_slices(const std::filesystem::path& dir);

}  // namespace microsig::slicing
