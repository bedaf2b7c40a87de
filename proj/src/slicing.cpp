#include "microsig/slicing.hpp"

#include "microsig/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace microsig::slicing {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

dsp::Spectrogram crop_cols(const dsp::Spectrogram& s, Eigen::Index first, Eigen::Index count) {
  dsp::Spectrogram out;
  out.kind = s.kind;
  out.value_axis = s.value_axis;
  out.stft = s.stft;
  out.record_id = s.record_id;
  out.power = s.power.middleCols(first, count);
  out.time_axis_s.assign(s.time_axis_s.begin() + first, s.time_axis_s.begin() + first + count);
  return out;
}

std::string source_tag(const std::string& id, double a, double b) {
  std::ostringstream ss;
  ss.precision(6);
  ss << id << "@" << std::fixed << a << "-" << b;
  return ss.str();
}

SliceSample make_slice(const LabeledPair& pair, Eigen::Index first, Eigen::Index count, double start_s, double end_s,
                       Technique technique, const dsp::ImageOptions& image) {
  const auto& sig = pair.signatures;
  SliceSample s;
  s.mu_d_image = dsp::to_grayscale_image(crop_cols(sig.micro_doppler, first, count), image);
  s.mu_omega_image = dsp::to_grayscale_image(crop_cols(sig.micro_omega, first, count), image);
  s.label = label_for_interval(pair.metadata, start_s, end_s);
  s.source_record_id = pair.metadata.record_id.empty() ? sig.micro_doppler.record_id : pair.metadata.record_id;
  s.start_s = start_s;
  s.end_s = end_s;
  s.technique = technique;
  s.mu_d_image.source = source_tag(s.source_record_id, start_s, end_s);
  s.mu_omega_image.source = s.mu_d_image.source;
  return s;
}

void check_pair(const LabeledPair& pair) {
  const auto& a = pair.signatures.micro_doppler;
  const auto& b = pair.signatures.micro_omega;
  if (a.time_axis_s != b.time_axis_s || a.n_cols() != b.n_cols()) {
    throw std::invalid_argument("slicing: signature pair is not time-synchronised");
  }
  if (a.n_cols() == 0) throw std::invalid_argument("slicing: empty spectrogram");
}

/// Windows [k*hop, k*hop + window) over the record, cut by column centre time.
std::vector<SliceSample> window_slices(const LabeledPair& pair, double window_s, double hop_s, std::size_t count,
                                       Technique technique, const dsp::ImageOptions& image) {
  const auto& t = pair.signatures.micro_doppler.time_axis_s;
  std::vector<SliceSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double a = static_cast<double>(k) * hop_s;
    const double b = a + window_s;
    const auto first = std::lower_bound(t.begin(), t.end(), a) - t.begin();
    const auto last = std::lower_bound(t.begin(), t.end(), b) - t.begin();
    if (last <= first) continue;  // window finer than the column spacing
    out.push_back(make_slice(pair, first, last - first, a, b, technique, image));
  }
  return out;
}

void check_window(const LabeledPair& pair, double window_s) {
  check_pair(pair);
  if (!(window_s > 0.0)) throw std::invalid_argument("slicing: window_s must be > 0");
  const double length = pair.signatures.micro_doppler.record_length_s();
  if (length + 1e-9 < window_s) {
    throw std::invalid_argument("slicing: record of " + std::to_string(length) + " s is shorter than the " +
                                std::to_string(window_s) + " s window");
  }
}

}  // namespace

std::string to_string(Technique t) {
  switch (t) {
    case Technique::fixed: return "fixed";
    case Technique::sliding: return "sliding";
    case Technique::adaptive: return "adaptive";
  }
  return "fixed";
}

Technique technique_from_string(const std::string& s) {
  if (s == "fixed" || s == "discrete") return Technique::fixed;
  if (s == "sliding") return Technique::sliding;
  if (s == "adaptive") return Technique::adaptive;
  throw std::invalid_argument("unknown slicing technique: " + s);
}

bool CoGTrack::silent(std::size_t t) const { return std::isnan(upper[t]); }

const AdaptiveConfig& SlicingConfig::adaptive_for(const std::string& activity) const {
  const auto it = per_activity.find(activity);
  return it == per_activity.end() ? adaptive : it->second;
}

CoGTrack doppler_cog(const dsp::Spectrogram& spec, const CoGConfig& cfg) {
  if (spec.kind != dsp::SignatureKind::micro_doppler) throw std::invalid_argument("doppler_cog: needs a micro-Doppler spectrogram");
  if (cfg.smoothing_cols < 1) throw std::invalid_argument("doppler_cog: smoothing_cols must be >= 1");
  const auto n = static_cast<std::size_t>(spec.n_cols());
  const auto rows = spec.n_bins();
  const double floor_ratio = std::pow(10.0, cfg.floor_db / 10.0);

  std::vector<double> cog(n, 0.0), power(n, 0.0), upper(n, kNaN), lower(n, kNaN);
  std::vector<double> column(static_cast<std::size_t>(rows));
  for (std::size_t t = 0; t < n; ++t) {
    for (Eigen::Index r = 0; r < rows; ++r) column[static_cast<std::size_t>(r)] = spec.power(r, static_cast<Eigen::Index>(t));
    const double floor = median_of(column) * floor_ratio;
    double sum = 0.0, moment = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double p = column[static_cast<std::size_t>(r)];
      const double v = spec.value_axis[static_cast<std::size_t>(r)];
      if (!(p > floor) || std::abs(v) < cfg.zero_guard_mps) continue;
      sum += p;
      moment += p * v;
      upper[t] = std::isnan(upper[t]) ? v : std::max(upper[t], v);
      lower[t] = std::isnan(lower[t]) ? v : std::min(lower[t], v);
    }
    power[t] = sum;
    if (sum > 0.0) cog[t] = moment / sum;
  }

  CoGTrack out;
  out.cog.assign(n, 0.0);
  out.power.assign(n, 0.0);
  out.upper.assign(n, kNaN);
  out.lower.assign(n, kNaN);
  const auto half = static_cast<std::ptrdiff_t>(cfg.smoothing_cols / 2);
  for (std::size_t t = 0; t < n; ++t) {
    const std::ptrdiff_t a = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t) - half);
    const std::ptrdiff_t b = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(t) + half);
    double c = 0.0, p = 0.0, up = 0.0, lo = 0.0;
    int active = 0;
    for (std::ptrdiff_t k = a; k <= b; ++k) {
      const auto u = static_cast<std::size_t>(k);
      c += cog[u];
      p += power[u];
      if (!std::isnan(upper[u])) {
        up += upper[u];
        lo += lower[u];
        ++active;
      }
    }
    const double width = static_cast<double>(b - a + 1);
    out.power[t] = p / width;
    if (std::isnan(upper[t])) continue;  // silent column: cog 0, no envelope
    out.cog[t] = c / width;
    out.upper[t] = std::max(up / active, out.cog[t]);
    out.lower[t] = std::min(lo / active, out.cog[t]);
  }
  return out;
}

std::vector<Eigen::Index> adaptive_boundaries(const CoGTrack& track, double col_step_s, const AdaptiveConfig& cfg) {
  if (!(cfg.expected_cycle_rate_hz > 0.0)) throw std::invalid_argument("adaptive: expected_cycle_rate_hz must be > 0");
  if (!(col_step_s > 0.0)) throw std::invalid_argument("adaptive: column step must be > 0");
  const auto n = static_cast<Eigen::Index>(track.size());
  struct Candidate {
    Eigen::Index at;
    double power;
    bool edge;
  };
  constexpr double kEdge = -std::numeric_limits<double>::infinity();
  std::vector<Candidate> cand{{0, kEdge, true}, {n, kEdge, true}};
  auto power_at = [&](Eigen::Index c) { return track.power[static_cast<std::size_t>(std::clamp<Eigen::Index>(c, 0, n - 1))]; };

  // (a) centres of silent runs; runs touching the record edges belong to the edge.
  const double silence = median_of(track.power) / 4.0;
  for (Eigen::Index t = 0; t < n;) {
    if (!(track.power[static_cast<std::size_t>(t)] < silence)) {
      ++t;
      continue;
    }
    Eigen::Index end = t;
    while (end + 1 < n && track.power[static_cast<std::size_t>(end + 1)] < silence) ++end;
    if (t > 0 && end < n - 1) {
      const Eigen::Index mid = (t + end + 1) / 2;
      cand.push_back({mid, power_at((t + end) / 2), false});
    }
    t = end + 1;
  }
  // (b) direction reversals of the centre of gravity.
  Eigen::Index prev = -1;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double c = track.cog[static_cast<std::size_t>(t)];
    if (c == 0.0) continue;
    if (prev >= 0 && (c > 0.0) != (track.cog[static_cast<std::size_t>(prev)] > 0.0)) {
      const Eigen::Index at = (prev + 1 + t) / 2;
      cand.push_back({at, power_at(at), false});
    }
    prev = t;
  }

  std::stable_sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) { return a.at < b.at; });
  const double min_gap = 0.5 / cfg.expected_cycle_rate_hz / col_step_s;
  std::vector<Candidate> kept;
  for (const auto& c : cand) {
    if (kept.empty()) {
      kept.push_back(c);
      continue;
    }
    auto& last = kept.back();
    const bool close = static_cast<double>(c.at - last.at) < min_gap;
    if (!close || (c.edge && last.edge)) {
      if (c.at != last.at) kept.push_back(c);
      continue;
    }
    // Keep the quieter boundary; edges always win.
    if (c.edge || (!last.edge && c.power < last.power)) last = c;
  }
  std::vector<Eigen::Index> out;
  for (const auto& k : kept) out.push_back(k.at);
  return out;
}

std::size_t sliding_count(double length_s, double window_s, double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("sliding: overlap must be in [0, 1)");
  if (!(window_s > 0.0)) throw std::invalid_argument("sliding: window_s must be > 0");
  if (length_s + 1e-9 < window_s) return 0;
  const double hop = window_s * (1.0 - overlap);
  return static_cast<std::size_t>(std::floor((length_s - window_s) / hop + 1e-9)) + 1;
}

std::string label_for_interval(const sim::RecordMetadata& meta, double start_s, double end_s) {
  std::string best = meta.label;
  double best_overlap = 0.0;
  for (const auto& seg : meta.segments) {
    const double ov = std::min(end_s, seg.end_s) - std::max(start_s, seg.start_s);
    if (ov > best_overlap) {
      best_overlap = ov;
      best = seg.label;
    }
  }
  return best;
}

std::vector<SliceSample> slice_fixed(const LabeledPair& pair, double window_s, const dsp::ImageOptions& image) {
  check_window(pair, window_s);
  const double length = pair.signatures.micro_doppler.record_length_s();
  const auto count = static_cast<std::size_t>(std::floor(length / window_s + 1e-9));
  return window_slices(pair, window_s, window_s, count, Technique::fixed, image);
}

std::vector<SliceSample> slice_sliding(const LabeledPair& pair, double window_s, double overlap,
                                       const dsp::ImageOptions& image) {
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("sliding: overlap must be in [0, 1)");
  check_window(pair, window_s);
  const double length = pair.signatures.micro_doppler.record_length_s();
  return window_slices(pair, window_s, window_s * (1.0 - overlap), sliding_count(length, window_s, overlap),
                       Technique::sliding, image);
}

std::vector<SliceSample> slice_adaptive(const LabeledPair& pair, const AdaptiveConfig& cfg, const CoGConfig& cog,
                                        const dsp::ImageOptions& image) {
  check_pair(pair);
  if (!(cfg.min_duration_s > 0.0 && cfg.max_duration_s >= cfg.min_duration_s)) {
    throw std::invalid_argument("adaptive: bad duration bounds");
  }
  const auto& spec = pair.signatures.micro_doppler;
  if (spec.n_cols() < 2) return {};
  const double step = spec.time_step();
  const auto track = doppler_cog(spec, cog);
  const auto bounds = adaptive_boundaries(track, step, cfg);
  const double origin = spec.time_axis_s.front() - step / 2.0;
  std::vector<SliceSample> out;
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    const double a = origin + static_cast<double>(bounds[i]) * step;
    const double b = origin + static_cast<double>(bounds[i + 1]) * step;
    const double d = b - a;
    if (d < cfg.min_duration_s - 1e-9 || d > cfg.max_duration_s + 1e-9) continue;
    out.push_back(make_slice(pair, bounds[i], bounds[i + 1] - bounds[i], a, b, Technique::adaptive, image));
  }
  return out;
}

std::vector<SliceSample> slice(const LabeledPair& pair, Technique technique, const SlicingConfig& cfg) {
  switch (technique) {
    case Technique::fixed: return slice_fixed(pair, cfg.window_s, cfg.image);
    case Technique::sliding: return slice_sliding(pair, cfg.window_s, cfg.overlap, cfg.image);
    case Technique::adaptive:
      return slice_adaptive(pair, cfg.adaptive_for(pair.metadata.label), cfg.cog, cfg.image);
  }
  return {};
}

ManifestEntry write_slice(const std::filesystem::path& dir, const std::string& stem, const SliceSample& s, bool png) {
  ManifestEntry e;
  e.id = stem;
  e.label = s.label;
  e.technique = to_string(s.technique);
  e.source_record_id = s.source_record_id;
  e.start_s = s.start_s;
  e.end_s = s.end_s;
  e.mu_d_pgm = stem + "_mud.pgm";
  e.mu_omega_pgm = stem + "_muw.pgm";
  dsp::write_pgm(dir / e.mu_d_pgm, s.mu_d_image);
  dsp::write_pgm(dir / e.mu_omega_pgm, s.mu_omega_image);
  if (png) {
    e.mu_d_png = stem + "_mud.png";
    e.mu_omega_png = stem + "_muw.png";
    dsp::write_png(dir / e.mu_d_png, s.mu_d_image);
    dsp::write_png(dir / e.mu_omega_png, s.mu_omega_image);
  }
  e.mu_d_db_ceiling = s.mu_d_image.db_ceiling;
  e.mu_omega_db_ceiling = s.mu_omega_image.db_ceiling;
  e.db_range = s.mu_d_image.db_ceiling - s.mu_d_image.db_floor;
  return e;
}

void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  io::json entries = io::json::array();
  for (const auto& e : m.entries) {
    io::json j{{"id", e.id},
               {"label", e.label},
               {"technique", e.technique},
               {"source_record_id", e.source_record_id},
               {"start_s", e.start_s},
               {"end_s", e.end_s},
               {"mu_d_pgm", e.mu_d_pgm},
               {"mu_omega_pgm", e.mu_omega_pgm},
               {"mu_d_db_ceiling", e.mu_d_db_ceiling},
               {"mu_omega_db_ceiling", e.mu_omega_db_ceiling},
               {"db_range", e.db_range}};
    if (!e.mu_d_png.empty()) {
      j["mu_d_png"] = e.mu_d_png;
      j["mu_omega_png"] = e.mu_omega_png;
    }
    entries.push_back(std::move(j));
  }
  io::write_json(dir / "manifest.json",
                 {{"schema_version", io::kSchemaVersion}, {"technique", m.technique}, {"entries", std::move(entries)}});
}

Manifest read_manifest(const std::filesystem::path& dir) {
  const auto j = io::read_json(dir / "manifest.json");
  Manifest m;
  m.technique = j.at("technique").get<std::string>();
  for (const auto& e : j.at("entries")) {
    ManifestEntry x;
    x.id = e.at("id").get<std::string>();
    x.label = e.at("label").get<std::string>();
    x.technique = e.value("technique", m.technique);
    x.source_record_id = e.value("source_record_id", std::string{});
    x.start_s = e.at("start_s").get<double>();
    x.end_s = e.at("end_s").get<double>();
    x.mu_d_pgm = e.at("mu_d_pgm").get<std::string>();
    x.mu_omega_pgm = e.at("mu_omega_pgm").get<std::string>();
    x.mu_d_png = e.value("mu_d_png", std::string{});
    x.mu_omega_png = e.value("mu_omega_png", std::string{});
    x.mu_d_db_ceiling = e.value("mu_d_db_ceiling", 0.0);
    x.mu_omega_db_ceiling = e.value("mu_omega_db_ceiling", 0.0);
    x.db_range = e.value("db_range", 0.0);
    m.entries.push_back(std::move(x));
  }
  return m;
}

std::vector<SliceSample> load_slices(const std::filesystem::path& dir) {
  const auto m = read_manifest(dir);
  std::vector<SliceSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    SliceSample s;
    s.mu_d_image = dsp::read_pgm(dir / e.mu_d_pgm);
    s.mu_omega_image = dsp::read_pgm(dir / e.mu_omega_pgm);
    s.mu_d_image.db_ceiling = e.mu_d_db_ceiling;
    s.mu_d_image.db_floor = e.mu_d_db_ceiling - e.db_range;
    s.mu_omega_image.db_ceiling = e.mu_omega_db_ceiling;
    s.mu_omega_image.db_floor = e.mu_omega_db_ceiling - e.db_range;
    s.mu_d_image.source = s.mu_omega_image.source = source_tag(e.source_record_id, e.start_s, e.end_s);
    s.label = e.label;
    s.source_record_id = e.source_record_id;
    s.start_s = e.start_s;
    s.end_s = e.end_s;
    s.technique = technique_from_string(e.technique);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace microsig::slicing
