#include <doctest.h>

#include "microsig/slicing.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace microsig;
using namespace microsig::slicing;

namespace {

constexpr double kDt = 0.0128;

/// Empty (floor-level) spectrogram pair covering length_s.
LabeledPair blank_pair(double length_s, int bins = 65) {
  LabeledPair p;
  auto& d = p.signatures.micro_doppler;
  const auto n = static_cast<Eigen::Index>(std::floor(length_s / kDt + 1e-9));
  d.kind = dsp::SignatureKind::micro_doppler;
  d.power = Eigen::MatrixXf::Constant(bins, n, 1e-6f);
  for (int r = 0; r < bins; ++r) d.value_axis.push_back((r - bins / 2) * 0.1);
  for (Eigen::Index c = 0; c < n; ++c) d.time_axis_s.push_back((static_cast<double>(c) + 0.5) * kDt);
  d.duration_s = length_s;
  d.record_id = "rec";
  p.signatures.micro_omega = d;
  p.signatures.micro_omega.kind = dsp::SignatureKind::micro_omega;
  p.metadata.record_id = "rec";
  p.metadata.label = "walking";
  return p;
}

void put_ridge(LabeledPair& p, Eigen::Index col, double v, float power = 1.0f) {
  auto& d = p.signatures.micro_doppler;
  const auto& ax = d.value_axis;
  const auto r = std::min_element(ax.begin(), ax.end(), [&](double a, double b) { return std::abs(a - v) < std::abs(b - v); }) - ax.begin();
  d.power(r, col) += power;
  p.signatures.micro_omega.power(r, col) += power;
}

/// CoG = sin(pi t) (zero crossing every 1 s) with silence in 2k +- 0.2 s.
LabeledPair sine_fixture(double length_s = 30.0) {
  auto p = blank_pair(length_s);
  for (Eigen::Index c = 0; c < p.signatures.micro_doppler.n_cols(); ++c) {
    const double t = p.signatures.micro_doppler.time_axis_s[static_cast<std::size_t>(c)];
    const double to_even = std::abs(t - 2.0 * std::round(t / 2.0));
    if (to_even < 0.2) continue;
    put_ridge(p, c, 1.5 * std::sin(std::numbers::pi * t));
  }
  return p;
}

}  // namespace

TEST_CASE("fixed and sliding counts on a 30 s record") {
  const auto p = blank_pair(30.0);
  const auto fixed = slice_fixed(p);
  CHECK(fixed.size() == 20);
  const auto sliding = slice_sliding(p);
  CHECK(sliding.size() == 96);
  CHECK(sliding[1].start_s == doctest::Approx(0.3));
  for (const auto& s : fixed) CHECK(s.end_s - s.start_s == doctest::Approx(1.5));
  CHECK(fixed.back().end_s == doctest::Approx(30.0));
}

TEST_CASE("sliding with zero overlap equals fixed") {
  const auto p = sine_fixture(9.7);
  const auto a = slice_fixed(p, 1.5);
  const auto b = slice_sliding(p, 1.5, 0.0);
  REQUIRE(a.size() == 6);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].start_s == b[i].start_s);
    CHECK(a[i].end_s == b[i].end_s);
    CHECK(a[i].mu_d_image.pixels == b[i].mu_d_image.pixels);
  }
}

TEST_CASE("short records") {
  CHECK(slice_fixed(blank_pair(1.5)).size() == 1);
  CHECK(slice_sliding(blank_pair(1.5)).size() == 1);
  CHECK_THROWS_AS(slice_fixed(blank_pair(1.4)), std::invalid_argument);
  CHECK_THROWS_AS(slice_sliding(blank_pair(1.4)), std::invalid_argument);
  CHECK_THROWS_AS(slice_sliding(blank_pair(3.0), 1.5, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(slice_sliding(blank_pair(3.0), 1.5, -0.1), std::invalid_argument);
}

TEST_CASE("sliding count formula") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> len(1.0, 60.0), win(0.2, 3.0), ov(0.0, 0.95);
  for (int i = 0; i < 2000; ++i) {
    const double l = len(rng), w = win(rng), o = ov(rng);
    const double hop = w * (1.0 - o);
    const std::size_t expect = l < w ? 0 : static_cast<std::size_t>(std::floor((l - w) / hop + 1e-9)) + 1;
    CHECK(sliding_count(l, w, o) == expect);
  }
  CHECK(sliding_count(30.0, 1.5, 0.8) == 96);
}

TEST_CASE("cog of a single ridge") {
  auto p = blank_pair(2.0);
  for (Eigen::Index c = 0; c < p.signatures.micro_doppler.n_cols(); ++c) put_ridge(p, c, 1.0);
  const auto tr = doppler_cog(p.signatures.micro_doppler);
  REQUIRE(tr.size() == static_cast<std::size_t>(p.signatures.micro_doppler.n_cols()));
  for (std::size_t t = 0; t < tr.size(); ++t) {
    CHECK(tr.cog[t] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(tr.lower[t] <= tr.cog[t]);
    CHECK(tr.upper[t] >= tr.cog[t]);
  }
  CHECK_THROWS_AS(doppler_cog(p.signatures.micro_omega), std::invalid_argument);
}

TEST_CASE("cog of symmetric ridges is zero") {
  auto p = blank_pair(2.0);
  for (Eigen::Index c = 0; c < p.signatures.micro_doppler.n_cols(); ++c) {
    put_ridge(p, c, 1.2);
    put_ridge(p, c, -1.2);
  }
  const auto tr = doppler_cog(p.signatures.micro_doppler);
  for (std::size_t t = 0; t < tr.size(); ++t) {
    CHECK(std::abs(tr.cog[t]) < 1e-9);
    CHECK(tr.upper[t] == doctest::Approx(1.2));
    CHECK(tr.lower[t] == doctest::Approx(-1.2));
  }
}

TEST_CASE("cog of noise is silent") {
  auto p = blank_pair(3.0);
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> e(1.0);
  auto& d = p.signatures.micro_doppler;
  for (Eigen::Index i = 0; i < d.power.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < 16; ++k) s += e(rng);  // multichannel average
    d.power.data()[i] = static_cast<float>(s / 16);
  }
  const auto tr = doppler_cog(d);
  for (std::size_t t = 0; t < tr.size(); ++t) {
    CHECK(tr.cog[t] == 0.0);
    CHECK(tr.silent(t));
    CHECK(tr.power[t] == 0.0);
  }
}

TEST_CASE("adaptive boundaries recover silence gaps and reversals") {
  const auto p = sine_fixture();
  const auto& d = p.signatures.micro_doppler;
  const auto tr = doppler_cog(d);
  AdaptiveConfig cfg{1.0, 0.8, 3.0};
  const auto bounds = adaptive_boundaries(tr, d.time_step(), cfg);
  // Column edge k sits at time k * dt; truth every 1 s plus the record edges.
  std::vector<double> truth{0.0};
  for (int s = 1; s < 30; ++s) truth.push_back(s);
  truth.push_back(static_cast<double>(d.n_cols()) * kDt);
  REQUIRE(bounds.size() == truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(std::abs(static_cast<double>(bounds[i]) - truth[i] / kDt) <= 2.0);
  }
  const auto slices = slice_adaptive(p, cfg);
  CHECK(slices.size() == 30);
}

TEST_CASE("constant motion yields no adaptive slices") {
  auto p = blank_pair(30.0);
  for (Eigen::Index c = 0; c < p.signatures.micro_doppler.n_cols(); ++c) put_ridge(p, c, 0.8);
  CHECK(slice_adaptive(p, AdaptiveConfig{}).empty());
}

TEST_CASE("sit and stand sequence separates at reversals") {
  // Sitting: moving away (+), standing: approaching (-); 1.8 s each with 0.4 s pauses.
  auto p = blank_pair(30.0);
  const auto& t = p.signatures.micro_doppler.time_axis_s;
  double start = 0.3;
  bool sit = true;
  while (start + 1.8 < 30.0) {
    p.metadata.segments.push_back({sit ? "sitting" : "standing_from_sitting", start, start + 1.8});
    start += 1.8 + 0.4;
    sit = !sit;
  }
  for (std::size_t c = 0; c < t.size(); ++c) {
    for (const auto& seg : p.metadata.segments) {
      if (t[c] < seg.start_s || t[c] >= seg.end_s) continue;
      const double u = (t[c] - seg.start_s) / 1.8;
      const double speed = 1.2 * std::sin(std::numbers::pi * u) + 0.1;
      put_ridge(p, static_cast<Eigen::Index>(c), seg.label == "sitting" ? speed : -speed);
    }
  }
  const auto slices = slice_adaptive(p, AdaptiveConfig{0.3, 0.8, 3.0});
  int captured = 0;
  for (const auto& seg : p.metadata.segments) {
    for (const auto& s : slices) {
      const double ov = std::min(s.end_s, seg.end_s) - std::max(s.start_s, seg.start_s);
      if (ov >= 0.9 * 1.8 && s.label == seg.label) {
        ++captured;
        break;
      }
    }
  }
  CHECK(captured >= 0.9 * static_cast<double>(p.metadata.segments.size()));
  for (std::size_t i = 1; i < slices.size(); ++i) CHECK(slices[i].label != slices[i - 1].label);
}

TEST_CASE("adaptive slicing is idempotent") {
  const auto p = sine_fixture();
  const AdaptiveConfig cfg{1.0, 0.8, 3.0};
  const auto slices = slice_adaptive(p, cfg);
  REQUIRE_FALSE(slices.empty());
  for (const auto& s : slices) {
    LabeledPair sub;
    sub.metadata = p.metadata;
    sub.signatures.micro_doppler = dsp::crop_time(p.signatures.micro_doppler, s.start_s, s.end_s);
    sub.signatures.micro_omega = dsp::crop_time(p.signatures.micro_omega, s.start_s, s.end_s);
    const auto again = slice_adaptive(sub, cfg);
    REQUIRE(again.size() == 1);
    CHECK(again[0].start_s == doctest::Approx(s.start_s).epsilon(1e-12));
    CHECK(again[0].end_s == doctest::Approx(s.end_s).epsilon(1e-12));
    CHECK(again[0].mu_d_image.pixels == s.mu_d_image.pixels);
  }
}

TEST_CASE("slice invariants") {
  const auto p = sine_fixture(12.0);
  const AdaptiveConfig cfg{1.0, 0.8, 3.0};
  for (auto tech : {Technique::fixed, Technique::sliding, Technique::adaptive}) {
    SlicingConfig sc;
    sc.adaptive = cfg;
    for (const auto& s : slice(p, tech, sc)) {
      CHECK(s.end_s > s.start_s);
      CHECK(s.start_s >= -1e-9);
      CHECK(s.end_s <= 12.0 + 1e-9);
      CHECK(s.mu_d_image.source == s.mu_omega_image.source);
      CHECK(s.mu_d_image.rows() == 128);
      CHECK(s.mu_omega_image.cols() == 256);
      CHECK(s.technique == tech);
      if (tech == Technique::adaptive) {
        CHECK(s.end_s - s.start_s >= cfg.min_duration_s - 1e-9);
        CHECK(s.end_s - s.start_s <= cfg.max_duration_s + 1e-9);
      }
    }
  }
}

TEST_CASE("labels come from the largest overlapping segment") {
  sim::RecordMetadata m;
  m.label = "sit_stand";
  m.segments = {{"sitting", 1.0, 3.0}, {"standing_from_sitting", 3.5, 5.0}};
  CHECK(label_for_interval(m, 0.5, 3.2) == "sitting");
  CHECK(label_for_interval(m, 2.5, 5.0) == "standing_from_sitting");
  CHECK(label_for_interval(m, 6.0, 7.0) == "sit_stand");
}

TEST_CASE("manifest round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "microsig_test_slicing";
  std::filesystem::remove_all(dir);
  const auto slices = slice_fixed(sine_fixture(4.5), 1.5);
  Manifest m;
  m.technique = "fixed";
  for (std::size_t i = 0; i < slices.size(); ++i) m.entries.push_back(write_slice(dir, "s" + std::to_string(i), slices[i]));
  write_manifest(dir, m);
  const auto back = load_slices(dir);
  REQUIRE(back.size() == slices.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].mu_d_image.pixels == slices[i].mu_d_image.pixels);
    CHECK(back[i].mu_omega_image.pixels == slices[i].mu_omega_image.pixels);
    CHECK(back[i].label == slices[i].label);
    CHECK(back[i].start_s == slices[i].start_s);
    CHECK(back[i].technique == Technique::fixed);
    CHECK(back[i].mu_d_image.db_ceiling == doctest::Approx(slices[i].mu_d_image.db_ceiling));
  }
  CHECK(std::filesystem::exists(dir / "s0_mud.png"));
  std::filesystem::remove_all(dir);
}
