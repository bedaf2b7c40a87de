#include "microsig/eval.hpp"
#include "microsig/io.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

using namespace microsig;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("microsig_eval_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Populates a run directory with metrics and checkpoint headers for a technique grid.
void fake_run(const fs::path& root, const std::vector<std::string>& techniques) {
  const eval::RunLayout run{root};
  io::write_json(run.config(), {{"schema_version", 1},
                                {"seed", 3},
                                {"slicing", {{"techniques", techniques}}},
                                {"training", {{"constellations", {"mu_d"}}}}});
  double acc = 0.5;
  for (const auto& t : techniques) {
    const auto e = eval::RunLayout::experiment(t, "mu_d");
    const auto cm = eval::confusion({"a", "b", "b", "b"}, {"a", "a", "b", "b"}, {"a", "b"});
    auto m = eval::make_metrics(cm, t, "mu_d");
    m.accuracy = acc;
    acc += 0.1;
    io::write_json(run.metrics(e), eval::to_json(m));
    io::write_json(fs::path(run.checkpoint(e).string() + ".json"), {{"loss_curve", {0.2, 0.1}}});
  }
}

}  // namespace

TEST_CASE("confusion matrix examples") {
  const std::vector<std::string> labels{"a", "b", "c"};
  const auto perfect = eval::confusion({"a", "b", "c", "a"}, {"a", "b", "c", "a"}, labels);
  CHECK(perfect.counts.isDiagonal());
  CHECK(perfect.counts(0, 0) == 2);
  CHECK(eval::accuracy(perfect) == 1.0);

  const auto one_off = eval::confusion({"b", "b", "c"}, {"a", "b", "c"}, labels);
  CHECK(one_off.counts(0, 1) == 1);
  CHECK(one_off.counts.sum() - one_off.counts.trace() == 1);
  CHECK(eval::per_class_accuracy(one_off).at("a") == 0.0);
  CHECK(eval::per_class_accuracy(one_off).at("b") == 1.0);

  const auto uniform = eval::confusion({"a", "b", "a", "b"}, {"a", "a", "b", "b"}, {"a", "b"});
  CHECK(eval::accuracy(uniform) == 0.5);
}

TEST_CASE("confusion errors") {
  CHECK_THROWS_AS(eval::confusion({"a"}, {"a", "b"}, {"a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(eval::confusion({"z"}, {"a"}, {"a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(eval::accuracy(eval::confusion({}, {}, {"a"})), std::invalid_argument);
}

TEST_CASE("row sums and accuracy are preserved under label permutation") {
  std::mt19937_64 rng(1);
  const std::vector<std::string> labels{"p", "q", "r", "s"};
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> pred, truth;
    for (int i = 0; i < 50; ++i) {
      pred.push_back(labels[pick(rng)]);
      truth.push_back(labels[pick(rng)]);
    }
    const auto cm = eval::confusion(pred, truth, labels);
    std::vector<int> perm(4);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto rename = [&](std::vector<std::string> v) {  // labels[k] -> labels[perm[k]]
      for (auto& s : v) s = labels[perm[std::find(labels.begin(), labels.end(), s) - labels.begin()]];
      return v;
    };
    const auto pm = eval::confusion(rename(pred), rename(truth), labels);
    for (int k = 0; k < 4; ++k) CHECK(pm.row_sums()(perm[k]) == cm.row_sums()(k));
    CHECK(eval::accuracy(pm) == eval::accuracy(cm));
    const double a = eval::accuracy(cm);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(cm.row_sums().sum() == 50);
  }
}

TEST_CASE("metrics JSON round-trip") {
  const auto cm = eval::confusion({"a", "b"}, {"a", "a"}, {"a", "b"});
  const auto m = eval::make_metrics(cm, "adaptive", "combined");
  const auto j = eval::to_json(m);
  CHECK(j.at("accuracy") == 0.5);
  CHECK(j.at("technique") == "adaptive");
  CHECK(j.at("constellation") == "combined");
  CHECK(j.contains("per_class"));
  const auto back = eval::metrics_from_json(j);
  CHECK(back.confusion == cm);
  CHECK(back.per_class == m.per_class);
}

TEST_CASE("PCA axes are orthonormal and projection contracts distances") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(64, 120);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng) * (1.0 + (i % 64) * 0.1);
  const auto p = eval::fit_pca(x, 2);
  const Eigen::MatrixXd gram = p.axes.transpose() * p.axes;
  CHECK((gram - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(p.variances(0) >= p.variances(1));

  const auto full = eval::fit_pca(x, 64);
  CHECK((full.axes.transpose() * full.axes - Eigen::MatrixXd::Identity(64, 64)).cwiseAbs().maxCoeff() < 1e-8);

  const Eigen::MatrixXd y = p.project(x);
  for (int i = 0; i < 40; ++i) {
    for (int j = i + 1; j < 40; ++j) CHECK((y.col(i) - y.col(j)).norm() <= (x.col(i) - x.col(j)).norm() + 1e-8);
  }
  Eigen::MatrixXd same(64, 3);
  same.col(0) = same.col(1) = x.col(5);
  same.col(2) = x.col(6);
  const Eigen::MatrixXd ys = p.project(same);
  CHECK(ys.col(0) == ys.col(1));
}

TEST_CASE("PCA recovers the dominant direction") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(3, 500);
  for (Eigen::Index j = 0; j < x.cols(); ++j) x.col(j) << 10 * g(rng), g(rng), 0.1 * g(rng);
  const auto p = eval::fit_pca(x, 2);
  CHECK(std::abs(p.axes(0, 0)) > 0.99);
  CHECK(std::abs(p.axes(1, 1)) > 0.99);
}

TEST_CASE("embedding export writes RFC-4180 CSV files") {
  const auto dir = scratch("csv");
  Eigen::MatrixXf e(3, 4);
  e << 1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0;
  eval::export_embeddings(dir / "emb", e, {"a", "b,c", "say \"hi\"", "a"});
  const auto raw = io::read_text(dir / "emb.csv");
  CHECK(raw.rfind("label,e0,e1,e2\r\n", 0) == 0);
  CHECK(raw.find("\"b,c\",") != std::string::npos);
  CHECK(raw.find("\"say \"\"hi\"\"\",") != std::string::npos);
  const auto pca = io::read_text(dir / "emb_pca.csv");
  CHECK(pca.rfind("label,pc1,pc2\r\n", 0) == 0);
  CHECK(std::count(pca.begin(), pca.end(), '\n') == 5);
  CHECK_THROWS_AS(eval::export_embeddings(dir / "x", Eigen::MatrixXf(3, 0), {}), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("trained toy embeddings separate classes in the PCA plane") {
  // 3 classes, 32x32 images with a bright band whose row encodes the class.
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> noise(0, 40);
  std::vector<slicing::SliceSample> data;
  for (int i = 0; i < 36; ++i) {
    slicing::SliceSample s;
    const int k = i % 3;
    s.label = std::string(1, static_cast<char>('a' + k));
    s.mu_d_image.pixels.resize(32, 32);
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        s.mu_d_image.pixels(r, c) = static_cast<std::uint8_t>((r / 4 == 1 + 3 * k ? 200 : 0) + noise(rng));
      }
    }
    data.push_back(s);
  }
  nn::Architecture a;
  a.input_rows = a.input_cols = 32;
  a.conv_channels = {4, 8, 8};
  a.dense_units = {32, 16};
  a.dropout_rate = 0.1;
  metric::Hyperparams hp;
  hp.constellation = metric::Constellation::micro_doppler;
  hp.classes_per_batch = 3;
  hp.epochs = 30;
  hp.steps_per_epoch = 3;
  hp.learning_rate = 3e-3;
  const auto r = metric::train(metric::Model(a, 3), data, hp);
  const Eigen::MatrixXd e = metric::embed_all(r.model, data, hp.constellation).cast<double>();
  const auto y = eval::fit_pca(e, 2).project(e);
  std::vector<Eigen::Vector2d> centre(3, Eigen::Vector2d::Zero());
  for (Eigen::Index j = 0; j < y.cols(); ++j) centre[j % 3] += y.col(j) / 12.0;
  double spread = 0.0;
  for (Eigen::Index j = 0; j < y.cols(); ++j) spread += (y.col(j) - centre[j % 3]).norm() / 36.0;
  const double between = ((centre[0] - centre[1]).norm() + (centre[0] - centre[2]).norm() +
                          (centre[1] - centre[2]).norm()) / 3.0;
  CHECK(between > spread);
}

TEST_CASE("report lists every missing artifact of an empty run") {
  const auto dir = scratch("empty");
  try {
    eval::report(dir);
    FAIL("expected MissingArtifacts");
  } catch (const eval::MissingArtifacts& e) {
    CHECK(e.missing().size() == 3);
    CHECK(std::string(e.what()).find("config.json") != std::string::npos);
    CHECK(std::string(e.what()).find("metrics.json") != std::string::npos);
  }
  fake_run(dir, {"fixed", "sliding", "adaptive"});
  fs::remove(eval::RunLayout{dir}.metrics("sliding_mu_d"));
  try {
    eval::report(dir);
    FAIL("expected MissingArtifacts");
  } catch (const eval::MissingArtifacts& e) {
    REQUIRE(e.missing().size() == 1);
    CHECK(e.missing()[0] == eval::RunLayout{dir}.metrics("sliding_mu_d"));
  }
  fs::remove_all(dir);
}

TEST_CASE("report has a three-column technique table and is deterministic") {
  const auto a = scratch("run_a"), b = scratch("run_b");
  fake_run(a, {"fixed", "sliding", "adaptive"});
  fake_run(b, {"fixed", "sliding", "adaptive"});
  const auto ra = eval::report(a);
  CHECK(ra.find("| constellation | fixed | sliding | adaptive |") != std::string::npos);
  CHECK(ra.find("| mu_d | 50.00 % | 60.00 % | 70.00 % |") != std::string::npos);
  CHECK(ra.find("Confusion matrix") != std::string::npos);
  CHECK(ra.find("| 2 | 0.10000 |") != std::string::npos);
  CHECK(ra == eval::report(b));
  fs::remove_all(a);
  fs::remove_all(b);
}
