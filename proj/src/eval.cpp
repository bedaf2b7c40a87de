#include "microsig/eval.hpp"

#include "microsig/io.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace microsig::eval {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pct(double v) { return fixed(100.0 * v, 2) + " %"; }

std::string missing_message(const std::vector<fs::path>& missing) {
  std::string msg = "run directory is missing " + std::to_string(missing.size()) + " artifact(s):";
  for (const auto& p : missing) msg += "\n  " + p.string();
  return msg;
}

void markdown_confusion(std::ostringstream& out, const ConfusionMatrix& cm) {
  out << "| truth \\ predicted |";
  for (const auto& l : cm.labels) out << ' ' << l << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < cm.labels.size(); ++i) out << "---:|";
  out << '\n';
  for (std::size_t r = 0; r < cm.labels.size(); ++r) {
    out << "| " << cm.labels[r] << " |";
    for (std::size_t c = 0; c < cm.labels.size(); ++c) {
      out << ' ' << cm.counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) << " |";
    }
    out << '\n';
  }
}

}  // namespace

ConfusionMatrix confusion(const std::vector<std::string>& predictions, const std::vector<std::string>& truths,
                          const std::vector<std::string>& labels) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(truths.size()) + " truths");
  }
  std::map<std::string, Eigen::Index> index;
  for (const auto& l : labels) {
    if (!index.emplace(l, static_cast<Eigen::Index>(index.size())).second) {
      throw std::invalid_argument("confusion: duplicate label " + l);
    }
  }
  auto at = [&](const std::string& l) {
    const auto it = index.find(l);
    if (it == index.end()) throw std::invalid_argument("confusion: unknown label " + l);
    return it->second;
  };
  ConfusionMatrix cm{labels, Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(labels.size()),
                                                    static_cast<Eigen::Index>(labels.size()))};
  for (std::size_t i = 0; i < truths.size(); ++i) ++cm.counts(at(truths[i]), at(predictions[i]));
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const long total = cm.total();
  if (total <= 0) throw std::invalid_argument("accuracy: empty confusion matrix");
  return static_cast<double>(cm.counts.trace()) / static_cast<double>(total);
}

std::map<std::string, double> per_class_accuracy(const ConfusionMatrix& cm) {
  std::map<std::string, double> out;
  const Eigen::VectorXi rows = cm.row_sums();
  for (Eigen::Index i = 0; i < rows.size(); ++i) {
    if (rows(i) > 0) out[cm.labels[static_cast<std::size_t>(i)]] = static_cast<double>(cm.counts(i, i)) / rows(i);
  }
  return out;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < cm.counts.cols(); ++c) row.push_back(cm.counts(r, c));
    rows.push_back(row);
  }
  return {{"labels", cm.labels}, {"counts", rows}};
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  ConfusionMatrix cm;
  cm.labels = j.at("labels").get<std::vector<std::string>>();
  const auto n = static_cast<Eigen::Index>(cm.labels.size());
  cm.counts.resize(n, n);
  const auto& rows = j.at("counts");
  if (static_cast<Eigen::Index>(rows.size()) != n) throw std::invalid_argument("confusion: row count mismatch");
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != n) throw std::invalid_argument("confusion: column count mismatch");
    for (Eigen::Index c = 0; c < n; ++c) cm.counts(r, c) = rows[r][c].get<int>();
  }
  return cm;
}

Metrics make_metrics(const ConfusionMatrix& cm, const std::string& technique, const std::string& constellation) {
  return {accuracy(cm), per_class_accuracy(cm), technique, constellation, cm};
}

nlohmann::json to_json(const Metrics& m) {
  return {{"schema_version", io::kSchemaVersion},
          {"accuracy", m.accuracy},
          {"per_class", m.per_class},
          {"technique", m.technique},
          {"constellation", m.constellation},
          {"confusion", to_json(m.confusion)}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.accuracy = j.at("accuracy").get<double>();
  m.per_class = j.at("per_class").get<std::map<std::string, double>>();
  m.technique = j.at("technique").get<std::string>();
  m.constellation = j.at("constellation").get<std::string>();
  m.confusion = confusion_from_json(j.at("confusion"));
  return m;
}

ConfusionMatrix evaluate(const metric::Model& model, const metric::CentroidClassifier& classifier,
                         const std::vector<slicing::SliceSample>& samples, metric::Constellation c) {
  if (samples.empty()) throw std::invalid_argument("evaluate: no test samples");
  const auto pred = classifier.classify_all(metric::embed_all(model, samples, c));
  std::vector<std::string> truth;
  std::set<std::string> labels(classifier.labels().begin(), classifier.labels().end());
  for (const auto& s : samples) {
    truth.push_back(s.label);
    labels.insert(s.label);  // test classes the classifier never saw still get a row
  }
  return confusion(pred, truth, {labels.begin(), labels.end()});
}

Eigen::MatrixXd Pca::project(const Eigen::MatrixXd& x) const {
  return axes.transpose() * (x.colwise() - mean);
}

Pca fit_pca(const Eigen::MatrixXd& x, int components) {
  if (x.cols() == 0) throw std::invalid_argument("fit_pca: no samples");
  if (components < 1 || components > x.rows()) throw std::invalid_argument("fit_pca: bad component count");
  Pca p;
  p.mean = x.rowwise().mean();
  const Eigen::MatrixXd centred = x.colwise() - p.mean;
  const Eigen::MatrixXd cov = centred * centred.transpose() / static_cast<double>(x.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::Index d = x.rows();
  p.axes.resize(d, components);
  p.variances.resize(components);
  for (int k = 0; k < components; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);
    // sign convention: largest-magnitude component positive
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    p.axes.col(k) = v;
    p.variances(k) = std::max(0.0, es.eigenvalues()(d - 1 - k));
  }
  return p;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

void export_embeddings(const fs::path& out, const Eigen::MatrixXf& embeddings, const std::vector<std::string>& labels) {
  if (embeddings.cols() == 0) throw std::invalid_argument("export_embeddings: empty manifest");
  if (embeddings.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("export_embeddings: embedding/label count mismatch");
  }
  std::ostringstream raw, pca;
  raw << "label";
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) raw << ",e" << i;
  raw << "\r\n";
  const Eigen::MatrixXd x = embeddings.cast<double>();
  const auto p = fit_pca(x, std::min<int>(2, static_cast<int>(x.rows())));
  const Eigen::MatrixXd proj = p.project(x);
  pca << "label";
  for (Eigen::Index k = 0; k < proj.rows(); ++k) pca << ",pc" << k + 1;
  pca << "\r\n";
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto& l = csv_field(labels[static_cast<std::size_t>(j)]);
    raw << l;
    for (Eigen::Index i = 0; i < x.rows(); ++i) raw << ',' << fixed(x(i, j), 7);
    raw << "\r\n";
    pca << l;
    for (Eigen::Index k = 0; k < proj.rows(); ++k) pca << ',' << fixed(proj(k, j), 7);
    pca << "\r\n";
  }
  io::write_text(fs::path(out.string() + ".csv"), raw.str());
  io::write_text(fs::path(out.string() + "_pca.csv"), pca.str());
}

void export_embeddings(const fs::path& out, const metric::Model& model, const std::vector<slicing::SliceSample>& samples,
                       metric::Constellation c) {
  if (samples.empty()) throw std::invalid_argument("export_embeddings: empty manifest");
  std::vector<std::string> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  export_embeddings(out, metric::embed_all(model, samples, c), labels);
}

MissingArtifacts::MissingArtifacts(std::vector<fs::path> missing)
    : std::runtime_error(missing_message(missing)), missing_(std::move(missing)) {}

std::string report(const fs::path& run_dir) {
  const RunLayout run{run_dir};
  std::vector<fs::path> missing;
  nlohmann::json config;
  if (fs::exists(run.config())) {
    config = io::read_json(run.config());
  } else {
    missing.push_back(run.config());
  }

  // Expected experiments come from the config grid; without a config, list the pattern.
  std::vector<std::string> experiments;
  std::vector<std::string> techniques, constellations;
  if (config.is_object()) {
    techniques = config.at("slicing").at("techniques").get<std::vector<std::string>>();
    constellations = config.at("training").at("constellations").get<std::vector<std::string>>();
    for (const auto& t : techniques) {
      for (const auto& c : constellations) experiments.push_back(RunLayout::experiment(t, c));
    }
  }
  if (experiments.empty()) {
    missing.push_back(run.metrics(RunLayout::experiment("<technique>", "<constellation>")));
    missing.push_back(fs::path(run.checkpoint(RunLayout::experiment("<technique>", "<constellation>")).string() + ".json"));
  }
  for (const auto& e : experiments) {
    if (!fs::exists(run.metrics(e))) missing.push_back(run.metrics(e));
    const fs::path header(run.checkpoint(e).string() + ".json");
    if (!fs::exists(header)) missing.push_back(header);
  }
  if (!missing.empty()) throw MissingArtifacts(std::move(missing));

  std::map<std::string, Metrics> metrics;
  for (const auto& e : experiments) metrics[e] = metrics_from_json(io::read_json(run.metrics(e)));

  std::ostringstream out;
  out << "# Run report\n\n";
  out << "## Test accuracy\n\n| constellation |";
  for (const auto& t : techniques) out << ' ' << t << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < techniques.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& c : constellations) {
    out << "| " << c << " |";
    for (const auto& t : techniques) out << ' ' << pct(metrics.at(RunLayout::experiment(t, c)).accuracy) << " |";
    out << '\n';
  }

  for (const auto& e : experiments) {
    const auto& m = metrics.at(e);
    out << "\n## " << e << "\n\n";
    out << "Accuracy " << pct(m.accuracy) << " on " << m.confusion.total() << " test slices.\n\n";
    out << "| class | accuracy |\n|---|---:|\n";
    for (const auto& [label, acc] : m.per_class) out << "| " << label << " | " << pct(acc) << " |\n";
    out << "\nConfusion matrix:\n\n";
    markdown_confusion(out, m.confusion);
    const auto header = io::read_json(fs::path(run.checkpoint(e).string() + ".json"));
    if (header.contains("loss_curve")) {
      out << "\nLoss per epoch:\n\n| epoch | loss |\n|---:|---:|\n";
      int epoch = 0;
      for (const auto& v : header.at("loss_curve")) out << "| " << ++epoch << " | " << fixed(v.get<double>(), 5) << " |\n";
    }
  }

  const fs::path fewshot = run.fewshot_dir() / "metrics.json";
  if (fs::exists(fewshot)) {
    const auto j = io::read_json(fewshot);
    const auto m = metrics_from_json(j);
    out << "\n## Few-shot class addition\n\n";
    if (j.contains("new_classes")) {
      out << "New classes:";
      for (const auto& l : j.at("new_classes")) out << ' ' << l.get<std::string>();
      out << "\n\n";
    }
    out << "Accuracy " << pct(m.accuracy) << " over " << m.confusion.labels.size() << " classes.\n\n";
    out << "| class | accuracy |\n|---|---:|\n";
    for (const auto& [label, acc] : m.per_class) out << "| " << label << " | " << pct(acc) << " |\n";
    out << "\nConfusion matrix:\n\n";
    markdown_confusion(out, m.confusion);
  }

  out << "\n## Configuration\n\n```json\n" << config.dump(2) << "\n```\n";
  return out.str();
}

}  // namespace microsig::eval
