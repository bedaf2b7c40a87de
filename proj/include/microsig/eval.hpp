#pragma once

// Confusion matrices, accuracies, embedding exports with a PCA projection,
// and the markdown run report.

#include "microsig/metric.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace microsig::eval {

/// Rows = truth, columns = prediction.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXi counts;

  long total() const { return counts.sum(); }
  Eigen::VectorXi row_sums() const { return counts.rowwise().sum(); }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws std::invalid_argument on length mismatch or a label outside `labels`.
ConfusionMatrix confusion(const std::vector<std::string>& predictions, const std::vector<std::string>& truths,
                          const std::vector<std::string>& labels);

/// trace / total; throws on an empty matrix.
double accuracy(const ConfusionMatrix& cm);
/// diagonal / row sum; classes without test samples are omitted.
std::map<std::string, double> per_class_accuracy(const ConfusionMatrix& cm);

nlohmann::json to_json(const ConfusionMatrix& cm);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);

struct Metrics {
  double accuracy = 0.0;
  std::map<std::string, double> per_class;
  std::string technique;
  std::string constellation;
  ConfusionMatrix confusion;
};

Metrics make_metrics(const ConfusionMatrix& cm, const std::string& technique, const std::string& constellation);
nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

/// Classifies every sample and tabulates against its label.
ConfusionMatrix evaluate(const metric::Model& model, const metric::CentroidClassifier& classifier,
                         const std::vector<slicing::SliceSample>& samples, metric::Constellation c);

/// Exact PCA of embedding columns via the symmetric eigendecomposition of their covariance.
struct Pca {
  Eigen::VectorXd mean;
  Eigen::MatrixXd axes;         // dim x k, orthonormal columns, by decreasing variance
  Eigen::VectorXd variances;    // k

  Eigen::MatrixXd project(const Eigen::MatrixXd& x) const;  // k x N
};

Pca fit_pca(const Eigen::MatrixXd& x, int components = 2);

/// <out>.csv (label, e0..e63) and <out>_pca.csv (label, pc1, pc2).
void export_embeddings(const std::filesystem::path& out, const Eigen::MatrixXf& embeddings,
                       const std::vector<std::string>& labels);
void export_embeddings(const std::filesystem::path& out, const metric::Model& model,
                       const std::vector<slicing::SliceSample>& samples, metric::Constellation c);

/// Quote a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

/// Raised when a run directory lacks artifacts; what() lists every missing path.
class MissingArtifacts : public std::runtime_error {
 public:
  explicit MissingArtifacts(std::vector<std::filesystem::path> missing);
  const std::vector<std::filesystem::path>& missing() const { return missing_; }

 private:
  std::vector<std::filesystem::path> missing_;
};

/// Fixed run-directory layout shared by the pipeline commands and the report.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path iq_dir() const { return root / "iq"; }
  std::filesystem::path spectrogram_dir() const { return root / "spectrograms"; }
  std::filesystem::path slice_dir(const std::string& technique, const std::string& split) const {
    return root / "slices" / technique / split;
  }
  static std::string experiment(const std::string& technique, const std::string& constellation) {
    return technique + "_" + constellation;
  }
  std::filesystem::path model_dir(const std::string& experiment) const { return root / "models" / experiment; }
  std::filesystem::path checkpoint(const std::string& experiment) const { return model_dir(experiment) / "model"; }
  std::filesystem::path classifier(const std::string& experiment) const {
    return model_dir(experiment) / "classifier.json";
  }
  std::filesystem::path eval_dir(const std::string& experiment) const { return root / "eval" / experiment; }
  std::filesystem::path metrics(const std::string& experiment) const { return eval_dir(experiment) / "metrics.json"; }
  std::filesystem::path fewshot_dir() const { return root / "fewshot"; }
  std::filesystem::path report() const { return root / "report.md"; }
};

/// Markdown summary of a finished run: accuracy table (technique x constellation),
/// confusion matrices, loss curves, few-shot results, config echo.
std::string report(const std::filesystem::path& run_dir);

}  // namespace microsig::eval
