#pragma once

// Triplet metric learning on signature images: batch-hard mining, balanced
// P x K batches, Adam training, nearest-centroid inference and class addition.

#include "microsig/nn/embedding_net.hpp"
#include "microsig/slicing.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace microsig::metric {

using nn::Mat;
using nn::Vec;
using Model = nn::EmbeddingNet<float>;

enum class Constellation { micro_doppler, micro_omega, combined };

std::string to_string(Constellation c);
Constellation constellation_from_string(const std::string& s);
int input_channels(Constellation c);

/// Network input for one slice: channels x (128*256), pixels scaled to [0, 1].
/// Combined stacks micro-Doppler then micro-omega.
Mat<float> to_input(const slicing::SliceSample& s, Constellation c);

/// Raised when the training loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double triplet_loss(double d_ap, double d_an, double margin) { return std::max(d_ap - d_an + margin, 0.0); }

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
  double d_ap = 0.0;
  double d_an = 0.0;
  bool operator==(const Triplet&) const = default;
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  double margin = 0.2;

  double mean_loss() const {
    if (triplets.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : triplets) s += triplet_loss(t.d_ap, t.d_an, margin);
    return s / static_cast<double>(triplets.size());
  }
};

/// Pairwise Euclidean distances between embedding columns.
template <typename Scalar>
Mat<double> pairwise_distances(const Mat<Scalar>& emb) {
  const Eigen::Index n = emb.cols();
  Mat<double> d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = (emb.col(i) - emb.col(j)).template cast<double>().norm();
    }
  }
  return d;
}

/// Hardest positive (max distance) and hardest negative (min distance) per anchor;
/// anchors without a positive are skipped; ties go to the lowest index.
template <typename Scalar>
TripletBatch batch_hard_mine(const Mat<Scalar>& emb, const std::vector<int>& labels, double margin = 0.2) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (emb.cols() != n) throw std::invalid_argument("batch_hard_mine: embedding/label count mismatch");
  bool two_classes = false;
  for (Eigen::Index i = 1; i < n && !two_classes; ++i) two_classes = labels[static_cast<std::size_t>(i)] != labels[0];
  if (!two_classes) throw std::invalid_argument("batch_hard_mine: batch needs at least two classes");
  const Mat<double> d = pairwise_distances(emb);
  TripletBatch out;
  out.margin = margin;
  for (Eigen::Index a = 0; a < n; ++a) {
    int pos = -1, neg = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
        if (pos < 0 || d(a, j) > d(a, pos)) pos = static_cast<int>(j);
      } else if (neg < 0 || d(a, j) < d(a, neg)) {
        neg = static_cast<int>(j);
      }
    }
    if (pos < 0) continue;
    out.triplets.push_back({static_cast<int>(a), pos, neg, d(a, pos), d(a, neg)});
  }
  return out;
}

/// Mean batch-hard triplet loss and its gradient with respect to the embeddings.
template <typename Scalar>
double batch_hard_loss(const Mat<Scalar>& emb, const std::vector<int>& labels, double margin, Mat<Scalar>* grad,
                       TripletBatch* mined = nullptr) {
  TripletBatch tb = batch_hard_mine(emb, labels, margin);
  const double loss = tb.mean_loss();
  if (grad != nullptr) {
    grad->setZero(emb.rows(), emb.cols());
    const double scale = tb.triplets.empty() ? 0.0 : 1.0 / static_cast<double>(tb.triplets.size());
    for (const auto& t : tb.triplets) {
      if (triplet_loss(t.d_ap, t.d_an, margin) <= 0.0) continue;
      if (t.d_ap > 0.0) {
        const Vec<Scalar> u = (emb.col(t.anchor) - emb.col(t.positive)) / static_cast<Scalar>(t.d_ap);
        grad->col(t.anchor) += static_cast<Scalar>(scale) * u;
        grad->col(t.positive) -= static_cast<Scalar>(scale) * u;
      }
      if (t.d_an > 0.0) {
        const Vec<Scalar> u = (emb.col(t.anchor) - emb.col(t.negative)) / static_cast<Scalar>(t.d_an);
        grad->col(t.anchor) -= static_cast<Scalar>(scale) * u;
        grad->col(t.negative) += static_cast<Scalar>(scale) * u;
      }
    }
  }
  if (mined != nullptr) *mined = std::move(tb);
  return loss;
}

/// Endless stream of P x K index batches. Classes and per-class samples are
/// drawn from reshuffled queues, so an epoch of ceil(N / PK) batches visits
/// each sample about once; classes smaller than K repeat samples.
class BalancedBatchSampler {
 public:
  BalancedBatchSampler(const std::vector<int>& labels, int classes_per_batch, int samples_per_class, std::uint64_t seed);

  std::vector<int> next();
  int batch_size() const { return p_ * k_; }
  std::size_t batches_per_epoch() const;

 private:
  std::vector<int> take(std::size_t cls);

  int p_;
  int k_;
  std::size_t n_samples_;
  std::mt19937_64 rng_;
  std::vector<std::vector<int>> members_;
  std::vector<std::vector<int>> queues_;
  std::vector<std::size_t> class_queue_;
};

struct Hyperparams {
  double margin = 0.2;
  double learning_rate = 1e-3;
  int epochs = 10;
  int steps_per_epoch = 0;  // 0: ceil(N / (P*K))
  int classes_per_batch = 8;
  int samples_per_class = 4;
  std::uint64_t seed = 1;
  Constellation constellation = Constellation::combined;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const Hyperparams&) const = default;
};

void to_json(nlohmann::json& j, const Hyperparams& h);
void from_json(const nlohmann::json& j, Hyperparams& h);

class Adam {
 public:
  Adam(const std::vector<Mat<float>>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  /// Updates params[i] for i >= first_param.
  void step(std::vector<Mat<float>>& params, const std::vector<Mat<float>>& grads, std::size_t first_param = 0);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Mat<float>> m_, v_;
};

struct TrainResult {
  Model model;
  std::vector<double> loss_curve;  // mean mined-triplet loss per epoch
};

using ProgressFn = std::function<void(int epoch, double loss)>;

/// Label strings -> dense indices in sorted label order.
std::vector<int> encode_labels(const std::vector<std::string>& labels, std::vector<std::string>* classes = nullptr);

/// Trains the full network on the slices. Throws DivergenceError on a non-finite loss.
TrainResult train(Model model, const std::vector<slicing::SliceSample>& data, const Hyperparams& hp,
                  const ProgressFn& progress = {});

/// Trains only the dense head on precomputed flattened conv features (flatten_size x N).
TrainResult train_dense_head(Model model, const Mat<float>& features, const std::vector<std::string>& labels,
                             const Hyperparams& hp, const ProgressFn& progress = {});

/// Embeddings for all slices (embedding_dim x N), computed in chunks.
Mat<float> embed_all(const Model& model, const std::vector<slicing::SliceSample>& data, Constellation c);
/// Flattened conv features for all slices.
Mat<float> features_all(const Model& model, const std::vector<slicing::SliceSample>& data, Constellation c);

class CentroidClassifier {
 public:
  CentroidClassifier() = default;
  CentroidClassifier(std::vector<std::string> labels, Mat<float> centroids);

  const std::vector<std::string>& labels() const { return labels_; }
  const Mat<float>& centroids() const { return centroids_; }
  std::size_t size() const { return labels_.size(); }
  bool has(const std::string& label) const;
  Vec<float> centroid(const std::string& label) const;

  /// Nearest centroid; ties go to the lexicographically smallest label.
  std::string classify(const Vec<float>& embedding) const;
  std::vector<std::string> classify_all(const Mat<float>& embeddings) const;

  /// Adds classes; throws on a label that is already enrolled.
  void enroll(const Mat<float>& embeddings, const std::vector<std::string>& labels);

 private:
  std::vector<std::string> labels_;  // sorted
  Mat<float> centroids_;             // embedding_dim x classes
};

/// Per-class mean embedding, re-normalised to unit length.
CentroidClassifier fit_centroids(const Mat<float>& embeddings, const std::vector<std::string>& labels);
CentroidClassifier fit_centroids(const Model& model, const std::vector<slicing::SliceSample>& data, Constellation c);

enum class FewShotMode { enroll_only, fine_tune };
std::string to_string(FewShotMode m);
FewShotMode few_shot_mode_from_string(const std::string& s);

struct FewShotConfig {
  FewShotMode mode = FewShotMode::fine_tune;
  Hyperparams hp{0.2, 1e-4, 0, 0, 8, 4, 1, Constellation::combined};  // hp.epochs is the fine-tune budget
  bool operator==(const FewShotConfig&) const = default;
};

struct FewShotResult {
  Model model;
  CentroidClassifier classifier;
  std::vector<double> loss_curve;
};

/// Adds the classes of new_samples. Fine-tuning freezes the conv stack, trains the
/// dense head on balanced batches over base_samples + new_samples, then refits
/// every centroid (base centroids from base_samples). A zero epoch budget is enroll-only.
FewShotResult few_shot_adapt(const Model& model, const CentroidClassifier& classifier,
                             const std::vector<slicing::SliceSample>& new_samples,
                             const std::vector<slicing::SliceSample>& base_samples, const FewShotConfig& cfg);

/// <base>.bin (little-endian float32 parameters, in layer order) + <base>.json header.
void save_checkpoint(const std::filesystem::path& base, const Model& model, const nlohmann::json& extra = {});
Model load_checkpoint(const std::filesystem::path& base, nlohmann::json* header = nullptr);

nlohmann::json classifier_to_json(const CentroidClassifier& c);
CentroidClassifier classifier_from_json(const nlohmann::json& j);

}  // namespace microsig::metric

namespace microsig::nn {
void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);
}  // namespace microsig::nn
