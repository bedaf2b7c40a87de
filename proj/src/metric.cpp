#include "microsig/metric.hpp"

#include "microsig/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace microsig::metric {

namespace {

constexpr std::size_t kChunk = 32;

std::vector<Mat<float>> gather_inputs(const std::vector<slicing::SliceSample>& data, const std::vector<int>& idx,
                                      Constellation c) {
  std::vector<Mat<float>> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(to_input(data[static_cast<std::size_t>(i)], c));
  return out;
}

void check_channels(const Model& model, Constellation c) {
  if (model.architecture().input_channels != input_channels(c)) {
    throw std::invalid_argument("model expects " + std::to_string(model.architecture().input_channels) +
                                " input channel(s) but constellation " + to_string(c) + " provides " +
                                std::to_string(input_channels(c)));
  }
}

bool all_finite(const std::vector<Mat<float>>& m) {
  return std::all_of(m.begin(), m.end(), [](const Mat<float>& x) { return x.allFinite(); });
}

}  // namespace

std::string to_string(Constellation c) {
  switch (c) {
    case Constellation::micro_doppler: return "mu_d";
    case Constellation::micro_omega: return "mu_omega";
    case Constellation::combined: return "combined";
  }
  return "combined";
}

Constellation constellation_from_string(const std::string& s) {
  if (s == "mu_d" || s == "micro_doppler") return Constellation::micro_doppler;
  if (s == "mu_omega" || s == "micro_omega") return Constellation::micro_omega;
  if (s == "combined") return Constellation::combined;
  throw std::invalid_argument("unknown constellation: " + s);
}

int input_channels(Constellation c) { return c == Constellation::combined ? 2 : 1; }

Mat<float> to_input(const slicing::SliceSample& s, Constellation c) {
  std::vector<const dsp::SpectrogramImage*> images;
  if (c != Constellation::micro_omega) images.push_back(&s.mu_d_image);
  if (c != Constellation::micro_doppler) images.push_back(&s.mu_omega_image);
  const Eigen::Index n = images.front()->pixels.size();
  Mat<float> x(static_cast<Eigen::Index>(images.size()), n);
  for (std::size_t ch = 0; ch < images.size(); ++ch) {
    if (images[ch]->pixels.size() != n) throw std::invalid_argument("to_input: image sizes differ");
    const std::uint8_t* px = images[ch]->pixels.data();  // row-major: index y*w + x
    for (Eigen::Index i = 0; i < n; ++i) x(static_cast<Eigen::Index>(ch), i) = static_cast<float>(px[i]) / 255.0f;
  }
  return x;
}

BalancedBatchSampler::BalancedBatchSampler(const std::vector<int>& labels, int classes_per_batch,
                                           int samples_per_class, std::uint64_t seed)
    : p_(classes_per_batch), k_(samples_per_class), n_samples_(labels.size()), rng_(seed) {
  if (p_ < 1 || k_ < 1) throw std::invalid_argument("sampler: P and K must be >= 1");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  if (static_cast<int>(by_class.size()) < p_) {
    throw std::invalid_argument("sampler: " + std::to_string(by_class.size()) + " classes available, P = " +
                                std::to_string(p_));
  }
  for (auto& [cls, idx] : by_class) members_.push_back(idx);
  queues_.resize(members_.size());
}

std::vector<int> BalancedBatchSampler::take(std::size_t cls) {
  auto& q = queues_[cls];
  const auto& all = members_[cls];
  const auto k = static_cast<std::size_t>(k_);
  std::vector<int> out;
  if (all.size() < k) {
    // Too few samples: draw with replacement.
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
    for (std::size_t i = 0; i < k; ++i) out.push_back(all[pick(rng_)]);
    return out;
  }
  if (q.size() < k) {
    // Refill behind the leftovers so the batch never repeats a sample.
    std::vector<int> fresh;
    for (int v : all) {
      if (std::find(q.begin(), q.end(), v) == q.end()) fresh.push_back(v);
    }
    std::shuffle(fresh.begin(), fresh.end(), rng_);
    fresh.insert(fresh.end(), q.begin(), q.end());
    q = std::move(fresh);
  }
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(q.back());
    q.pop_back();
  }
  return out;
}

std::vector<int> BalancedBatchSampler::next() {
  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(p_ * k_));
  std::vector<std::size_t> chosen;
  while (static_cast<int>(chosen.size()) < p_) {
    if (class_queue_.empty()) {
      class_queue_.resize(members_.size());
      std::iota(class_queue_.begin(), class_queue_.end(), std::size_t{0});
      std::shuffle(class_queue_.begin(), class_queue_.end(), rng_);
    }
    const std::size_t c = class_queue_.back();
    class_queue_.pop_back();
    if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
  }
  for (std::size_t c : chosen) {
    const auto picked = take(c);
    batch.insert(batch.end(), picked.begin(), picked.end());
  }
  return batch;
}

std::size_t BalancedBatchSampler::batches_per_epoch() const {
  const auto bs = static_cast<std::size_t>(p_ * k_);
  return std::max<std::size_t>(1, (n_samples_ + bs - 1) / bs);
}

void to_json(nlohmann::json& j, const Hyperparams& h) {
  j = nlohmann::json{{"margin", h.margin},
                     {"learning_rate", h.learning_rate},
                     {"epochs", h.epochs},
                     {"steps_per_epoch", h.steps_per_epoch},
                     {"classes_per_batch", h.classes_per_batch},
                     {"samples_per_class", h.samples_per_class},
                     {"seed", h.seed},
                     {"constellation", to_string(h.constellation)},
                     {"beta1", h.beta1},
                     {"beta2", h.beta2},
                     {"epsilon", h.epsilon}};
}

void from_json(const nlohmann::json& j, Hyperparams& h) {
  Hyperparams d;
  h.margin = j.value("margin", d.margin);
  h.learning_rate = j.value("learning_rate", d.learning_rate);
  h.epochs = j.value("epochs", d.epochs);
  h.steps_per_epoch = j.value("steps_per_epoch", d.steps_per_epoch);
  h.classes_per_batch = j.value("classes_per_batch", d.classes_per_batch);
  h.samples_per_class = j.value("samples_per_class", d.samples_per_class);
  h.seed = j.value("seed", d.seed);
  h.constellation = constellation_from_string(j.value("constellation", to_string(d.constellation)));
  h.beta1 = j.value("beta1", d.beta1);
  h.beta2 = j.value("beta2", d.beta2);
  h.epsilon = j.value("epsilon", d.epsilon);
  if (!(h.margin >= 0.0)) throw std::invalid_argument("hyperparams: margin must be >= 0");
  if (!(h.learning_rate >= 0.0)) throw std::invalid_argument("hyperparams: learning_rate must be >= 0");
  if (h.epochs < 0 || h.steps_per_epoch < 0) throw std::invalid_argument("hyperparams: negative epoch budget");
  if (h.classes_per_batch < 2 || h.samples_per_class < 2) {
    throw std::invalid_argument("hyperparams: need P >= 2 and K >= 2 for triplet mining");
  }
}

Adam::Adam(const std::vector<Mat<float>>& params, double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(epsilon) {
  for (const auto& p : params) {
    m_.push_back(Mat<float>::Zero(p.rows(), p.cols()));
    v_.push_back(Mat<float>::Zero(p.rows(), p.cols()));
  }
}

void Adam::step(std::vector<Mat<float>>& params, const std::vector<Mat<float>>& grads, std::size_t first_param) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const auto step = static_cast<float>(lr_ / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_), eps = static_cast<float>(eps_);
  for (std::size_t i = first_param; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0f - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0f - b2) * grads[i].cwiseAbs2();
    params[i].array() -= step * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
  }
}

std::vector<int> encode_labels(const std::vector<std::string>& labels, std::vector<std::string>* classes) {
  const std::set<std::string> uniq(labels.begin(), labels.end());
  const std::vector<std::string> sorted(uniq.begin(), uniq.end());
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    out.push_back(static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), l) - sorted.begin()));
  }
  if (classes != nullptr) *classes = sorted;
  return out;
}

TrainResult train(Model model, const std::vector<slicing::SliceSample>& data, const Hyperparams& hp,
                  const ProgressFn& progress) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  check_channels(model, hp.constellation);
  std::vector<std::string> names;
  for (const auto& s : data) names.push_back(s.label);
  const auto labels = encode_labels(names);
  BalancedBatchSampler sampler(labels, hp.classes_per_batch, hp.samples_per_class, hp.seed);
  std::mt19937_64 dropout_rng(hp.seed ^ 0x9e3779b97f4a7c15ull);
  Adam adam(model.parameters(), hp.learning_rate, hp.beta1, hp.beta2, hp.epsilon);
  const std::size_t steps =
      hp.steps_per_epoch > 0 ? static_cast<std::size_t>(hp.steps_per_epoch) : sampler.batches_per_epoch();

  TrainResult out{std::move(model), {}};
  nn::Tape<float> tape;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto idx = sampler.next();
      const auto inputs = gather_inputs(data, idx, hp.constellation);
      std::vector<int> batch_labels;
      for (int i : idx) batch_labels.push_back(labels[static_cast<std::size_t>(i)]);
      const Mat<float> emb = out.model.forward(inputs, true, dropout_rng, &tape);
      Mat<float> grad;
      const double loss = batch_hard_loss(emb, batch_labels, hp.margin, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      auto grads = out.model.zero_gradients();
      out.model.backward(tape, grad, grads);
      if (!all_finite(grads)) {
        throw DivergenceError("training diverged: non-finite gradient at epoch " + std::to_string(epoch + 1));
      }
      adam.step(out.model.parameters(), grads);
      sum += loss;
    }
    out.loss_curve.push_back(sum / static_cast<double>(steps));
    if (progress) progress(epoch + 1, out.loss_curve.back());
  }
  if (!all_finite(out.model.parameters())) throw DivergenceError("training diverged: non-finite parameters");
  return out;
}

TrainResult train_dense_head(Model model, const Mat<float>& features, const std::vector<std::string>& names,
                             const Hyperparams& hp, const ProgressFn& progress) {
  if (features.cols() == 0) throw std::invalid_argument("train_dense_head: empty dataset");
  if (features.cols() != static_cast<Eigen::Index>(names.size())) {
    throw std::invalid_argument("train_dense_head: feature/label count mismatch");
  }
  const auto labels = encode_labels(names);
  BalancedBatchSampler sampler(labels, hp.classes_per_batch, hp.samples_per_class, hp.seed);
  std::mt19937_64 dropout_rng(hp.seed ^ 0x9e3779b97f4a7c15ull);
  Adam adam(model.parameters(), hp.learning_rate, hp.beta1, hp.beta2, hp.epsilon);
  const std::size_t steps =
      hp.steps_per_epoch > 0 ? static_cast<std::size_t>(hp.steps_per_epoch) : sampler.batches_per_epoch();

  TrainResult out{std::move(model), {}};
  nn::Tape<float> tape;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto idx = sampler.next();
      Mat<float> x(features.rows(), static_cast<Eigen::Index>(idx.size()));
      std::vector<int> batch_labels;
      for (std::size_t b = 0; b < idx.size(); ++b) {
        x.col(static_cast<Eigen::Index>(b)) = features.col(idx[b]);
        batch_labels.push_back(labels[static_cast<std::size_t>(idx[b])]);
      }
      tape = nn::Tape<float>{};
      const Mat<float> emb = out.model.forward_dense(std::move(x), true, dropout_rng, &tape);
      Mat<float> grad;
      const double loss = batch_hard_loss(emb, batch_labels, hp.margin, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError("fine-tuning diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      auto grads = out.model.zero_gradients();
      out.model.backward(tape, grad, grads);
      adam.step(out.model.parameters(), grads, out.model.first_dense_param());
      sum += loss;
    }
    out.loss_curve.push_back(sum / static_cast<double>(steps));
    if (progress) progress(epoch + 1, out.loss_curve.back());
  }
  if (!all_finite(out.model.parameters())) throw DivergenceError("fine-tuning diverged: non-finite parameters");
  return out;
}

Mat<float> embed_all(const Model& model, const std::vector<slicing::SliceSample>& data, Constellation c) {
  check_channels(model, c);
  Mat<float> out(model.architecture().embedding_dim(), static_cast<Eigen::Index>(data.size()));
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    std::vector<int> idx(end - start);
    std::iota(idx.begin(), idx.end(), static_cast<int>(start));
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        model.embed(gather_inputs(data, idx, c));
  }
  return out;
}

Mat<float> features_all(const Model& model, const std::vector<slicing::SliceSample>& data, Constellation c) {
  check_channels(model, c);
  Mat<float> out(model.architecture().flatten_size(), static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = model.features(to_input(data[i], c));
  return out;
}

CentroidClassifier::CentroidClassifier(std::vector<std::string> labels, Mat<float> centroids)
    : labels_(std::move(labels)), centroids_(std::move(centroids)) {
  if (static_cast<Eigen::Index>(labels_.size()) != centroids_.cols()) {
    throw std::invalid_argument("classifier: label/centroid count mismatch");
  }
  // Keep labels sorted so ties resolve to the lexicographically smallest.
  std::vector<std::size_t> order(labels_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels_[a] < labels_[b]; });
  std::vector<std::string> l;
  Mat<float> c(centroids_.rows(), centroids_.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    l.push_back(labels_[order[i]]);
    c.col(static_cast<Eigen::Index>(i)) = centroids_.col(static_cast<Eigen::Index>(order[i]));
  }
  for (std::size_t i = 1; i < l.size(); ++i) {
    if (l[i] == l[i - 1]) throw std::invalid_argument("classifier: duplicate label " + l[i]);
  }
  labels_ = std::move(l);
  centroids_ = std::move(c);
}

bool CentroidClassifier::has(const std::string& label) const {
  return std::binary_search(labels_.begin(), labels_.end(), label);
}

Vec<float> CentroidClassifier::centroid(const std::string& label) const {
  const auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) throw std::invalid_argument("classifier: unknown label " + label);
  return centroids_.col(it - labels_.begin());
}

std::string CentroidClassifier::classify(const Vec<float>& e) const {
  if (labels_.empty()) throw std::logic_error("classifier: no classes enrolled");
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centroids_.cols(); ++k) {
    const double d = (centroids_.col(k) - e).cast<double>().squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return labels_[static_cast<std::size_t>(best)];
}

std::vector<std::string> CentroidClassifier::classify_all(const Mat<float>& embeddings) const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(embeddings.cols()));
  for (Eigen::Index i = 0; i < embeddings.cols(); ++i) out.push_back(classify(embeddings.col(i)));
  return out;
}

void CentroidClassifier::enroll(const Mat<float>& embeddings, const std::vector<std::string>& labels) {
  const auto added = fit_centroids(embeddings, labels);
  for (const auto& l : added.labels()) {
    if (has(l)) throw std::invalid_argument("classifier: label '" + l + "' is already enrolled");
  }
  std::vector<std::string> l = labels_;
  Mat<float> c(added.centroids().rows(), centroids_.cols() + added.centroids().cols());
  if (centroids_.cols() > 0) {
    if (centroids_.rows() != added.centroids().rows()) throw std::invalid_argument("classifier: embedding size mismatch");
    c.leftCols(centroids_.cols()) = centroids_;
  }
  c.rightCols(added.centroids().cols()) = added.centroids();
  l.insert(l.end(), added.labels().begin(), added.labels().end());
  *this = CentroidClassifier(std::move(l), std::move(c));
}

CentroidClassifier fit_centroids(const Mat<float>& embeddings, const std::vector<std::string>& labels) {
  if (embeddings.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("fit_centroids: embedding/label count mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("fit_centroids: no samples");
  std::vector<std::string> classes;
  const auto idx = encode_labels(labels, &classes);
  Mat<double> sum = Mat<double>::Zero(embeddings.rows(), static_cast<Eigen::Index>(classes.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sum.col(idx[i]) += embeddings.col(static_cast<Eigen::Index>(i)).cast<double>();
  }
  for (Eigen::Index k = 0; k < sum.cols(); ++k) {
    const double n = sum.col(k).norm();
    if (n > 0.0) sum.col(k) /= n;
  }
  return CentroidClassifier(classes, sum.cast<float>());
}

CentroidClassifier fit_centroids(const Model& model, const std::vector<slicing::SliceSample>& data, Constellation c) {
  std::vector<std::string> labels;
  for (const auto& s : data) labels.push_back(s.label);
  return fit_centroids(embed_all(model, data, c), labels);
}

std::string to_string(FewShotMode m) { return m == FewShotMode::enroll_only ? "enroll_only" : "fine_tune"; }

FewShotMode few_shot_mode_from_string(const std::string& s) {
  if (s == "enroll_only" || s == "enroll-only") return FewShotMode::enroll_only;
  if (s == "fine_tune" || s == "fine-tune") return FewShotMode::fine_tune;
  throw std::invalid_argument("unknown few-shot mode: " + s);
}

FewShotResult few_shot_adapt(const Model& model, const CentroidClassifier& classifier,
                             const std::vector<slicing::SliceSample>& new_samples,
                             const std::vector<slicing::SliceSample>& base_samples, const FewShotConfig& cfg) {
  if (new_samples.empty()) throw std::invalid_argument("few_shot_adapt: no samples for the new classes");
  std::vector<std::string> new_labels;
  for (const auto& s : new_samples) {
    if (classifier.has(s.label)) throw std::invalid_argument("few_shot_adapt: label '" + s.label + "' already enrolled");
    new_labels.push_back(s.label);
  }
  const Constellation c = cfg.hp.constellation;
  if (cfg.mode == FewShotMode::enroll_only || cfg.hp.epochs == 0) {
    FewShotResult r{model, classifier, {}};
    r.classifier.enroll(embed_all(model, new_samples, c), new_labels);
    return r;
  }
  if (base_samples.empty()) throw std::invalid_argument("few_shot_adapt: fine-tuning needs the base samples");

  std::vector<slicing::SliceSample> all = base_samples;
  all.insert(all.end(), new_samples.begin(), new_samples.end());
  std::vector<std::string> labels;
  for (const auto& s : all) labels.push_back(s.label);
  const Mat<float> feats = features_all(model, all, c);

  Hyperparams hp = cfg.hp;
  std::vector<std::string> classes;
  encode_labels(labels, &classes);
  hp.classes_per_batch = std::min<int>(hp.classes_per_batch, static_cast<int>(classes.size()));
  auto trained = train_dense_head(model, feats, labels, hp);
  std::mt19937_64 unused(0);
  const Mat<float> emb = trained.model.forward_dense(feats, false, unused);
  return {std::move(trained.model), fit_centroids(emb, labels), std::move(trained.loss_curve)};
}

void save_checkpoint(const std::filesystem::path& base, const Model& model, const nlohmann::json& extra) {
  std::vector<float> blob;
  blob.reserve(model.parameter_count());
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    blob.insert(blob.end(), p.data(), p.data() + p.size());
    shapes.push_back({p.rows(), p.cols()});
  }
  io::write_f32(std::filesystem::path(base.string() + ".bin"), blob);
  nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
  header["schema_version"] = io::kSchemaVersion;
  header["format"] = "float32 little-endian, parameters in layer order, each column-major";
  header["architecture"] = model.architecture();
  header["param_shapes"] = shapes;
  header["parameter_count"] = model.parameter_count();
  header["weight_layers"] = model.architecture().n_weight_layers();
  io::write_json(std::filesystem::path(base.string() + ".json"), header);
}

Model load_checkpoint(const std::filesystem::path& base, nlohmann::json* header_out) {
  const auto header = io::read_json(std::filesystem::path(base.string() + ".json"));
  const auto arch = header.at("architecture").get<nn::Architecture>();
  const auto blob = io::read_f32(std::filesystem::path(base.string() + ".bin"));
  const Model shape_ref(arch, 0);
  std::vector<Mat<float>> params;
  std::size_t at = 0;
  for (const auto& p : shape_ref.parameters()) {
    if (at + static_cast<std::size_t>(p.size()) > blob.size()) {
      throw std::invalid_argument("checkpoint blob too short: " + base.string());
    }
    params.push_back(Eigen::Map<const Mat<float>>(blob.data() + at, p.rows(), p.cols()));
    at += static_cast<std::size_t>(p.size());
  }
  if (at != blob.size()) throw std::invalid_argument("checkpoint blob size mismatch: " + base.string());
  if (header_out != nullptr) *header_out = header;
  return Model(arch, std::move(params));
}

nlohmann::json classifier_to_json(const CentroidClassifier& c) {
  nlohmann::json cents = nlohmann::json::array();
  for (Eigen::Index k = 0; k < c.centroids().cols(); ++k) {
    const Vec<float> v = c.centroids().col(k);
    cents.push_back(std::vector<float>(v.data(), v.data() + v.size()));
  }
  return {{"schema_version", io::kSchemaVersion}, {"labels", c.labels()}, {"centroids", cents}};
}

CentroidClassifier classifier_from_json(const nlohmann::json& j) {
  const auto labels = j.at("labels").get<std::vector<std::string>>();
  const auto cents = j.at("centroids").get<std::vector<std::vector<float>>>();
  if (cents.size() != labels.size()) throw std::invalid_argument("classifier json: label/centroid count mismatch");
  const auto dim = static_cast<Eigen::Index>(cents.empty() ? 0 : cents.front().size());
  Mat<float> m(dim, static_cast<Eigen::Index>(cents.size()));
  for (std::size_t k = 0; k < cents.size(); ++k) {
    if (static_cast<Eigen::Index>(cents[k].size()) != dim) throw std::invalid_argument("classifier json: ragged centroids");
    m.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Vec<float>>(cents[k].data(), dim);
  }
  return CentroidClassifier(labels, std::move(m));
}

}  // namespace microsig::metric

namespace microsig::nn {

void to_json(nlohmann::json& j, const Architecture& a) {
  j = nlohmann::json{{"input_rows", a.input_rows},       {"input_cols", a.input_cols},
                     {"input_channels", a.input_channels}, {"conv_channels", a.conv_channels},
                     {"dense_units", a.dense_units},     {"dropout_rate", a.dropout_rate}};
}

void from_json(const nlohmann::json& j, Architecture& a) {
  Architecture d;
  a.input_rows = j.value("input_rows", d.input_rows);
  a.input_cols = j.value("input_cols", d.input_cols);
  a.input_channels = j.value("input_channels", d.input_channels);
  a.conv_channels = j.value("conv_channels", d.conv_channels);
  a.dense_units = j.value("dense_units", d.dense_units);
  a.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  a.validate();
}

}  // namespace microsig::nn
