#pragma once

// Six 3x3 conv blocks (conv -> ReLU -> 2x2 max-pool), flatten, four dense
// layers, L2-normalised output. Templated on scalar so the same network can be
// trained in float and gradient-checked in double.

#include "microsig/nn/layers.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace microsig::nn {

struct Architecture {
  int input_rows = 128;
  int input_cols = 256;
  int input_channels = 1;
  std::vector<int> conv_channels{16, 32, 64, 64, 128, 128};
  std::vector<int> dense_units{512, 256, 128, 64};
  double dropout_rate = 0.3;

  int n_conv() const { return static_cast<int>(conv_channels.size()); }
  int n_dense() const { return static_cast<int>(dense_units.size()); }
  int n_weight_layers() const { return n_conv() + n_dense(); }
  int embedding_dim() const { return dense_units.back(); }
  int pooled_rows() const { return input_rows >> n_conv(); }
  int pooled_cols() const { return input_cols >> n_conv(); }
  int flatten_size() const { return pooled_rows() * pooled_cols() * conv_channels.back(); }

  void validate() const {
    if (conv_channels.empty() || dense_units.empty()) throw std::invalid_argument("architecture: empty layer list");
    if (input_channels < 1) throw std::invalid_argument("architecture: input_channels < 1");
    const int div = 1 << n_conv();
    if (input_rows % div != 0 || input_cols % div != 0 || input_rows < div || input_cols < div) {
      throw std::invalid_argument("architecture: input size not divisible by 2^n_conv");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("architecture: dropout outside [0,1)");
  }

  bool operator==(const Architecture&) const = default;
};

/// Activations recorded by a training forward pass.
template <typename Scalar>
struct Tape {
  struct ConvRecord {
    Mat<Scalar> input;     // C_in x h*w
    Mat<Scalar> activated; // C_out x h*w, post-ReLU
    std::vector<std::int32_t> argmax;
    int h = 0;
    int w = 0;
  };
  std::vector<std::vector<ConvRecord>> conv;  // [sample][layer]
  std::vector<Mat<Scalar>> dense_input;       // [layer] in x B
  std::vector<Mat<Scalar>> dense_activated;   // [layer] post-ReLU (hidden layers only)
  std::vector<Mat<Scalar>> dropout_mask;      // [layer] empty when not applied
  Mat<Scalar> embedding;
  Vec<Scalar> raw_norms;
  bool has_conv = false;
};

template <typename Scalar>
class EmbeddingNet {
 public:
  EmbeddingNet() = default;

  /// He-normal weights, zero biases.
  EmbeddingNet(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    std::mt19937_64 rng(seed);
    int in_c = arch_.input_channels;
    for (int c : arch_.conv_channels) {
      params_.push_back(he_normal(c, 9 * in_c, 9 * in_c, rng));
      params_.push_back(Mat<Scalar>::Zero(c, 1));
      in_c = c;
    }
    int in_d = arch_.flatten_size();
    for (int d : arch_.dense_units) {
      params_.push_back(he_normal(d, in_d, in_d, rng));
      params_.push_back(Mat<Scalar>::Zero(d, 1));
      in_d = d;
    }
  }

  EmbeddingNet(Architecture arch, std::vector<Mat<Scalar>> params) : arch_(std::move(arch)), params_(std::move(params)) {
    arch_.validate();
    if (params_.size() != static_cast<std::size_t>(2 * arch_.n_weight_layers())) {
      throw std::invalid_argument("EmbeddingNet: parameter count does not match architecture");
    }
  }

  const Architecture& architecture() const { return arch_; }
  std::vector<Mat<Scalar>>& parameters() { return params_; }
  const std::vector<Mat<Scalar>>& parameters() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
  }

  /// Index of the first dense-layer tensor in parameters().
  std::size_t first_dense_param() const { return static_cast<std::size_t>(2 * arch_.n_conv()); }

  template <typename Other>
  EmbeddingNet<Other> cast() const {
    std::vector<Mat<Other>> p;
    p.reserve(params_.size());
    for (const auto& m : params_) p.push_back(m.template cast<Other>());
    return EmbeddingNet<Other>(arch_, std::move(p));
  }

  std::vector<Mat<Scalar>> zero_gradients() const {
    std::vector<Mat<Scalar>> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.push_back(Mat<Scalar>::Zero(p.rows(), p.cols()));
    return g;
  }

  /// Conv stack for one sample; returns the flattened feature vector.
  Vec<Scalar> features(const Mat<Scalar>& input, std::vector<typename Tape<Scalar>::ConvRecord>* record = nullptr) const {
    check_input(input);
    Mat<Scalar> x = input;
    Mat<Scalar> cols;
    int h = arch_.input_rows;
    int w = arch_.input_cols;
    for (int l = 0; l < arch_.n_conv(); ++l) {
      Mat<Scalar> y = conv3x3_forward(params_[2 * l], params_[2 * l + 1], x, h, w, cols);
      relu_inplace(y);
      std::vector<std::int32_t> argmax;
      Mat<Scalar> pooled = maxpool2_forward(y, h, w, argmax);
      if (record != nullptr) {
        record->push_back({std::move(x), std::move(y), std::move(argmax), h, w});
      }
      x = std::move(pooled);
      h /= 2;
      w /= 2;
    }
    return Eigen::Map<const Vec<Scalar>>(x.data(), x.size());
  }

  /// Embeddings (embedding_dim x batch). Dropout is applied only when train_mode is set.
  template <typename Rng>
  Mat<Scalar> forward(const std::vector<Mat<Scalar>>& inputs, bool train_mode, Rng& rng, Tape<Scalar>* tape = nullptr,
                      bool record_conv = true) const {
    const auto batch = static_cast<Eigen::Index>(inputs.size());
    Mat<Scalar> flat(arch_.flatten_size(), batch);
    if (tape != nullptr) {
      *tape = Tape<Scalar>{};
      tape->has_conv = record_conv;
      if (record_conv) tape->conv.resize(inputs.size());
    }
    for (Eigen::Index b = 0; b < batch; ++b) {
      auto* rec = (tape != nullptr && record_conv) ? &tape->conv[static_cast<std::size_t>(b)] : nullptr;
      flat.col(b) = features(inputs[static_cast<std::size_t>(b)], rec);
    }
    return forward_dense(std::move(flat), train_mode, rng, tape);
  }

  Mat<Scalar> embed(const std::vector<Mat<Scalar>>& inputs) const {
    std::mt19937_64 unused(0);
    return forward(inputs, false, unused);
  }

  /// Dense head over precomputed flattened features (flatten_size x batch).
  template <typename Rng>
  Mat<Scalar> forward_dense(Mat<Scalar> x, bool train_mode, Rng& rng, Tape<Scalar>* tape = nullptr) const {
    const int nc = arch_.n_conv();
    const int nd = arch_.n_dense();
    if (tape != nullptr) {
      tape->dense_input.resize(nd);
      tape->dense_activated.resize(nd);
      tape->dropout_mask.resize(nd);
    }
    for (int l = 0; l < nd; ++l) {
      const auto& wgt = params_[2 * (nc + l)];
      const auto& bias = params_[2 * (nc + l) + 1];
      Mat<Scalar> y = dense_forward(wgt, bias, x);
      const bool hidden = l + 1 < nd;
      Mat<Scalar> mask;
      if (hidden) {
        relu_inplace(y);
        if (train_mode && arch_.dropout_rate > 0.0) {
          mask = make_dropout_mask<Scalar>(y.rows(), y.cols(), arch_.dropout_rate, rng);
        }
      }
      if (tape != nullptr) {
        tape->dense_input[l] = std::move(x);
        if (hidden) tape->dense_activated[l] = y;
        tape->dropout_mask[l] = mask;
      }
      x = mask.size() > 0 ? Mat<Scalar>(y.cwiseProduct(mask)) : std::move(y);
    }
    Vec<Scalar> norms;
    Mat<Scalar> emb = l2_normalize_forward(x, norms);
    if (tape != nullptr) {
      tape->embedding = emb;
      tape->raw_norms = norms;
    }
    return emb;
  }

  /// Accumulates dLoss/dParams into grads given dLoss/dEmbedding. Conv gradients
  /// are only produced when the tape recorded the conv stack.
  void backward(const Tape<Scalar>& tape, const Mat<Scalar>& grad_embedding, std::vector<Mat<Scalar>>& grads) const {
    const int nc = arch_.n_conv();
    const int nd = arch_.n_dense();
    Mat<Scalar> g = l2_normalize_backward(tape.embedding, tape.raw_norms, grad_embedding);
    for (int l = nd - 1; l >= 0; --l) {
      if (l + 1 < nd) {
        if (tape.dropout_mask[l].size() > 0) g = g.cwiseProduct(tape.dropout_mask[l]);
        relu_backward_inplace(tape.dense_activated[l], g);
      }
      const std::size_t wi = static_cast<std::size_t>(2 * (nc + l));
      g = dense_backward(params_[wi], tape.dense_input[l], g, grads[wi], grads[wi + 1]);
    }
    if (!tape.has_conv) return;

    Mat<Scalar> cols;
    for (std::size_t b = 0; b < tape.conv.size(); ++b) {
      const auto& recs = tape.conv[b];
      const int c_last = arch_.conv_channels.back();
      Mat<Scalar> gp = Eigen::Map<const Mat<Scalar>>(g.col(static_cast<Eigen::Index>(b)).data(), c_last,
                                                      static_cast<Eigen::Index>(arch_.pooled_rows()) * arch_.pooled_cols());
      for (int l = nc - 1; l >= 0; --l) {
        const auto& r = recs[static_cast<std::size_t>(l)];
        Mat<Scalar> gy = maxpool2_backward(gp, r.argmax, r.h, r.w);
        relu_backward_inplace(r.activated, gy);
        const std::size_t wi = static_cast<std::size_t>(2 * l);
        Mat<Scalar> gx;
        conv3x3_backward(params_[wi], r.input, r.h, r.w, gy, grads[wi], grads[wi + 1], l > 0 ? &gx : nullptr, cols);
        gp = std::move(gx);
      }
    }
  }

 private:
  void check_input(const Mat<Scalar>& input) const {
    if (input.rows() != arch_.input_channels ||
        input.cols() != static_cast<Eigen::Index>(arch_.input_rows) * arch_.input_cols) {
      throw std::invalid_argument("EmbeddingNet: input shape " + std::to_string(input.rows()) + "x" +
                                  std::to_string(input.cols()) + " does not match architecture");
    }
  }

  template <typename Rng>
  static Mat<Scalar> he_normal(int rows, int cols, int fan_in, Rng& rng) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(n(rng));
    }
    return m;
  }

  Architecture arch_;
  std::vector<Mat<Scalar>> params_;
};

}  // namespace microsig::nn
