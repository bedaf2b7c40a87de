#pragma once

// Dense building blocks for the embedding network.
//
// A feature map of one sample is stored as a (channels x height*width) matrix;
// column index = y * width + x. Channels of one pixel are contiguous in memory,
// which keeps im2col a sequence of small contiguous copies.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace microsig::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Unfolds 3x3 zero-padded neighbourhoods into columns.
/// Result is (9*C) x (h*w); row = tap*C + c with tap = ky*3 + kx.
template <typename Scalar>
void im2col3x3(const Mat<Scalar>& x, int h, int w, Mat<Scalar>& cols) {
  const Eigen::Index c = x.rows();
  cols.setZero(9 * c, static_cast<Eigen::Index>(h) * w);
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      const Eigen::Index row0 = (ky * 3 + kx) * c;
      for (int y = 0; y < h; ++y) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        const int x_lo = std::max(0, 1 - kx);
        const int x_hi = std::min(w, w + 1 - kx);
        for (int xx = x_lo; xx < x_hi; ++xx) {
          cols.col(static_cast<Eigen::Index>(y) * w + xx).segment(row0, c) =
              x.col(static_cast<Eigen::Index>(sy) * w + xx + kx - 1);
        }
      }
    }
  }
}

/// Adjoint of im2col3x3: scatters column gradients back onto the feature map.
template <typename Scalar>
void col2im3x3(const Mat<Scalar>& cols, int h, int w, Eigen::Index channels, Mat<Scalar>& dx) {
  dx.setZero(channels, static_cast<Eigen::Index>(h) * w);
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      const Eigen::Index row0 = (ky * 3 + kx) * channels;
      for (int y = 0; y < h; ++y) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        const int x_lo = std::max(0, 1 - kx);
        const int x_hi = std::min(w, w + 1 - kx);
        for (int xx = x_lo; xx < x_hi; ++xx) {
          dx.col(static_cast<Eigen::Index>(sy) * w + xx + kx - 1) +=
              cols.col(static_cast<Eigen::Index>(y) * w + xx).segment(row0, channels);
        }
      }
    }
  }
}

/// 3x3 same-padding convolution. weight: out x (9*in), bias: out x 1.
template <typename Scalar>
Mat<Scalar> conv3x3_forward(const Mat<Scalar>& weight, const Mat<Scalar>& bias, const Mat<Scalar>& x,
                            int h, int w, Mat<Scalar>& cols_scratch) {
  if (weight.cols() != 9 * x.rows() || x.cols() != static_cast<Eigen::Index>(h) * w) {
    throw std::invalid_argument("conv3x3_forward: shape mismatch");
  }
  im2col3x3(x, h, w, cols_scratch);
  Mat<Scalar> y = weight * cols_scratch;
  y.colwise() += bias.col(0);
  return y;
}

/// Accumulates parameter gradients; writes the input gradient when requested.
template <typename Scalar>
void conv3x3_backward(const Mat<Scalar>& weight, const Mat<Scalar>& x, int h, int w,
                      const Mat<Scalar>& grad_y, Mat<Scalar>& grad_weight, Mat<Scalar>& grad_bias,
                      Mat<Scalar>* grad_x, Mat<Scalar>& cols_scratch) {
  im2col3x3(x, h, w, cols_scratch);
  grad_weight.noalias() += grad_y * cols_scratch.transpose();
  grad_bias.col(0) += grad_y.rowwise().sum();
  if (grad_x != nullptr) {
    Mat<Scalar> grad_cols = weight.transpose() * grad_y;
    col2im3x3(grad_cols, h, w, x.rows(), *grad_x);
  }
}

template <typename Scalar>
void relu_inplace(Mat<Scalar>& x) {
  x = x.cwiseMax(Scalar(0));
}

/// Masks the gradient by the post-activation output (y > 0).
template <typename Scalar>
void relu_backward_inplace(const Mat<Scalar>& y, Mat<Scalar>& grad) {
  grad = (y.array() > Scalar(0)).select(grad, Scalar(0));
}

/// 2x2 stride-2 max pooling; argmax holds the winning input column per output element.
template <typename Scalar>
Mat<Scalar> maxpool2_forward(const Mat<Scalar>& x, int h, int w, std::vector<std::int32_t>& argmax) {
  if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("maxpool2_forward: odd spatial size");
  const int oh = h / 2;
  const int ow = w / 2;
  const Eigen::Index c = x.rows();
  Mat<Scalar> y(c, static_cast<Eigen::Index>(oh) * ow);
  argmax.resize(static_cast<std::size_t>(y.size()));
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index out_col = static_cast<Eigen::Index>(oy) * ow + ox;
      const Eigen::Index p00 = static_cast<Eigen::Index>(2 * oy) * w + 2 * ox;
      const Eigen::Index candidates[4] = {p00, p00 + 1, p00 + w, p00 + w + 1};
      for (Eigen::Index ch = 0; ch < c; ++ch) {
        Eigen::Index best = candidates[0];
        Scalar best_v = x(ch, best);
        for (int k = 1; k < 4; ++k) {
          const Scalar v = x(ch, candidates[k]);
          if (v > best_v) {
            best_v = v;
            best = candidates[k];
          }
        }
        y(ch, out_col) = best_v;
        argmax[static_cast<std::size_t>(out_col * c + ch)] = static_cast<std::int32_t>(best);
      }
    }
  }
  return y;
}

template <typename Scalar>
Mat<Scalar> maxpool2_backward(const Mat<Scalar>& grad_y, const std::vector<std::int32_t>& argmax, int h, int w) {
  const Eigen::Index c = grad_y.rows();
  Mat<Scalar> grad_x = Mat<Scalar>::Zero(c, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index col = 0; col < grad_y.cols(); ++col) {
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      grad_x(ch, argmax[static_cast<std::size_t>(col * c + ch)]) += grad_y(ch, col);
    }
  }
  return grad_x;
}

/// Fully connected layer over a batch: x is in x batch.
template <typename Scalar>
Mat<Scalar> dense_forward(const Mat<Scalar>& weight, const Mat<Scalar>& bias, const Mat<Scalar>& x) {
  if (weight.cols() != x.rows()) throw std::invalid_argument("dense_forward: shape mismatch");
  Mat<Scalar> y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

template <typename Scalar>
Mat<Scalar> dense_backward(const Mat<Scalar>& weight, const Mat<Scalar>& x, const Mat<Scalar>& grad_y,
                           Mat<Scalar>& grad_weight, Mat<Scalar>& grad_bias) {
  grad_weight.noalias() += grad_y * x.transpose();
  grad_bias.col(0) += grad_y.rowwise().sum();
  return weight.transpose() * grad_y;
}

/// Inverted dropout: mask entries are 0 or 1/(1-rate).
template <typename Scalar, typename Rng>
Mat<Scalar> make_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat<Scalar> mask(rows, cols);
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = u(rng) < rate ? Scalar(0) : keep_scale;
  }
  return mask;
}

/// Column-wise L2 normalisation. A zero column maps to the first unit vector
/// (with zero gradient) so every output has unit norm.
template <typename Scalar>
Mat<Scalar> l2_normalize_forward(const Mat<Scalar>& x, Vec<Scalar>& norms) {
  norms = x.colwise().norm().transpose();
  Mat<Scalar> y = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (norms(j) > Scalar(0)) {
      y.col(j) /= norms(j);
    } else {
      y.col(j).setZero();
      y(0, j) = Scalar(1);
    }
  }
  return y;
}

template <typename Scalar>
Mat<Scalar> l2_normalize_backward(const Mat<Scalar>& y, const Vec<Scalar>& norms, const Mat<Scalar>& grad_y) {
  Mat<Scalar> grad_x(y.rows(), y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    if (norms(j) <= Scalar(0)) {
      grad_x.col(j).setZero();
      continue;
    }
    const Scalar proj = y.col(j).dot(grad_y.col(j));
    grad_x.col(j) = (grad_y.col(j) - proj * y.col(j)) / norms(j);
  }
  return grad_x;
}

}  // namespace microsig::nn
