#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace microsig::dsp {

enum class WindowFunction { rectangular, hann };

inline std::string to_string(WindowFunction w) { return w == WindowFunction::hann ? "hann" : "rectangular"; }

inline WindowFunction window_from_string(const std::string& s) {
  if (s == "hann") return WindowFunction::hann;
  if (s == "rectangular" || s == "rect") return WindowFunction::rectangular;
  throw std::invalid_argument("unknown window function: " + s);
}

/// Periodic window of length n.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> make_window(WindowFunction fn, int n) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w(n);
  for (int k = 0; k < n; ++k) {
    w(k) = fn == WindowFunction::hann
               ? static_cast<Scalar>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * k / n))
               : Scalar(1);
  }
  return w;
}

/// Signed FFT bin index of row r after fftshift.
inline int shifted_bin(int r, int n) { return r - n / 2; }

/// Reorders an unshifted spectrum so that row 0 is the most negative frequency.
template <typename Derived>
void fftshift_inplace(Eigen::MatrixBase<Derived>& v) {
  const Eigen::Index n = v.size();
  const Eigen::Index half = n - n / 2;  // elements [0, half) are the non-negative bins
  typename Derived::PlainObject tmp = v;
  v.head(n / 2) = tmp.tail(n / 2);
  v.tail(half) = tmp.head(half);
}

/// Forward unnormalised DFT of a column vector.
template <typename Scalar>
class Fft {
 public:
  using Complex = std::complex<Scalar>;
  using CVec = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

  CVec forward(const CVec& x) {
    CVec out(x.size());
    fft_.fwd(out, x);
    return out;
  }

 private:
  Eigen::FFT<Scalar> fft_;
};

}  // namespace microsig::dsp
