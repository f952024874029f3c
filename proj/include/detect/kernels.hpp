#pragma once

// Dense Eigen kernels shared by the scorer and the toy trainer. Templated on
// the scalar so float tables can be scored without a copy.

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace detect::kernels {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Moments {
  Scalar mean = 0;
  Scalar variance = 0;
};

/// Row-wise log-softmax.
template <typename Derived>
RowMatrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar peak = logits.row(i).maxCoeff();
    const Scalar lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

/// Mean and variance of ln p(t) under t ~ p for one log-distribution.
/// Zero-probability entries contribute nothing.
template <typename Derived>
Moments<typename Derived::Scalar> row_moments(const Eigen::DenseBase<Derived>& logprobs) {
  using Scalar = typename Derived::Scalar;
  Scalar mean = 0;
  for (Eigen::Index t = 0; t < logprobs.size(); ++t) {
    const Scalar lp = logprobs(t);
    if (lp == -std::numeric_limits<Scalar>::infinity()) continue;
    mean += std::exp(lp) * lp;
  }
  Scalar variance = 0;
  for (Eigen::Index t = 0; t < logprobs.size(); ++t) {
    const Scalar lp = logprobs(t);
    if (lp == -std::numeric_limits<Scalar>::infinity()) continue;
    const Scalar centered = lp - mean;
    variance += std::exp(lp) * centered * centered;
  }
  return {mean, variance};
}

/// Moments of the summed log-prob of a position-independent resample,
/// for an s x v table of log-probabilities.
template <typename Derived>
Moments<typename Derived::Scalar> sequence_moments(const Eigen::MatrixBase<Derived>& logprobs) {
  Moments<typename Derived::Scalar> total;
  for (Eigen::Index i = 0; i < logprobs.rows(); ++i) {
    const auto m = row_moments(logprobs.row(i));
    total.mean += m.mean;
    total.variance += m.variance;
  }
  return total;
}

}  // namespace detect::kernels
