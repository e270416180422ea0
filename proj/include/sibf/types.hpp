#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sibf {

using Complex = std::complex<double>;

// Channel-count ceiling. Per-bin matrices live on the stack up to this size.
inline constexpr int kMaxChannels = 16;

using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                              kMaxChannels, kMaxChannels>;
using CVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxChannels, 1>;
using RVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxChannels, 1>;

// Heap-backed containers for data that scales with frames or bins.
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexRow = Eigen::RowVectorXcd;
using RealMatrix = Eigen::MatrixXd;

// Raised when a covariance or update becomes numerically unusable. Pipelines
// catch it per bin and zero-fill that bin.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sibf
