#pragma once

#include <span>
#include <vector>

#include "sibf/sibf.hpp"

namespace sibf {

// Least-squares extractor w = Phi_x^{-1} phi_q with phi_q = (1/T) sum x conj(q).
// Phi_x is diagonally loaded only when ill-conditioned.
CVector mmse_filter_batch(const ComplexMatrix& x_bin, std::span<const Complex> q,
                          double diagonal_loading = 1e-6);

// Online MMSE filter for one bin: Phi_x^{-1} kept by rank-1 inverse updates
// (refreshed by direct inversion every `refresh_period` frames), phi_q by the
// exponential recursion. Initialized from a window of frames, oldest first.
class OnlineMmseBin {
 public:
  OnlineMmseBin(std::span<const CVector> init_x, std::span<const Complex> init_q, double g,
                double diagonal_loading = 1e-6, int refresh_period = 1000);

  const CVector& update(const CVector& x, Complex q);

  const CVector& w() const { return w_; }
  const HermitianMatrix& phi_x() const { return phi_x_; }
  const HermitianMatrix& phi_x_inv() const { return phi_x_inv_; }

 private:
  double g_;
  double loading_;
  int refresh_period_;
  int frames_ = 0;
  HermitianMatrix phi_x_;
  HermitianMatrix phi_x_inv_;
  CVector phi_q_;
  CVector w_;
};

struct MmseOptions {
  // Batch or RlsOnline; other modes are rejected.
  AlgorithmMode mode = Batch{};
  int ref_mic = 0;
  double diagonal_loading = 1e-6;
  int refresh_period = 1000;
};

struct MmseResult {
  Spectrogram output;
  RunStats stats;
};

// MMSE beamformer toward the scaling target q = r x_m / |x_m|. Its output
// needs no further scaling.
MmseResult mmse_extract(const MultichannelSpectrogram& x, const RealMatrix& r,
                        const MmseOptions& options);

// SIBF with the frame-shared IVE-constrained weight and SWF scaling. A config
// whose model is not already IVE-constrained gets the default one.
ExtractionResult ive_constrained_extract(const MultichannelSpectrogram& x, const RealMatrix& r,
                                         SibfConfig config);

}  // namespace sibf
