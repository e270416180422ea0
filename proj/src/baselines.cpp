#include "sibf/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace sibf {

CVector mmse_filter_batch(const ComplexMatrix& x_bin, std::span<const Complex> q,
                          double diagonal_loading) {
  const auto frames = x_bin.cols();
  if (frames == 0 || static_cast<Eigen::Index>(q.size()) != frames)
    throw std::invalid_argument("mmse_filter_batch: size mismatch");
  const HermitianMatrix phi_x = batch_covariance(x_bin);
  CVector phi_q = CVector::Zero(x_bin.rows());
  for (Eigen::Index t = 0; t < frames; ++t) phi_q += std::conj(q[t]) * x_bin.col(t);
  phi_q /= static_cast<double>(frames);
  return invert_loaded(phi_x, diagonal_loading).matrix() * phi_q;
}

OnlineMmseBin::OnlineMmseBin(std::span<const CVector> init_x, std::span<const Complex> init_q,
                             double g, double diagonal_loading, int refresh_period)
    : g_(g), loading_(diagonal_loading), refresh_period_(refresh_period) {
  if (refresh_period < 1) throw std::invalid_argument("OnlineMmseBin: refresh period must be >= 1");
  const std::vector<double> ones(init_x.size(), 1.0);
  phi_x_ = windowed_covariance(init_x, ones, g);
  phi_x_inv_ = invert_loaded(phi_x_, loading_);
  phi_q_ = init_phi_q(init_x, init_q, g);
  w_ = phi_x_inv_.matrix() * phi_q_;
}

const CVector& OnlineMmseBin::update(const CVector& x, Complex q) {
  ++frames_;
  phi_x_ = rls_update(phi_x_, x, 1.0, g_);
  if (frames_ % refresh_period_ == 0) {
    phi_x_inv_ = invert_loaded(phi_x_, loading_);
  } else {
    phi_x_inv_ = mil_rank1_update(HermitianMatrix(phi_x_inv_.matrix() / g_), x, 1.0 - g_);
  }
  phi_q_ = update_phi_q(phi_q_, x, q, g_);
  w_ = phi_x_inv_.matrix() * phi_q_;
  return w_;
}

MmseResult mmse_extract(const MultichannelSpectrogram& x, const RealMatrix& r,
                        const MmseOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  x.validate();
  validate_mode(options.mode);
  const int n = x.num_channels();
  const int bins = x.num_bins();
  const int frames = x.num_frames();
  const int m = options.ref_mic;
  if (m < 0 || m >= n) throw std::invalid_argument("reference microphone index out of range");
  if (r.rows() != bins || r.cols() != frames)
    throw std::invalid_argument("reference shape does not match the observation spectrogram");
  const bool batch = std::holds_alternative<Batch>(options.mode);
  if (!batch && !std::holds_alternative<RlsOnline>(options.mode))
    throw std::invalid_argument("mmse supports batch and rls modes");

  MmseResult res;
  res.output.bins = ComplexMatrix::Zero(bins, frames);
  res.stats.frames = frames;
  const int tb = batch ? frames : std::min(mode_window(options.mode), frames);
  res.stats.window = tb;

  for (int f = 0; f < bins; ++f) {
    const ComplexMatrix xb = x.bin_matrix(f);
    std::vector<Complex> q(frames);
    for (int t = 0; t < frames; ++t) q[t] = scaling_target(r(f, t), xb(m, t));
    if (xb.squaredNorm() == 0.0) {
      ++res.stats.silent_bins;
      continue;
    }
    try {
      if (batch) {
        const CVector w = mmse_filter_batch(xb, q, options.diagonal_loading);
        for (int t = 0; t < frames; ++t) res.output.bins(f, t) = w.dot(xb.col(t));
        continue;
      }
      std::vector<CVector> init_x(tb);
      for (int i = 0; i < tb; ++i) init_x[i] = xb.col(i);
      const auto init_start = std::chrono::steady_clock::now();
      OnlineMmseBin tracker(init_x, std::span<const Complex>(q.data(), tb),
                            mode_forgetting(options.mode), options.diagonal_loading,
                            options.refresh_period);
      res.stats.init_seconds +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - init_start).count();
      for (int t = 0; t < frames; ++t) {
        const CVector xt = xb.col(t);
        const CVector& w = tracker.update(xt, q[t]);
        res.output.bins(f, t) = w.dot(xt);
      }
    } catch (const NumericalError&) {
      ++res.stats.failed_bins;
      res.output.bins.row(f).setZero();
    }
  }
  res.stats.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

ExtractionResult ive_constrained_extract(const MultichannelSpectrogram& x, const RealMatrix& r,
                                         SibfConfig config) {
  if (!config.model.frame_coupled()) {
    config.model.kind = IveConstrainedTvLaplacian{0.25};
    config.model.epsilon = 1e-9;
  }
  config.scaling = ScalingMethod::Swf;
  return extract(x, r, config);
}

}  // namespace sibf
