#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "sibf/covariance.hpp"
#include "sibf/hermitian.hpp"
#include "sibf/scaling.hpp"
#include "sibf/source_models.hpp"
#include "sibf/stft.hpp"

namespace sibf {

struct SibfConfig {
  AlgorithmMode mode = Batch{};
  SourceModelSpec model;
  // Auxiliary-function passes. 0 selects 10 for batch (boost start counted as
  // the first pass) and 1 for the per-frame modes.
  int k_aux = 0;
  int pm_iterations = 2;
  ScalingMethod scaling = ScalingMethod::Swf;
  int ref_mic = 0;  // zero-based
  int inverse_refresh_period = 1000;
  double diagonal_loading = 1e-6;
  double boost_beta = 0.25;

  int effective_k_aux() const;
  // Throws std::invalid_argument for out-of-range settings.
  void validate(int channels) const;
};

// Per-bin extraction filters. Bins whose estimation failed hold zero vectors.
struct ExtractionFilterBank {
  std::vector<CVector> w;
  std::vector<char> failed;
  int frame = -1;  // -1 for a batch estimate

  int num_failed() const;
};

Complex apply_filter(const CVector& w, const CVector& x);

inline double normalize_reference(double r, double v_ref) { return r / std::sqrt(v_ref); }

// sum_t -log p(r(t), y(t)) without model constants. `r_norm` is the
// normalized, unclipped reference. Not defined for the frame-coupled model.
double evaluate_objective(std::span<const Complex> y, std::span<const double> r_norm,
                          const SourceModelSpec& model);

// Per-bin reference normalization for batch processing: r / sqrt(mean r^2).
RealMatrix normalize_reference_batch(const RealMatrix& r);

struct RunStats {
  double init_seconds = 0.0;
  double total_seconds = 0.0;
  int frames = 0;
  int window = 0;  // effective T_b after shrinking
  int silent_bins = 0;  // bins without observation energy (emit zeros)
  int failed_bins = 0;  // bins whose initialization failed
  int failed_updates = 0;  // per-frame, per-bin numerical failures
};

struct BatchOptions {
  bool record_objective = false;
};

struct BatchEstimate {
  ExtractionFilterBank filters;
  // objective[f][k] after auxiliary pass k (empty unless recorded).
  std::vector<std::vector<double>> objective;
  int silent_bins = 0;
};

// Batch SIBF filter per bin. `r` is the raw F x T magnitude reference.
BatchEstimate estimate_filter_batch(const MultichannelSpectrogram& x, const RealMatrix& r,
                                    const SibfConfig& config, const BatchOptions& options = {});

// Oracle signals for ideal scaling (target image at every microphone).
struct OracleInput {
  const MultichannelSpectrogram* target_image = nullptr;
};

// Output of either processing family. Batch runs hold F x 1 scale columns;
// per-frame runs hold F x T scale matrices.
struct ExtractionResult {
  Spectrogram y;  // unscaled filter output
  Spectrogram output;  // scaled by the configured method
  ComplexMatrix gamma_mdp;
  ComplexMatrix gamma_swf;
  ComplexMatrix gamma_ideal;  // empty without oracle data
  ExtractionFilterBank final_filters;
  std::vector<std::vector<double>> objective;
  RunStats stats;

  // y rescaled by another method's factors.
  Spectrogram rescaled(ScalingMethod method) const;
};

// Runs the configured mode end to end on a full spectrogram.
ExtractionResult extract(const MultichannelSpectrogram& x, const RealMatrix& r,
                         const SibfConfig& config, OracleInput oracle = {},
                         const BatchOptions& options = {});

// ---- Per-frame engine -------------------------------------------------------

struct FrameInput {
  std::vector<CVector> x;  // per bin
  std::vector<double> r;  // raw reference per bin
  std::vector<CVector> x_target;  // optional oracle target image per bin
};

struct OutputFrame {
  int index = 0;
  std::vector<Complex> y;
  std::vector<Complex> y_scale;
  std::vector<Complex> gamma_mdp;
  std::vector<Complex> gamma_swf;
  std::vector<Complex> gamma_ideal;  // empty without oracle data
  std::vector<CVector> w;  // filled when record_filters is set
  std::vector<char> failed;
};

enum class StepKind { AuxiliaryPass, PowerStep };

struct StepEvent {
  StepKind kind = StepKind::AuxiliaryPass;
  int frame = 0;
  int bin = 0;
  int iteration = 0;  // auxiliary pass index, or PM step index within it
  const CVector* w = nullptr;
  const HermitianMatrix* phi_x = nullptr;
  // Windowed-batch only: (1-g) sum g^tau cost over the window after this pass.
  std::optional<double> window_objective;
};

struct EngineOptions {
  bool record_filters = false;
  std::function<void(const StepEvent&)> observer;
};

// Streaming SIBF for the windowed-batch, FIFO and RLS modes. Frames are
// buffered until T_b are available (or finish() is called), after which every
// pushed frame is processed immediately.
class PerFrameSibf {
 public:
  PerFrameSibf(int channels, int bins, SibfConfig config, EngineOptions options = {});
  ~PerFrameSibf();
  PerFrameSibf(PerFrameSibf&&) noexcept;
  PerFrameSibf& operator=(PerFrameSibf&&) noexcept;

  std::vector<OutputFrame> push(FrameInput frame);
  // Flushes buffered frames; shrinks T_b to the stream length if needed.
  std::vector<OutputFrame> finish();

  const RunStats& stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Frame inputs for column t of a full spectrogram.
FrameInput frame_input(const MultichannelSpectrogram& x, const RealMatrix& r, int t,
                       const MultichannelSpectrogram* target_image = nullptr);

}  // namespace sibf
