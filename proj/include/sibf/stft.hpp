#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sibf/types.hpp"

namespace sibf {

struct TimeSignal {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

enum class WindowKind { SqrtHann };

struct StftConfig {
  int fft_size = 1024;
  int hop_size = 256;
  WindowKind window = WindowKind::SqrtHann;

  int num_bins() const { return fft_size / 2 + 1; }
  // Number of frames for a signal of `length` samples.
  int num_frames(std::size_t length) const;
  // Throws std::invalid_argument unless the size/hop/window triple is usable.
  void validate() const;
};

std::vector<double> analysis_window(const StftConfig& config);

// Max deviation of the analysis*synthesis overlap-add from its mean.
double cola_residual(const StftConfig& config);

// F x T complex bins.
struct Spectrogram {
  ComplexMatrix bins;

  int num_bins() const { return static_cast<int>(bins.rows()); }
  int num_frames() const { return static_cast<int>(bins.cols()); }
};

struct MultichannelSpectrogram {
  std::vector<Spectrogram> channels;

  int num_channels() const { return static_cast<int>(channels.size()); }
  int num_bins() const { return channels.empty() ? 0 : channels.front().num_bins(); }
  int num_frames() const { return channels.empty() ? 0 : channels.front().num_frames(); }

  // x(f, t) for every channel.
  CVector frame_vector(int bin, int frame) const;
  // N x T observations of one bin.
  ComplexMatrix bin_matrix(int bin) const;
  void validate() const;
};

Spectrogram stft(const TimeSignal& signal, const StftConfig& config);
// `length` trims the synthesized signal; 0 keeps num_frames * hop samples.
TimeSignal istft(const Spectrogram& spec, const StftConfig& config, int sample_rate,
                 std::size_t length = 0);

MultichannelSpectrogram stft(std::span<const TimeSignal> channels, const StftConfig& config);

// Zeroes bins whose center frequency is below lo_hz or above hi_hz.
Spectrogram band_limit(const Spectrogram& spec, double lo_hz, double hi_hz, int sample_rate);

// mag * phase_src / |phase_src|; a zero phase source contributes phase 1.
Complex combine_magnitude_phase(double magnitude, Complex phase_src);
ComplexMatrix combine_magnitude_phase(const RealMatrix& magnitude, const ComplexMatrix& phase_src);

}  // namespace sibf
