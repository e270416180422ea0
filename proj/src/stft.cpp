#include "sibf/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace sibf {
namespace {

// fftw_plan creation is not thread-safe; execution with the new-array API is.
class RealFftPlans {
 public:
  static RealFftPlans& instance() {
    static RealFftPlans plans;
    return plans;
  }

  std::pair<fftw_plan, fftw_plan> get(int n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> in(n);
    std::vector<fftw_complex> out(n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan fwd = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), flags);
    fftw_plan inv = fftw_plan_dft_c2r_1d(n, out.data(), in.data(), flags);
    if (fwd == nullptr || inv == nullptr) throw std::runtime_error("fftw plan creation failed");
    return plans_[n] = {fwd, inv};
  }

  ~RealFftPlans() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.first);
      fftw_destroy_plan(p.second);
    }
  }

 private:
  std::mutex mutex_;
  std::map<int, std::pair<fftw_plan, fftw_plan>> plans_;
};

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// numpy-style "reflect" padding (edge sample not repeated).
std::vector<double> reflect_pad(std::span<const double> x, int pad) {
  const int n = static_cast<int>(x.size());
  std::vector<double> out(n + 2 * pad);
  for (int i = 0; i < static_cast<int>(out.size()); ++i) {
    int k = i - pad;
    // Repeated reflection keeps very short inputs well defined.
    const int period = 2 * (n - 1);
    if (period > 0) {
      k = ((k % period) + period) % period;
      if (k >= n) k = period - k;
    } else {
      k = 0;
    }
    out[i] = x[k];
  }
  return out;
}

}  // namespace

int StftConfig::num_frames(std::size_t length) const {
  const std::size_t padded = std::max<std::size_t>(length, static_cast<std::size_t>(fft_size));
  return static_cast<int>((padded + hop_size - 1) / hop_size);
}

void StftConfig::validate() const {
  if (!is_power_of_two(fft_size) || fft_size < 4)
    throw std::invalid_argument("fft_size must be a power of two >= 4");
  if (hop_size <= 0 || hop_size > fft_size || fft_size % hop_size != 0)
    throw std::invalid_argument("hop_size must divide fft_size");
  if (cola_residual(*this) >= 1e-10)
    throw std::invalid_argument("window pair does not satisfy constant overlap-add at this hop");
}

std::vector<double> analysis_window(const StftConfig& config) {
  std::vector<double> w(config.fft_size);
  for (int n = 0; n < config.fft_size; ++n) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / config.fft_size);
    w[n] = std::sqrt(hann);
  }
  return w;
}

double cola_residual(const StftConfig& config) {
  const auto w = analysis_window(config);
  const int hop = config.hop_size;
  std::vector<double> sum(hop, 0.0);
  for (int n = 0; n < config.fft_size; ++n) sum[n % hop] += w[n] * w[n];
  const auto [lo, hi] = std::minmax_element(sum.begin(), sum.end());
  return *hi - *lo;
}

CVector MultichannelSpectrogram::frame_vector(int bin, int frame) const {
  CVector x(num_channels());
  for (int k = 0; k < num_channels(); ++k) x(k) = channels[k].bins(bin, frame);
  return x;
}

ComplexMatrix MultichannelSpectrogram::bin_matrix(int bin) const {
  ComplexMatrix out(num_channels(), num_frames());
  for (int k = 0; k < num_channels(); ++k) out.row(k) = channels[k].bins.row(bin);
  return out;
}

void MultichannelSpectrogram::validate() const {
  if (channels.empty()) throw std::invalid_argument("spectrogram has no channels");
  if (num_channels() > kMaxChannels) throw std::invalid_argument("too many channels");
  for (const auto& ch : channels) {
    if (ch.num_bins() != num_bins() || ch.num_frames() != num_frames())
      throw std::invalid_argument("channels disagree on spectrogram shape");
  }
}

Spectrogram stft(const TimeSignal& signal, const StftConfig& config) {
  config.validate();
  if (signal.samples.empty()) throw std::invalid_argument("stft: empty signal");
  if (signal.sample_rate <= 0) throw std::invalid_argument("stft: sample_rate must be positive");
  for (double v : signal.samples) {
    if (!std::isfinite(v)) throw std::invalid_argument("stft: non-finite sample");
  }

  const int n_fft = config.fft_size;
  const int hop = config.hop_size;
  std::vector<double> padded_input = signal.samples;
  if (padded_input.size() < static_cast<std::size_t>(n_fft)) padded_input.resize(n_fft, 0.0);
  const int frames = config.num_frames(signal.samples.size());
  const auto padded = reflect_pad(padded_input, n_fft / 2);
  const auto window = analysis_window(config);
  const auto [fwd, inv] = RealFftPlans::instance().get(n_fft);
  (void)inv;

  Spectrogram out;
  out.bins.resize(config.num_bins(), frames);
  std::vector<double> buf(n_fft);
  std::vector<fftw_complex> spec(config.num_bins());
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int n = 0; n < n_fft; ++n) {
      const std::size_t i = start + n;
      buf[n] = (i < padded.size() ? padded[i] : 0.0) * window[n];
    }
    fftw_execute_dft_r2c(fwd, buf.data(), spec.data());
    for (int f = 0; f < config.num_bins(); ++f) out.bins(f, t) = Complex(spec[f][0], spec[f][1]);
  }
  return out;
}

MultichannelSpectrogram stft(std::span<const TimeSignal> channels, const StftConfig& config) {
  MultichannelSpectrogram out;
  for (const auto& ch : channels) out.channels.push_back(stft(ch, config));
  out.validate();
  return out;
}

TimeSignal istft(const Spectrogram& spec, const StftConfig& config, int sample_rate,
                 std::size_t length) {
  config.validate();
  if (spec.num_bins() != config.num_bins())
    throw std::invalid_argument("istft: bin count does not match fft_size");
  const int n_fft = config.fft_size;
  const int hop = config.hop_size;
  const int frames = spec.num_frames();
  const int pad = n_fft / 2;
  const std::size_t total = static_cast<std::size_t>(frames - 1) * hop + n_fft;
  const auto window = analysis_window(config);
  const auto [fwd, inv] = RealFftPlans::instance().get(n_fft);
  (void)fwd;

  std::vector<double> acc(total, 0.0);
  std::vector<double> norm(total, 0.0);
  std::vector<fftw_complex> buf(config.num_bins());
  std::vector<double> frame(n_fft);
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < config.num_bins(); ++f) {
      buf[f][0] = spec.bins(f, t).real();
      buf[f][1] = spec.bins(f, t).imag();
    }
    // Nyquist and DC must be real for a real inverse.
    buf[0][1] = 0.0;
    buf[config.num_bins() - 1][1] = 0.0;
    fftw_execute_dft_c2r(inv, buf.data(), frame.data());
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int n = 0; n < n_fft; ++n) {
      acc[start + n] += frame[n] / n_fft * window[n];
      norm[start + n] += window[n] * window[n];
    }
  }

  TimeSignal out;
  out.sample_rate = sample_rate;
  const std::size_t natural = static_cast<std::size_t>(frames) * hop;
  const std::size_t n_out = length == 0 ? natural : length;
  out.samples.assign(n_out, 0.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    const std::size_t j = i + pad;
    if (j < total && norm[j] > 1e-10) out.samples[i] = acc[j] / norm[j];
  }
  return out;
}

Spectrogram band_limit(const Spectrogram& spec, double lo_hz, double hi_hz, int sample_rate) {
  if (!(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz <= sample_rate / 2.0))
    throw std::invalid_argument("band_limit: require 0 <= lo < hi <= fs/2");
  const int n_bins = spec.num_bins();
  const int n_fft = 2 * (n_bins - 1);
  Spectrogram out = spec;
  for (int f = 0; f < n_bins; ++f) {
    const double center = static_cast<double>(f) * sample_rate / n_fft;
    if (center < lo_hz || center > hi_hz) out.bins.row(f).setZero();
  }
  return out;
}

Complex combine_magnitude_phase(double magnitude, Complex phase_src) {
  if (magnitude < 0.0) throw std::invalid_argument("combine_magnitude_phase: negative magnitude");
  const double a = std::abs(phase_src);
  if (a == 0.0) return Complex(magnitude, 0.0);
  return magnitude * (phase_src / a);
}

ComplexMatrix combine_magnitude_phase(const RealMatrix& magnitude, const ComplexMatrix& phase_src) {
  if (magnitude.rows() != phase_src.rows() || magnitude.cols() != phase_src.cols())
    throw std::invalid_argument("combine_magnitude_phase: shape mismatch");
  ComplexMatrix out(magnitude.rows(), magnitude.cols());
  for (Eigen::Index j = 0; j < magnitude.cols(); ++j)
    for (Eigen::Index i = 0; i < magnitude.rows(); ++i)
      out(i, j) = combine_magnitude_phase(magnitude(i, j), phase_src(i, j));
  return out;
}

}  // namespace sibf
