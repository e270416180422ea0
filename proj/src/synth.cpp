#include "sibf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sibf {
namespace {

constexpr double kSpeedOfSound = 343.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Independent generator per (scenario seed, stream id).
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

void normalize_rms(std::vector<double>& x) {
  const double e = energy(x);
  if (e == 0.0) return;
  const double s = std::sqrt(static_cast<double>(x.size()) / e);
  for (double& v : x) v *= s;
}

std::vector<double> pink_noise(std::size_t samples, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> out(samples);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double white = normal(rng);
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    out[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
    b6 = white * 0.115926;
  }
  return out;
}

// Nominal narrowband mixing matrix of one bin, N x M, used for the condition
// number report.
CMatrix steering_matrix(const ScenarioSpec& spec, const std::vector<double>& azimuths, int bin) {
  CMatrix a(spec.n_mics, spec.n_sources);
  const double freq = static_cast<double>(bin) * spec.sample_rate / spec.stft.fft_size;
  for (int j = 0; j < spec.n_sources; ++j) {
    const double cos_theta = std::cos(azimuths[j] * std::numbers::pi / 180.0);
    for (int k = 0; k < spec.n_mics; ++k) {
      const double delay = k * spec.mic_spacing * cos_theta / kSpeedOfSound;
      a(k, j) = std::polar(1.0, -kTwoPi * freq * delay);
    }
  }
  return a;
}

// s delayed by `delay` samples (any sign) with a Blackman-windowed sinc.
std::vector<double> fractional_delay(const std::vector<double>& s, double delay) {
  constexpr int kHalf = 64;
  const int shift = static_cast<int>(std::floor(delay));
  const double frac = delay - shift;
  std::vector<double> h(2 * kHalf + 1);
  for (int i = -kHalf; i <= kHalf; ++i) {
    const double u = i - frac;
    const double sinc = u == 0.0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
    const double phase = std::numbers::pi * (u + kHalf + 1) / (kHalf + 1);
    const double win = 0.42 - 0.5 * std::cos(phase) + 0.08 * std::cos(2.0 * phase);
    h[i + kHalf] = std::abs(u) < kHalf + 1 ? sinc * win : 0.0;
  }
  const auto n = static_cast<long>(s.size());
  std::vector<double> out(s.size(), 0.0);
  for (long t = 0; t < n; ++t) {
    double acc = 0.0;
    for (int i = -kHalf; i <= kHalf; ++i) {
      const long src = t - shift - i;
      if (src >= 0 && src < n) acc += h[i + kHalf] * s[src];
    }
    out[t] = acc;
  }
  return out;
}

}  // namespace

const char* noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::White:
      return "white";
    case NoiseKind::Pink:
      return "pink";
    case NoiseKind::Babble:
      return "babble";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "white") return NoiseKind::White;
  if (name == "pink") return NoiseKind::Pink;
  if (name == "babble") return NoiseKind::Babble;
  throw std::invalid_argument("unknown noise kind '" + name + "'");
}

const char* mixing_kind_name(MixingKind kind) {
  return kind == MixingKind::Anechoic ? "anechoic" : "random";
}

MixingKind parse_mixing_kind(const std::string& name) {
  if (name == "anechoic") return MixingKind::Anechoic;
  if (name == "random") return MixingKind::Random;
  throw std::invalid_argument("unknown mixing kind '" + name + "'");
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

std::vector<double> ScenarioSpec::effective_azimuths() const {
  if (!azimuths_deg.empty()) return azimuths_deg;
  std::vector<double> az(n_sources);
  for (int j = 0; j < n_sources; ++j)
    az[j] = n_sources == 1 ? 90.0 : 30.0 + 120.0 * j / (n_sources - 1);
  return az;
}

void ScenarioSpec::validate() const {
  if (n_mics < 1 || n_mics > kMaxChannels) throw std::invalid_argument("n_mics out of range");
  if (n_sources < 1) throw std::invalid_argument("n_sources must be >= 1");
  if (ref_mic < 0 || ref_mic >= n_mics) throw std::invalid_argument("ref_mic out of range");
  if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
  if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("snr_db must be finite");
  if (!(noise_multiplier >= 0.0)) throw std::invalid_argument("noise_multiplier must be >= 0");
  if (std::isnan(sensor_noise_db) || sensor_noise_db == std::numeric_limits<double>::infinity())
    throw std::invalid_argument("sensor_noise_db must be finite or -inf");
  stft.validate();
  if (reference.kind == ReferenceDegradation::Kind::MaskBlur &&
      (reference.blur_bins < 0 || reference.blur_frames < 0))
    throw std::invalid_argument("blur half-widths must be >= 0");
  if (mixing == MixingKind::Anechoic) {
    if (!(mic_spacing > 0.0)) throw std::invalid_argument("mic_spacing must be positive");
    const std::vector<double> az = effective_azimuths();
    if (static_cast<int>(az.size()) != n_sources)
      throw std::invalid_argument("one azimuth per source is required");
    for (std::size_t i = 0; i < az.size(); ++i) {
      if (!std::isfinite(az[i])) throw std::invalid_argument("azimuths must be finite");
      for (std::size_t j = 0; j < i; ++j) {
        const double ci = std::cos(az[i] * std::numbers::pi / 180.0);
        const double cj = std::cos(az[j] * std::numbers::pi / 180.0);
        if (std::abs(ci - cj) < 1e-6)
          throw std::invalid_argument("degenerate geometry: sources share a direction of arrival");
      }
    }
  }
}

std::vector<double> speech_like(std::size_t samples, int sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng = stream_rng(seed, 0x5eec);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal;
  const double fs = sample_rate;
  const double f0_base = 100.0 + 120.0 * uni(rng);
  const double f1 = 400.0 + 400.0 * uni(rng);
  const double f2 = 1000.0 + 1200.0 * uni(rng);
  const double vib_a = kTwoPi * uni(rng);
  const double vib_b = kTwoPi * uni(rng);
  const double rate = 3.0 + 2.0 * uni(rng);
  const double nyquist_guard = std::min(7500.0, 0.45 * fs);
  const int harmonics = std::max(1, static_cast<int>(nyquist_guard / (f0_base * 1.15)));

  std::vector<double> gain(harmonics);
  for (int k = 1; k <= harmonics; ++k) {
    const double f = k * f0_base;
    const double formant = 1.0 + 2.0 * std::exp(-std::pow((f - f1) / 200.0, 2)) +
                           1.5 * std::exp(-std::pow((f - f2) / 300.0, 2));
    gain[k - 1] = formant / k;
  }
  const std::size_t syllables = static_cast<std::size_t>(samples / fs * rate) + 2;
  std::vector<double> amp(syllables);
  for (double& a : amp) a = uni(rng) < 0.2 ? 0.0 : 0.2 + 0.8 * uni(rng);

  std::vector<double> out(samples);
  double phase = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = i / fs;
    const double f0 =
        f0_base * (1.0 + 0.1 * std::sin(kTwoPi * 0.7 * t + vib_a) +
                   0.05 * std::sin(kTwoPi * 2.3 * t + vib_b));
    phase = std::fmod(phase + kTwoPi * f0 / fs, kTwoPi);
    const double pos = t * rate;
    const auto idx = static_cast<std::size_t>(pos);
    const double s = std::sin(std::numbers::pi * (pos - static_cast<double>(idx)));
    const double env = amp[idx] * s * s;
    double voiced = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      if (k * f0 >= nyquist_guard) break;
      voiced += gain[k - 1] * std::sin(k * phase);
    }
    out[i] = env * (voiced + 0.3 * normal(rng));
  }
  normalize_rms(out);
  return out;
}

std::vector<double> noise_signal(NoiseKind kind, std::size_t samples, int sample_rate,
                                 std::uint64_t seed) {
  std::mt19937_64 rng = stream_rng(seed, 0x401e);
  std::vector<double> out;
  switch (kind) {
    case NoiseKind::White: {
      std::normal_distribution<double> normal;
      out.resize(samples);
      for (double& v : out) v = normal(rng);
      break;
    }
    case NoiseKind::Pink:
      out = pink_noise(samples, rng);
      break;
    case NoiseKind::Babble: {
      out.assign(samples, 0.0);
      for (int talker = 0; talker < 6; ++talker) {
        const std::vector<double> s = speech_like(samples, sample_rate, rng());
        for (std::size_t i = 0; i < samples; ++i) out[i] += s[i];
      }
      break;
    }
  }
  normalize_rms(out);
  return out;
}

RealMatrix make_reference(const Spectrogram& clean_target, const ReferenceDegradation& degradation,
                          std::uint64_t seed) {
  const RealMatrix mag = clean_target.bins.cwiseAbs();
  switch (degradation.kind) {
    case ReferenceDegradation::Kind::None:
      return mag;
    case ReferenceDegradation::Kind::AdditiveNoise: {
      if (degradation.level_db == -std::numeric_limits<double>::infinity()) return mag;
      const double mean_power = mag.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(mag.size(), 1));
      const double sigma = std::sqrt(mean_power * std::pow(10.0, degradation.level_db / 10.0) / 2.0);
      std::mt19937_64 rng = stream_rng(seed, 0x2ef);
      std::normal_distribution<double> normal(0.0, sigma);
      RealMatrix out(mag.rows(), mag.cols());
      for (Eigen::Index t = 0; t < mag.cols(); ++t) {
        for (Eigen::Index f = 0; f < mag.rows(); ++f) {
          const double re = normal(rng);
          const double im = normal(rng);
          out(f, t) = std::max(mag(f, t) + std::hypot(re, im), 0.0);
        }
      }
      return out;
    }
    case ReferenceDegradation::Kind::MaskBlur: {
      const int kb = degradation.blur_bins;
      const int kf = degradation.blur_frames;
      RealMatrix out(mag.rows(), mag.cols());
      const int rows = static_cast<int>(mag.rows());
      const int cols = static_cast<int>(mag.cols());
      for (int t = 0; t < cols; ++t) {
        for (int f = 0; f < rows; ++f) {
          double acc = 0.0;
          int count = 0;
          for (int dt = -kf; dt <= kf; ++dt) {
            for (int df = -kb; df <= kb; ++df) {
              const int ff = f + df;
              const int tt = t + dt;
              if (ff < 0 || ff >= rows || tt < 0 || tt >= cols) continue;
              acc += mag(ff, tt);
              ++count;
            }
          }
          out(f, t) = acc / count;
        }
      }
      return out;
    }
  }
  return mag;
}

Spectrogram reference_spectrogram(const RealMatrix& reference, const Spectrogram& observation) {
  Spectrogram out;
  out.bins = combine_magnitude_phase(reference, observation.bins);
  return out;
}

OracleBundle generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  const std::size_t length = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  const int n = spec.n_mics;
  const int m_src = spec.n_sources;
  const int m = spec.ref_mic;

  std::vector<std::vector<double>> sources(m_src);
  for (int j = 0; j < m_src; ++j) {
    const std::uint64_t sub = spec.seed * 1000003ULL + static_cast<std::uint64_t>(j);
    sources[j] = j == 0 ? speech_like(length, spec.sample_rate, sub)
                        : noise_signal(spec.noise_kind, length, spec.sample_rate, sub);
  }

  OracleBundle b;
  b.spec = spec;
  auto blank = [&] {
    TimeSignal t;
    t.sample_rate = spec.sample_rate;
    t.samples.assign(length, 0.0);
    return t;
  };
  b.target_time.assign(n, blank());
  b.interference_time.assign(n, blank());

  // Source images at every microphone, mixed in the time domain so that the
  // spectrograms below are exactly the STFTs of the written waveforms.
  double worst = 1.0;
  if (spec.mixing == MixingKind::Random) {
    std::mt19937_64 mix_rng = stream_rng(spec.seed, 0x31c);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd a(n, m_src);
    for (int j = 0; j < m_src; ++j)
      for (int k = 0; k < n; ++k) a(k, j) = normal(mix_rng);
    for (int j = 0; j < m_src; ++j) {
      for (int k = 0; k < n; ++k) {
        auto& dst = j == 0 ? b.target_time[k].samples : b.interference_time[k].samples;
        for (std::size_t i = 0; i < length; ++i) dst[i] += a(k, j) * sources[j][i];
      }
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    worst = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  } else {
    const std::vector<double> az = spec.effective_azimuths();
    for (int j = 0; j < m_src; ++j) {
      const double cos_theta = std::cos(az[j] * std::numbers::pi / 180.0);
      for (int k = 0; k < n; ++k) {
        const double delay = k * spec.mic_spacing * cos_theta / kSpeedOfSound * spec.sample_rate;
        const std::vector<double> img = fractional_delay(sources[j], delay);
        auto& dst = j == 0 ? b.target_time[k].samples : b.interference_time[k].samples;
        for (std::size_t i = 0; i < length; ++i) dst[i] += img[i];
      }
    }
    for (int f = 1; f < spec.stft.num_bins(); ++f) {
      const Eigen::JacobiSVD<CMatrix> svd(steering_matrix(spec, az, f));
      const auto& sv = svd.singularValues();
      const double smin = sv(sv.size() - 1);
      worst = std::max(worst, smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity());
    }
  }
  b.mixing_condition = worst;

  // Optional sensor noise, defined relative to the directional interference
  // (or to the target when there is none).
  if (spec.sensor_noise_db > -std::numeric_limits<double>::infinity()) {
    const double base = m_src > 1 ? energy(b.interference_time[m].samples)
                                  : energy(b.target_time[m].samples);
    std::vector<std::vector<double>> noise(n);
    for (int k = 0; k < n; ++k)
      noise[k] = noise_signal(NoiseKind::White, length, spec.sample_rate,
                              spec.seed * 7919ULL + 0x5e5ULL + static_cast<std::uint64_t>(k));
    const double gain =
        std::sqrt(base * std::pow(10.0, spec.sensor_noise_db / 10.0) / energy(noise[m]));
    for (int k = 0; k < n; ++k)
      for (std::size_t i = 0; i < length; ++i) b.interference_time[k].samples[i] += gain * noise[k][i];
  }

  const double e_tgt = energy(b.target_time[m].samples);
  const double e_itf = energy(b.interference_time[m].samples);
  if (e_itf > 0.0) {
    const double gain =
        std::sqrt(e_tgt / e_itf * std::pow(10.0, -spec.snr_db / 10.0)) * spec.noise_multiplier;
    for (int k = 0; k < n; ++k)
      for (double& v : b.interference_time[k].samples) v *= gain;
  }
  const double e_final = energy(b.interference_time[m].samples);
  b.snr_db = e_final > 0.0 ? 10.0 * std::log10(e_tgt / e_final)
                           : std::numeric_limits<double>::infinity();

  b.x_target = stft(std::span<const TimeSignal>(b.target_time), spec.stft);
  b.x_interference = stft(std::span<const TimeSignal>(b.interference_time), spec.stft);
  b.x.channels.resize(n);
  b.x_time.assign(n, blank());
  for (int k = 0; k < n; ++k) {
    b.x.channels[k].bins = b.x_target.channels[k].bins + b.x_interference.channels[k].bins;
    for (std::size_t i = 0; i < length; ++i)
      b.x_time[k].samples[i] = b.target_time[k].samples[i] + b.interference_time[k].samples[i];
  }

  b.clean_reference = b.x_target.channels[m].bins.cwiseAbs();
  b.reference = make_reference(b.x_target.channels[m], spec.reference, spec.seed);
  return b;
}

}  // namespace sibf
