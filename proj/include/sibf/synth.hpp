#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sibf/stft.hpp"

namespace sibf {

enum class NoiseKind { White, Pink, Babble };
// Anechoic: far-field fractional delays on a uniform linear array. Random:
// seeded real instantaneous mixing matrix (frequency-flat).
enum class MixingKind { Anechoic, Random };

const char* noise_kind_name(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);
const char* mixing_kind_name(MixingKind kind);
MixingKind parse_mixing_kind(const std::string& name);

struct ReferenceDegradation {
  enum class Kind { None, AdditiveNoise, MaskBlur };
  Kind kind = Kind::None;
  // AdditiveNoise: noise power relative to the mean power of the clean
  // magnitude, in dB. -inf disables the noise.
  double level_db = 0.0;
  // MaskBlur: half-widths of the box kernel.
  int blur_bins = 1;
  int blur_frames = 1;
};

struct ScenarioSpec {
  int n_mics = 2;
  int n_sources = 2;  // source 0 is the target; the rest interfere
  MixingKind mixing = MixingKind::Anechoic;
  double mic_spacing = 0.05;  // metres, uniform linear array
  std::vector<double> azimuths_deg;  // empty: spread over [30, 150] degrees
  NoiseKind noise_kind = NoiseKind::White;  // signal type of the interferers
  double snr_db = 0.0;  // target vs. interference at the reference mic
  double noise_multiplier = 1.0;  // amplitude factor after SNR normalization
  // Spatially white sensor noise relative to the directional interference at
  // the reference mic (to the target when there is none), added before SNR
  // normalization; -inf disables it.
  double sensor_noise_db = -std::numeric_limits<double>::infinity();
  ReferenceDegradation reference;
  double duration_s = 3.0;
  int sample_rate = 16000;
  int ref_mic = 0;
  std::uint64_t seed = 1;
  StftConfig stft;

  // Throws std::invalid_argument, e.g. for coincident source directions.
  void validate() const;
  std::vector<double> effective_azimuths() const;
};

struct OracleBundle {
  ScenarioSpec spec;
  MultichannelSpectrogram x;
  MultichannelSpectrogram x_target;
  MultichannelSpectrogram x_interference;
  std::vector<TimeSignal> x_time;
  std::vector<TimeSignal> target_time;
  std::vector<TimeSignal> interference_time;
  RealMatrix clean_reference;  // |x_target| at the reference mic
  RealMatrix reference;  // after degradation
  double snr_db = 0.0;  // measured at the reference mic
  // 2-norm condition number of the mixing matrix; for anechoic mixing, the
  // worst narrowband steering matrix over bins above DC.
  double mixing_condition = 1.0;

  int num_frames() const { return x.num_frames(); }
};

OracleBundle generate_scenario(const ScenarioSpec& spec);

RealMatrix make_reference(const Spectrogram& clean_target, const ReferenceDegradation& degradation,
                          std::uint64_t seed);

// Reference magnitude combined with the observation phase at mic m.
Spectrogram reference_spectrogram(const RealMatrix& reference, const Spectrogram& observation);

// Mono source generators (amplitude normalized to unit RMS).
std::vector<double> speech_like(std::size_t samples, int sample_rate, std::uint64_t seed);
std::vector<double> noise_signal(NoiseKind kind, std::size_t samples, int sample_rate,
                                 std::uint64_t seed);

double energy(const std::vector<double>& x);

}  // namespace sibf
