#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "sibf/eval.hpp"
#include "sibf/synth.hpp"

using namespace sibf;

namespace {

ScenarioSpec short_spec(std::uint64_t seed = 3) {
  ScenarioSpec s;
  s.duration_s = 1.0;
  s.seed = seed;
  return s;
}

double db_ratio(double a, double b) { return 10.0 * std::log10(a / b); }

double rms(const std::vector<double>& x) { return std::sqrt(energy(x) / x.size()); }

// SI-SDR of the reference magnitude combined with the observation phase.
double reference_si_sdr(const OracleBundle& b) {
  const int m = b.spec.ref_mic;
  const Spectrogram spec = reference_spectrogram(b.reference, b.x.channels[m]);
  const TimeSignal wave = istft(spec, b.spec.stft, b.spec.sample_rate, b.target_time[m].size());
  return si_sdr(wave.samples, b.target_time[m].samples);
}

}  // namespace

TEST_CASE("a single source without sensor noise has no interference") {
  ScenarioSpec s = short_spec();
  s.n_sources = 1;
  const OracleBundle b = generate_scenario(s);
  for (int k = 0; k < s.n_mics; ++k) {
    CHECK(b.x_interference.channels[k].bins.cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.x.channels[k].bins == b.x_target.channels[k].bins);
  }
  CHECK(std::isinf(b.snr_db));
}

TEST_CASE("measured SNR matches the request") {
  for (double snr : {-5.0, 0.0, 2.0, 7.5}) {
    for (MixingKind mixing : {MixingKind::Anechoic, MixingKind::Random}) {
      ScenarioSpec s = short_spec();
      s.snr_db = snr;
      s.mixing = mixing;
      s.n_sources = 3;
      const OracleBundle b = generate_scenario(s);
      const double measured = db_ratio(energy(b.target_time[0].samples), energy(b.interference_time[0].samples));
      CHECK(std::abs(measured - snr) < 0.1);
      CHECK(b.snr_db == doctest::Approx(measured).epsilon(1e-12));
    }
  }
}

TEST_CASE("noise multipliers shift the SNR by about 6 dB per doubling") {
  std::vector<double> snrs;
  for (double mult : {0.25, 0.5, 1.0, 2.0}) {
    ScenarioSpec s = short_spec();
    s.noise_multiplier = mult;
    snrs.push_back(generate_scenario(s).snr_db);
  }
  for (std::size_t i = 1; i < snrs.size(); ++i) CHECK(std::abs(snrs[i - 1] - snrs[i] - 6.0) < 0.3);
}

TEST_CASE("the mixture decomposes exactly into target and interference") {
  ScenarioSpec s = short_spec();
  s.n_mics = 3;
  s.n_sources = 3;
  s.sensor_noise_db = -20.0;
  const OracleBundle b = generate_scenario(s);
  for (int k = 0; k < 3; ++k) {
    CHECK(b.x.channels[k].bins == b.x_target.channels[k].bins + b.x_interference.channels[k].bins);
    for (std::size_t i = 0; i < b.x_time[k].size(); ++i)
      CHECK(b.x_time[k].samples[i] == b.target_time[k].samples[i] + b.interference_time[k].samples[i]);
    // The spectrograms are the transforms of the written waveforms.
    const Spectrogram again = stft(b.target_time[k], s.stft);
    CHECK((again.bins - b.x_target.channels[k].bins).norm() == 0.0);
  }
  CHECK(b.clean_reference == b.x_target.channels[0].bins.cwiseAbs());
}

TEST_CASE("generation is deterministic under the seed") {
  const OracleBundle a = generate_scenario(short_spec(11));
  const OracleBundle b = generate_scenario(short_spec(11));
  const OracleBundle c = generate_scenario(short_spec(12));
  CHECK(a.x_time[0].samples == b.x_time[0].samples);
  CHECK(a.x.channels[1].bins == b.x.channels[1].bins);
  CHECK(a.reference == b.reference);
  CHECK(a.x_time[0].samples != c.x_time[0].samples);
}

TEST_CASE("anechoic images are delayed copies across the array") {
  ScenarioSpec s = short_spec();
  s.n_sources = 2;
  s.azimuths_deg = {0.0, 90.0};
  s.mic_spacing = 2.0 * 343.0 / 16000.0;  // two-sample delay per microphone at 0 degrees
  const OracleBundle b = generate_scenario(s);
  const auto& t0 = b.target_time[0].samples;
  const auto& t1 = b.target_time[1].samples;
  double worst = 0.0;
  for (std::size_t i = 2; i < t0.size(); ++i) worst = std::max(worst, std::abs(t1[i] - t0[i - 2]));
  CHECK(worst < 1e-6 * rms(t0));
  // Broadside interferer reaches both microphones at once.
  const auto& i0 = b.interference_time[0].samples;
  const auto& i1 = b.interference_time[1].samples;
  double spread = 0.0;
  for (std::size_t i = 0; i < i0.size(); ++i) spread = std::max(spread, std::abs(i1[i] - i0[i]));
  CHECK(spread < 1e-9 * rms(i0));
  CHECK(std::isfinite(b.mixing_condition));
  CHECK(b.mixing_condition >= 1.0);
}

TEST_CASE("random mixing gives rank-one target images") {
  ScenarioSpec s = short_spec();
  s.mixing = MixingKind::Random;
  s.n_mics = 3;
  const OracleBundle b = generate_scenario(s);
  const auto& t0 = b.target_time[0].samples;
  for (int k = 1; k < 3; ++k) {
    const auto& tk = b.target_time[k].samples;
    double num = 0.0;
    for (std::size_t i = 0; i < t0.size(); ++i) num += tk[i] * t0[i];
    const double a = num / energy(t0);
    double worst = 0.0;
    for (std::size_t i = 0; i < t0.size(); ++i) worst = std::max(worst, std::abs(tk[i] - a * t0[i]));
    CHECK(worst < 1e-12 * rms(tk) * std::sqrt(double(t0.size())));
  }
  CHECK(b.mixing_condition >= 1.0);
}

TEST_CASE("reference degradation") {
  ScenarioSpec s = short_spec();
  const OracleBundle clean = generate_scenario(s);
  CHECK(clean.reference == clean.x_target.channels[0].bins.cwiseAbs());

  s.reference.kind = ReferenceDegradation::Kind::AdditiveNoise;
  s.reference.level_db = -std::numeric_limits<double>::infinity();
  CHECK(generate_scenario(s).reference == clean.reference);

  s.reference.level_db = 0.0;
  const OracleBundle noisy = generate_scenario(s);
  CHECK(noisy.reference.minCoeff() >= 0.0);
  CHECK(reference_si_sdr(noisy) < reference_si_sdr(clean) - 1.0);

  const Spectrogram& target = clean.x_target.channels[0];
  ReferenceDegradation blur;
  blur.kind = ReferenceDegradation::Kind::MaskBlur;
  blur.blur_bins = 0;
  blur.blur_frames = 0;
  CHECK(make_reference(target, blur, 1) == clean.reference);
  Spectrogram flat{ComplexMatrix::Constant(20, 30, Complex(0.0, 2.0))};
  blur.blur_bins = 2;
  blur.blur_frames = 3;
  const RealMatrix smoothed = make_reference(flat, blur, 1);
  CHECK((smoothed.array() - 2.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("source generators") {
  for (NoiseKind kind : {NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble}) {
    const std::vector<double> n = noise_signal(kind, 16000, 16000, 5);
    CHECK(rms(n) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n == noise_signal(kind, 16000, 16000, 5));
    CHECK(parse_noise_kind(noise_kind_name(kind)) == kind);
  }
  const std::vector<double> sp = speech_like(16000, 16000, 9);
  CHECK(rms(sp) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(parse_mixing_kind("random") == MixingKind::Random);
  CHECK(std::string(mixing_kind_name(MixingKind::Anechoic)) == "anechoic");
  CHECK_THROWS_AS(parse_noise_kind("brown"), std::invalid_argument);
}

TEST_CASE("invalid scenarios are rejected") {
  ScenarioSpec s = short_spec();
  s.azimuths_deg = {60.0, 60.0};
  CHECK_THROWS_AS(generate_scenario(s), std::invalid_argument);
  s.azimuths_deg = {60.0, -60.0};  // mirror images share a direction on a linear array
  CHECK_THROWS_AS(generate_scenario(s), std::invalid_argument);
  s = short_spec();
  s.ref_mic = 2;
  CHECK_THROWS_AS(generate_scenario(s), std::invalid_argument);
  s = short_spec();
  s.snr_db = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(generate_scenario(s), std::invalid_argument);
  s = short_spec();
  s.azimuths_deg = {10.0};
  CHECK_THROWS_AS(generate_scenario(s), std::invalid_argument);
}
