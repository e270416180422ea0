#include "sibf/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include "sibf/baselines.hpp"
#include "sibf/magnitude_file.hpp"
#include "sibf/wav.hpp"

namespace sibf::cli {
namespace fs = std::filesystem;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const char* kDefaults = R"({
  "method": "sibf",
  "stft": {"fft_size": 1024, "hop_size": 256},
  "band": {"lo_hz": 62.5, "hi_hz": 7812.5},
  "sibf": {
    "mode": "batch",
    "window": 0,
    "forgetting": 0.99,
    "k_aux": 0,
    "pm_iterations": 2,
    "scaling": "swf",
    "ref_mic": 1,
    "inverse_refresh_period": 1000,
    "diagonal_loading": 1e-6,
    "boost_beta": 0.25,
    "model": {
      "kind": "tv_gg",
      "rho": 1.0,
      "beta": 0.25,
      "nu": 1.0,
      "student_beta": 1.0,
      "alpha": 100.0,
      "epsilon": 1e-9,
      "y_floor": 1e-12
    }
  },
  "scenario": {
    "count": 1,
    "n_mics": 2,
    "n_sources": 2,
    "mixing": "anechoic",
    "mic_spacing": 0.05,
    "azimuths_deg": [],
    "noise_kind": "white",
    "snr_db": 0.0,
    "noise_multiplier": 1.0,
    "sensor_noise_db": null,
    "duration_s": 3.0,
    "sample_rate": 16000,
    "seed": 1,
    "reference": {"kind": "none", "level_db": 0.0, "blur_bins": 1, "blur_frames": 1}
  },
  "input": {"manifest": "", "observation": [], "reference": "", "target_image": ""},
  "output": {"dir": "out", "wav_encoding": "float32"},
  "sweep": {
    "grid": "rho_beta",
    "rho": [0.5, 1.0, 1.5, 2.0],
    "beta": [0.125, 0.25, 0.5, 1.0],
    "epsilon": [1e-9]
  },
  "run": {"workers": 0, "failure_threshold": 0.25, "metric": "si_sdr", "filter_len": 512}
})";

void merge_into(Json& base, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("configuration must be a JSON object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + key + "'");
    Json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge_into(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

double number_or(const Json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, std::max(count, 1));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  auto body = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double metric(const Json& config, const TimeSignal& estimate, const TimeSignal& target) {
  const std::string name = config["run"]["metric"].get<std::string>();
  const std::size_t len = std::min(estimate.size(), target.size());
  std::span<const double> est(estimate.samples.data(), len);
  std::span<const double> ref(target.samples.data(), len);
  if (name == "si_sdr") return si_sdr(est, ref);
  if (name == "projection") return projection_sdr(est, ref, config["run"]["filter_len"].get<int>());
  throw ConfigError("unknown metric '" + name + "'");
}

WavEncoding wav_encoding(const Json& config) {
  const std::string e = config["output"]["wav_encoding"].get<std::string>();
  if (e == "float32") return WavEncoding::Float32;
  if (e == "pcm16") return WavEncoding::Pcm16;
  throw ConfigError("unknown wav encoding '" + e + "'");
}

struct MethodOutput {
  TimeSignal output;
  Spectrogram spectrum;  // before band limiting
  RunStats stats;
  double failure_fraction = 0.0;
};

TimeSignal finish_signal(const Spectrogram& spec, const Json& config, const StftConfig& stft_cfg,
                         int sample_rate, std::size_t length) {
  const Spectrogram limited =
      band_limit(spec, config["band"]["lo_hz"].get<double>(), config["band"]["hi_hz"].get<double>(),
                 sample_rate);
  return istft(limited, stft_cfg, sample_rate, length);
}

double failure_fraction(const RunStats& s, int bins) {
  const double per_frame = s.frames > 0 ? static_cast<double>(s.failed_updates) / s.frames : 0.0;
  return (s.failed_bins + per_frame) / std::max(bins, 1);
}

AlgorithmMode mmse_mode(const AlgorithmMode& mode) {
  if (std::holds_alternative<Batch>(mode)) return Batch{};
  return RlsOnline{mode_window(mode), mode_forgetting(mode)};
}

MethodOutput run_method(const std::string& method, const MultichannelSpectrogram& x,
                        const RealMatrix& r, const SibfConfig& cfg,
                        const MultichannelSpectrogram* target, const Json& config, int sample_rate,
                        std::size_t length) {
  const StftConfig stft_cfg = stft_config(config);
  MethodOutput out;
  if (method == "sibf") {
    ExtractionResult res = extract(x, r, cfg, OracleInput{target});
    out.spectrum = std::move(res.output);
    out.stats = res.stats;
  } else if (method == "ive_constrained") {
    SibfConfig ive = cfg;
    if (std::holds_alternative<WindowedBatch>(ive.mode)) ive.mode = Batch{};
    ExtractionResult res = ive_constrained_extract(x, r, ive);
    out.spectrum = std::move(res.output);
    out.stats = res.stats;
  } else if (method == "mmse") {
    MmseOptions opts;
    opts.mode = mmse_mode(cfg.mode);
    opts.ref_mic = cfg.ref_mic;
    opts.diagonal_loading = cfg.diagonal_loading;
    opts.refresh_period = cfg.inverse_refresh_period;
    MmseResult res = mmse_extract(x, r, opts);
    out.spectrum = std::move(res.output);
    out.stats = res.stats;
  } else {
    throw ConfigError("unknown method '" + method + "' (sibf, ive_constrained, mmse)");
  }
  out.failure_fraction = failure_fraction(out.stats, x.num_bins());
  out.output = finish_signal(out.spectrum, config, stft_cfg, sample_rate, length);
  return out;
}

TimeSignal reference_waveform(const RealMatrix& r, const MultichannelSpectrogram& x, int ref_mic,
                              const Json& config, int sample_rate, std::size_t length) {
  return finish_signal(reference_spectrogram(r, x.channels[ref_mic]), config, stft_config(config),
                       sample_rate, length);
}

std::string model_label(const SibfConfig& cfg) { return cfg.model.name(); }

fs::path output_dir(const Json& config) {
  fs::path dir = config["output"]["dir"].get<std::string>();
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << text;
}

std::string scenario_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scenario_%03d", index);
  return buf;
}

Json spec_json(const ScenarioSpec& s) {
  Json j;
  j["n_mics"] = s.n_mics;
  j["n_sources"] = s.n_sources;
  j["mixing"] = mixing_kind_name(s.mixing);
  j["mic_spacing"] = s.mic_spacing;
  j["azimuths_deg"] = s.effective_azimuths();
  j["noise_kind"] = noise_kind_name(s.noise_kind);
  j["snr_db"] = s.snr_db;
  j["noise_multiplier"] = s.noise_multiplier;
  j["sensor_noise_db"] = std::isfinite(s.sensor_noise_db) ? Json(s.sensor_noise_db) : Json();
  j["duration_s"] = s.duration_s;
  j["sample_rate"] = s.sample_rate;
  j["ref_mic"] = s.ref_mic + 1;
  j["seed"] = s.seed;
  return j;
}

// Writes one scenario's files into `dir` and returns its manifest.
Json write_scenario(const OracleBundle& b, const fs::path& dir, const Json& config) {
  fs::create_directories(dir);
  const WavEncoding enc = wav_encoding(config);
  Json files;
  Json obs = Json::array();
  for (int k = 0; k < b.spec.n_mics; ++k) {
    const std::string name = "obs_ch" + std::to_string(k + 1) + ".wav";
    write_wav(dir / name, {b.x_time[k]}, enc);
    obs.push_back(name);
  }
  files["observation"] = obs;
  write_wav(dir / "target_image.wav", b.target_time, enc);
  files["target_image"] = "target_image.wav";
  write_wav(dir / "interference_image.wav", b.interference_time, enc);
  files["interference_image"] = "interference_image.wav";
  const TimeSignal ref = istft(reference_spectrogram(b.reference, b.x.channels[b.spec.ref_mic]),
                               b.spec.stft, b.spec.sample_rate, b.x_time.front().size());
  write_wav(dir / "reference_wave.wav", {ref}, enc);
  files["reference_wave"] = "reference_wave.wav";
  write_magnitude((dir / "reference.mag").string(), b.reference);
  files["reference_mag"] = "reference.mag";

  Json manifest;
  manifest["files"] = files;
  manifest["scenario"] = spec_json(b.spec);
  manifest["measured_snr_db"] = b.snr_db;
  manifest["mixing_condition"] = std::isfinite(b.mixing_condition) ? Json(b.mixing_condition) : Json();
  manifest["samples"] = b.x_time.front().size();
  manifest["stft"] = {{"fft_size", b.spec.stft.fft_size}, {"hop_size", b.spec.stft.hop_size}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

std::vector<double> preset(const Json& sweep, const std::string& axis) {
  const std::string grid = sweep["grid"].get<std::string>();
  if (grid == "custom") return sweep[axis].get<std::vector<double>>();
  if (grid == "rho_beta") {
    if (axis == "rho") return {0.5, 1.0, 1.5, 2.0};
    if (axis == "beta") return {0.125, 0.25, 0.5, 1.0};
    return {1e-9};
  }
  if (grid == "beta_epsilon") {
    if (axis == "rho") return {2.0};
    if (axis == "beta") return {1.0 / 16, 0.125, 0.25, 0.5, 1.0, 2.0};
    return {1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 2.0};
  }
  throw ConfigError("unknown sweep grid '" + grid + "' (rho_beta, beta_epsilon, custom)");
}

std::vector<OracleBundle> scenario_set(const Json& config) {
  const int count = config["scenario"]["count"].get<int>();
  if (count < 1) throw ConfigError("scenario.count must be >= 1");
  std::vector<OracleBundle> out(count);
  parallel_for(count, config["run"]["workers"].get<int>(),
               [&](int i) { out[i] = generate_scenario(scenario_spec(config, i)); });
  return out;
}

void print_csv_file(const fs::path& path, const std::string& text) {
  write_text(path, text);
  std::cout << text;
}

}  // namespace

Json default_config() { return Json::parse(kDefaults); }

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part))
      throw ConfigError("unknown configuration key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json parsed = Json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? Json(value) : parsed;
}

Json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json config = default_config();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open configuration '" + path + "'");
    Json file = Json::parse(is, nullptr, false);
    if (file.is_discarded()) throw ConfigError("configuration '" + path + "' is not valid JSON");
    merge_into(config, file, "");
  }
  for (const std::string& o : overrides) apply_override(config, o);
  return config;
}

StftConfig stft_config(const Json& config) {
  StftConfig s;
  s.fft_size = config["stft"]["fft_size"].get<int>();
  s.hop_size = config["stft"]["hop_size"].get<int>();
  s.validate();
  return s;
}

SibfConfig sibf_config(const Json& config, int channels) {
  const Json& j = config["sibf"];
  SibfConfig c;
  const std::string mode = j["mode"].get<std::string>();
  const int window = j["window"].get<int>();
  const double g = j["forgetting"].get<double>();
  if (mode == "batch") {
    c.mode = Batch{};
  } else if (mode == "windowed") {
    c.mode = WindowedBatch{window > 0 ? window : 312, g};
  } else if (mode == "fifo") {
    c.mode = FifoOnline{window > 0 ? window : 312, g};
  } else if (mode == "rls") {
    c.mode = RlsOnline{window > 0 ? window : 125, g};
  } else {
    throw ConfigError("unknown mode '" + mode + "' (batch, windowed, fifo, rls)");
  }
  const Json& m = j["model"];
  const std::string kind = m["kind"].get<std::string>();
  const double beta = m["beta"].get<double>();
  if (kind == "tv_gg") {
    c.model.kind = TvGeneralizedGaussian{m["rho"].get<double>(), beta};
  } else if (kind == "tv_laplacian") {
    c.model.kind = TvGeneralizedGaussian{1.0, beta};
  } else if (kind == "tv_gaussian") {
    c.model.kind = TvGeneralizedGaussian{2.0, beta};
  } else if (kind == "student_t") {
    c.model.kind = TvStudentT{m["nu"].get<double>(), m["student_beta"].get<double>()};
  } else if (kind == "bs_laplacian") {
    c.model.kind = BsLaplacian{m["alpha"].get<double>()};
  } else if (kind == "ive") {
    c.model.kind = IveConstrainedTvLaplacian{beta};
  } else {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  c.model.epsilon = m["epsilon"].get<double>();
  c.model.y_floor = m["y_floor"].get<double>();
  c.k_aux = j["k_aux"].get<int>();
  c.pm_iterations = j["pm_iterations"].get<int>();
  c.scaling = parse_scaling(j["scaling"].get<std::string>());
  c.ref_mic = j["ref_mic"].get<int>() - 1;
  c.inverse_refresh_period = j["inverse_refresh_period"].get<int>();
  c.diagonal_loading = j["diagonal_loading"].get<double>();
  c.boost_beta = j["boost_beta"].get<double>();
  c.validate(channels);
  return c;
}

ScenarioSpec scenario_spec(const Json& config, int index) {
  const Json& j = config["scenario"];
  ScenarioSpec s;
  s.n_mics = j["n_mics"].get<int>();
  s.n_sources = j["n_sources"].get<int>();
  s.mixing = parse_mixing_kind(j["mixing"].get<std::string>());
  s.mic_spacing = j["mic_spacing"].get<double>();
  s.azimuths_deg = j["azimuths_deg"].get<std::vector<double>>();
  s.noise_kind = parse_noise_kind(j["noise_kind"].get<std::string>());
  s.snr_db = j["snr_db"].get<double>();
  s.noise_multiplier = j["noise_multiplier"].get<double>();
  s.sensor_noise_db = number_or(j["sensor_noise_db"], kNegInf);
  s.duration_s = j["duration_s"].get<double>();
  s.sample_rate = j["sample_rate"].get<int>();
  s.seed = j["seed"].get<std::uint64_t>() + static_cast<std::uint64_t>(index);
  s.ref_mic = config["sibf"]["ref_mic"].get<int>() - 1;
  s.stft = stft_config(config);
  const Json& r = j["reference"];
  const std::string kind = r["kind"].get<std::string>();
  if (kind == "none") {
    s.reference.kind = ReferenceDegradation::Kind::None;
  } else if (kind == "additive_noise") {
    s.reference.kind = ReferenceDegradation::Kind::AdditiveNoise;
  } else if (kind == "mask_blur") {
    s.reference.kind = ReferenceDegradation::Kind::MaskBlur;
  } else {
    throw ConfigError("unknown reference degradation '" + kind + "'");
  }
  s.reference.level_db = number_or(r["level_db"], kNegInf);
  s.reference.blur_bins = r["blur_bins"].get<int>();
  s.reference.blur_frames = r["blur_frames"].get<int>();
  s.validate();
  return s;
}

const char* sweep_csv_header() {
  return "cell,rho,beta,epsilon,iterative,passes,mean_delta_sdr,scenarios,failures,status";
}

std::vector<SweepCell> run_sweep(const Json& config) {
  const Json& sweep = config["sweep"];
  const std::vector<double> rhos = preset(sweep, "rho");
  const std::vector<double> betas = preset(sweep, "beta");
  const std::vector<double> epsilons = preset(sweep, "epsilon");
  if (rhos.empty() || betas.empty() || epsilons.empty()) throw ConfigError("sweep axes must be non-empty");

  std::vector<SweepCell> cells;
  for (double rho : rhos)
    for (double beta : betas)
      for (double eps : epsilons) {
        SweepCell c;
        c.rho = rho;
        c.beta = beta;
        c.epsilon = eps;
        cells.push_back(c);
      }

  const std::vector<OracleBundle> scenarios = scenario_set(config);
  const int channels = scenarios.front().spec.n_mics;
  const SibfConfig base = sibf_config(config, channels);
  const int fs = scenarios.front().spec.sample_rate;
  const int m = base.ref_mic;
  std::vector<double> sdr_obs(scenarios.size());
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    sdr_obs[i] = metric(config, scenarios[i].x_time[m], scenarios[i].target_time[m]);

  parallel_for(static_cast<int>(cells.size()), config["run"]["workers"].get<int>(), [&](int idx) {
    SweepCell& cell = cells[idx];
    SibfConfig cfg = base;
    cfg.model.kind = TvGeneralizedGaussian{cell.rho, cell.beta};
    cfg.model.epsilon = cell.epsilon;
    cell.iterative = !cfg.model.closed_form();
    cell.passes = cell.iterative ? cfg.effective_k_aux() : 1;
    double sum = 0.0;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      const OracleBundle& b = scenarios[i];
      try {
        const MethodOutput out = run_method("sibf", b.x, b.reference, cfg, nullptr, config, fs,
                                            b.x_time.front().size());
        sum += metric(config, out.output, b.target_time[m]) - sdr_obs[i];
        ++cell.scenarios;
      } catch (const std::exception& e) {
        ++cell.failures;
        cell.status = std::string("error: ") + e.what();
      }
    }
    cell.mean_delta_sdr = cell.scenarios > 0 ? sum / cell.scenarios
                                             : std::numeric_limits<double>::quiet_NaN();
  });
  return cells;
}

const char* bench_csv_header() { return "mode,T_b,T_init,F_rtf,T_seg,L_begin,L_end"; }

std::vector<BenchRow> bench_modes(const OracleBundle& bundle, const Json& config) {
  const int channels = bundle.spec.n_mics;
  const SibfConfig base = sibf_config(config, channels);
  const double g = base.mode.index() == 0 ? 0.99 : mode_forgetting(base.mode);
  const int window = config["sibf"]["window"].get<int>();
  const double t_seg = static_cast<double>(bundle.x_time.front().size()) / bundle.spec.sample_rate;
  const double frame_seconds =
      static_cast<double>(bundle.spec.stft.hop_size) / bundle.spec.sample_rate;

  const std::vector<std::pair<std::string, AlgorithmMode>> modes = {
      {"batch", Batch{}},
      {"windowed", WindowedBatch{window > 0 ? window : 312, g}},
      {"fifo", FifoOnline{window > 0 ? window : 312, g}},
      {"rls", RlsOnline{window > 0 ? window : 125, g}},
  };
  std::vector<BenchRow> rows;
  for (const auto& [name, mode] : modes) {
    SibfConfig cfg = base;
    cfg.mode = mode;
    cfg.k_aux = 0;
    cfg.validate(channels);
    ExtractionResult res;
    BenchRow row;
    row.mode = name;
    row.rtf = measure_rtf([&] { res = extract(bundle.x, bundle.reference, cfg); }, t_seg);
    const bool per_frame = is_per_frame(mode);
    row.t_b_seconds = per_frame ? res.stats.window * frame_seconds : t_seg;
    row.latency = latency_model(row.t_b_seconds, res.stats.init_seconds, row.rtf, t_seg, per_frame);
    rows.push_back(row);
  }
  return rows;
}

std::vector<MetricReport> compare_scenario(const OracleBundle& b, const Json& config,
                                           const std::string& utterance_id,
                                           double* mmse_gamma_deviation) {
  const SibfConfig cfg = sibf_config(config, b.spec.n_mics);
  const int m = cfg.ref_mic;
  const int fs = b.spec.sample_rate;
  const std::size_t length = b.x_time.front().size();
  const double t_seg = static_cast<double>(length) / fs;
  const double sdr_obs = metric(config, b.x_time[m], b.target_time[m]);
  const std::string mode = mode_name(cfg.mode);
  const std::string scaling = scaling_name(cfg.scaling);

  std::vector<MetricReport> rows;
  for (const std::string method : {"sibf", "ive_constrained", "mmse"}) {
    const MethodOutput out = run_method(method, b.x, b.reference, cfg, &b.x_target, config, fs, length);
    std::string model = model_label(cfg);
    std::string method_mode = mode;
    std::string method_scaling = scaling;
    if (method == "ive_constrained") {
      model = "ive_tv_laplacian";
      method_scaling = "swf";
      if (std::holds_alternative<WindowedBatch>(cfg.mode)) method_mode = "batch";
    } else if (method == "mmse") {
      model = "-";
      method_scaling = "builtin";
      method_mode = mode_name(mmse_mode(cfg.mode));
      if (mmse_gamma_deviation != nullptr) {
        double worst = 0.0;
        for (int f = 0; f < b.x.num_bins(); ++f) {
          std::vector<Complex> q(b.x.num_frames());
          std::vector<Complex> y(b.x.num_frames());
          double e = 0.0;
          for (int t = 0; t < b.x.num_frames(); ++t) {
            q[t] = scaling_target(b.reference(f, t), b.x.channels[m].bins(f, t));
            y[t] = out.spectrum.bins(f, t);
            e += std::norm(y[t]);
          }
          if (e > 0.0) worst = std::max(worst, std::abs(swf_factor_least_squares(q, y) - 1.0));
        }
        *mmse_gamma_deviation = worst;
      }
    }
    MetricReport row = make_report(utterance_id, method, model, method_mode, method_scaling,
                                   sdr_obs, metric(config, out.output, b.target_time[m]));
    row.rtf = out.stats.total_seconds / t_seg;
    const bool per_frame = method_mode != "batch";
    const double t_b = per_frame ? out.stats.window * static_cast<double>(b.spec.stft.hop_size) / fs
                                 : t_seg;
    const LatencyReport lat = latency_model(t_b, out.stats.init_seconds, row.rtf, t_seg, per_frame);
    row.l_begin = lat.l_begin;
    row.l_end = lat.l_end;
    rows.push_back(row);
  }
  const TimeSignal ref = reference_waveform(b.reference, b.x, m, config, fs, length);
  rows.push_back(make_report(utterance_id, "reference", "-", "-", "-", sdr_obs,
                             metric(config, ref, b.target_time[m])));
  rows.push_back(make_report(utterance_id, "observation", "-", "-", "-", sdr_obs, sdr_obs));
  return rows;
}

int cmd_simulate(const Json& config) {
  const fs::path dir = output_dir(config);
  const int count = config["scenario"]["count"].get<int>();
  if (count < 1) throw ConfigError("scenario.count must be >= 1");
  for (int i = 0; i < count; ++i) {
    const OracleBundle b = generate_scenario(scenario_spec(config, i));
    const fs::path target = count == 1 ? dir : dir / scenario_name(i);
    write_scenario(b, target, config);
    std::cout << "wrote " << (target / "manifest.json").string() << " (snr " << b.snr_db
              << " dB)\n";
  }
  return kOk;
}

int cmd_extract(const Json& config) {
  const Json& in = config["input"];
  std::vector<fs::path> obs_paths;
  fs::path ref_path;
  fs::path target_path;
  const std::string manifest_path = in["manifest"].get<std::string>();
  if (!manifest_path.empty()) {
    std::ifstream is(manifest_path);
    if (!is) throw ConfigError("cannot open manifest '" + manifest_path + "'");
    const Json manifest = Json::parse(is, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("files"))
      throw ConfigError("manifest '" + manifest_path + "' is malformed");
    const fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& p : manifest["files"]["observation"]) obs_paths.push_back(base / p.get<std::string>());
    ref_path = base / manifest["files"]["reference_mag"].get<std::string>();
    target_path = base / manifest["files"]["target_image"].get<std::string>();
  } else {
    for (const auto& p : in["observation"]) obs_paths.push_back(p.get<std::string>());
    ref_path = in["reference"].get<std::string>();
    const std::string t = in["target_image"].get<std::string>();
    if (!t.empty()) target_path = t;
  }
  if (obs_paths.empty()) throw ConfigError("no observation files given");
  if (ref_path.empty()) throw ConfigError("no reference magnitude file given");

  const std::vector<TimeSignal> obs = read_observation(obs_paths);
  const int channels = static_cast<int>(obs.size());
  const int fs = obs.front().sample_rate;
  const std::size_t length = obs.front().size();
  const StftConfig stft_cfg = stft_config(config);
  const SibfConfig cfg = sibf_config(config, channels);
  const MultichannelSpectrogram x = stft(std::span<const TimeSignal>(obs), stft_cfg);
  const RealMatrix r = read_magnitude(ref_path.string());
  if (r.rows() != x.num_bins() || r.cols() != x.num_frames())
    throw ConfigError("reference is " + std::to_string(r.rows()) + "x" + std::to_string(r.cols()) +
                      " but the observation spectrogram is " + std::to_string(x.num_bins()) + "x" +
                      std::to_string(x.num_frames()));

  std::vector<TimeSignal> target;
  MultichannelSpectrogram target_tf;
  if (!target_path.empty()) {
    target = read_wav(target_path);
    if (static_cast<int>(target.size()) != channels)
      throw ConfigError("target image must have one channel per microphone");
    target_tf = stft(std::span<const TimeSignal>(target), stft_cfg);
  }
  const std::string method = config["method"].get<std::string>();
  if (cfg.scaling == ScalingMethod::Ideal && (target.empty() || method != "sibf"))
    throw ConfigError("ideal scaling requires oracle data (a target image)");

  const MethodOutput out = run_method(method, x, r, cfg, target.empty() ? nullptr : &target_tf,
                                      config, fs, length);
  const fs::path dir = output_dir(config);
  write_wav(dir / "output.wav", {out.output}, wav_encoding(config));
  const TimeSignal ref = reference_waveform(r, x, cfg.ref_mic, config, fs, length);
  write_wav(dir / "reference_wave.wav", {ref}, wav_encoding(config));

  const double t_seg = static_cast<double>(length) / fs;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool have_target = !target.empty();
  const double sdr_obs = have_target ? metric(config, obs[cfg.ref_mic], target[cfg.ref_mic]) : nan;
  const double sdr_out = have_target ? metric(config, out.output, target[cfg.ref_mic]) : nan;
  std::string model = method == "mmse" ? "-" : model_label(cfg);
  MetricReport row = make_report(fs::path(obs_paths.front()).parent_path().filename().string(),
                                 method, model, mode_name(cfg.mode), scaling_name(cfg.scaling),
                                 sdr_obs, sdr_out);
  row.rtf = out.stats.total_seconds / t_seg;
  const bool per_frame = is_per_frame(cfg.mode);
  const double t_b = per_frame ? out.stats.window * static_cast<double>(stft_cfg.hop_size) / fs : t_seg;
  const LatencyReport lat = latency_model(t_b, out.stats.init_seconds, row.rtf, t_seg, per_frame);
  row.l_begin = lat.l_begin;
  row.l_end = lat.l_end;

  std::ostringstream csv;
  csv.precision(10);
  csv << metric_csv_header() << '\n';
  write_metric_csv_row(csv, row);
  print_csv_file(dir / "metrics.csv", csv.str());

  if (out.stats.failed_bins + out.stats.failed_updates > 0)
    std::cerr << "numerical failures: " << out.stats.failed_bins << " bins, "
              << out.stats.failed_updates << " frame updates\n";
  if (out.failure_fraction > config["run"]["failure_threshold"].get<double>()) {
    std::cerr << "failure fraction " << out.failure_fraction << " exceeds the threshold\n";
    return kNumericFailure;
  }
  return kOk;
}

int cmd_sweep(const Json& config) {
  const std::vector<SweepCell> cells = run_sweep(config);
  std::ostringstream csv;
  csv.precision(10);
  csv << sweep_csv_header() << '\n';
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const SweepCell& c = cells[i];
    std::string status = c.status;
    std::replace(status.begin(), status.end(), ',', ';');
    csv << i << ',' << c.rho << ',' << c.beta << ',' << c.epsilon << ',' << (c.iterative ? 1 : 0)
        << ',' << c.passes << ',' << c.mean_delta_sdr << ',' << c.scenarios << ',' << c.failures
        << ',' << status << '\n';
  }
  print_csv_file(output_dir(config) / "sweep.csv", csv.str());
  return kOk;
}

int cmd_compare(const Json& config) {
  const std::vector<OracleBundle> scenarios = scenario_set(config);
  std::vector<std::vector<MetricReport>> rows(scenarios.size());
  std::vector<double> deviation(scenarios.size(), 0.0);
  parallel_for(static_cast<int>(scenarios.size()), config["run"]["workers"].get<int>(), [&](int i) {
    rows[i] = compare_scenario(scenarios[i], config, scenario_name(i), &deviation[i]);
  });
  std::ostringstream csv;
  csv.precision(10);
  csv << metric_csv_header() << '\n';
  for (const auto& group : rows)
    for (const MetricReport& r : group) write_metric_csv_row(csv, r);
  const fs::path dir = output_dir(config);
  print_csv_file(dir / "compare.csv", csv.str());
  Json summary;
  summary["mmse_swf_gamma_max_deviation"] = deviation;
  write_text(dir / "compare_summary.json", summary.dump(2) + "\n");
  return kOk;
}

int cmd_bench(const Json& config) {
  const OracleBundle b = generate_scenario(scenario_spec(config, 0));
  const std::vector<BenchRow> rows = bench_modes(b, config);
  std::ostringstream csv;
  csv.precision(6);
  csv << bench_csv_header() << '\n';
  for (const BenchRow& r : rows) {
    csv << r.mode << ',' << r.t_b_seconds << ',' << r.latency.t_init << ',' << r.rtf << ','
        << r.latency.t_seg << ',' << r.latency.l_begin << ',' << r.latency.l_end << '\n';
  }
  print_csv_file(output_dir(config) / "bench.csv", csv.str());
  return kOk;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Reference-guided multichannel target sound extraction"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  app.add_option("-c,--config", config_path, "JSON configuration file");
  app.add_option("-s,--set", overrides, "Override a setting: dotted.key=value (repeatable)");
  app.add_option("-o,--out", out_dir, "Output directory (output.dir)");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic scenario and its oracle files");
  auto* ext = app.add_subcommand("extract", "Extract the target from observation WAVs");
  std::string manifest;
  std::vector<std::string> obs;
  std::string reference;
  std::string target;
  ext->add_option("--manifest", manifest, "Scenario manifest written by simulate");
  ext->add_option("--obs", obs, "Observation WAV(s), one multichannel or several mono");
  ext->add_option("--reference", reference, "Magnitude reference file");
  ext->add_option("--target", target, "Target image WAV for metrics and ideal scaling");
  auto* swp = app.add_subcommand("sweep", "Hyperparameter grid of mean delta-SDR");
  auto* cmp = app.add_subcommand("compare", "Compare SIBF with the baselines");
  auto* bch = app.add_subcommand("bench", "Measure real-time factors and latencies");
  auto* prn = app.add_subcommand("print-config", "Print the effective configuration");
  for (CLI::App* sub : {sim, ext, swp, cmp, bch, prn}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    Json config = load_config(config_path, overrides);
    if (!out_dir.empty()) config["output"]["dir"] = out_dir;
    if (!manifest.empty()) config["input"]["manifest"] = manifest;
    if (!obs.empty()) config["input"]["observation"] = obs;
    if (!reference.empty()) config["input"]["reference"] = reference;
    if (!target.empty()) config["input"]["target_image"] = target;

    if (*prn) {
      std::cout << config.dump(2) << '\n';
      return kOk;
    }
    if (*sim) return cmd_simulate(config);
    if (*ext) return cmd_extract(config);
    if (*swp) return cmd_sweep(config);
    if (*cmp) return cmd_compare(config);
    if (*bch) return cmd_bench(config);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace sibf::cli
