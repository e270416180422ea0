#include "sibf/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace sibf {
namespace {

void check_pair(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("sdr: signal lengths differ");
  if (ref.empty()) throw std::invalid_argument("sdr: empty signals");
  double e = 0.0;
  for (double v : ref) e += v * v;
  if (e == 0.0) throw std::invalid_argument("sdr: reference is all zeros");
}

double ratio_db(double target_energy, double error_energy) {
  if (target_energy == 0.0) return -kSdrCap;
  if (error_energy == 0.0) return kSdrCap;
  return std::clamp(10.0 * std::log10(target_energy / error_energy), -kSdrCap, kSdrCap);
}

}  // namespace

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  check_pair(estimate, reference);
  double dot = 0.0;
  double ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref_energy += reference[i] * reference[i];
  }
  const double alpha = dot / ref_energy;
  double target = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    target += s * s;
    const double e = estimate[i] - s;
    error += e * e;
  }
  return ratio_db(target, error);
}

double projection_sdr(std::span<const double> estimate, std::span<const double> reference,
                      int filter_len) {
  check_pair(estimate, reference);
  if (filter_len < 1) throw std::invalid_argument("projection_sdr: filter_len must be >= 1");
  const int len = static_cast<int>(reference.size());
  const int taps = std::min(filter_len, len);

  // Gram matrix of the delayed (zero-initialized) references over [0, len).
  Eigen::MatrixXd gram(taps, taps);
  for (int j = 0; j < taps; ++j) {
    double a = 0.0;
    for (int n = j; n < len; ++n) a += reference[n] * reference[n - j];
    gram(0, j) = a;
  }
  for (int i = 1; i < taps; ++i) {
    for (int j = i; j < taps; ++j)
      gram(i, j) = gram(i - 1, j - 1) - reference[len - i] * reference[len - j];
  }
  for (int i = 0; i < taps; ++i)
    for (int j = 0; j < i; ++j) gram(i, j) = gram(j, i);

  Eigen::VectorXd cross(taps);
  for (int k = 0; k < taps; ++k) {
    double a = 0.0;
    for (int n = k; n < len; ++n) a += estimate[n] * reference[n - k];
    cross(k) = a;
  }
  const Eigen::VectorXd h = gram.ldlt().solve(cross);

  double target = 0.0;
  double error = 0.0;
  for (int n = 0; n < len; ++n) {
    double s = 0.0;
    const int kmax = std::min(taps - 1, n);
    for (int k = 0; k <= kmax; ++k) s += h(k) * reference[n - k];
    target += s * s;
    const double e = estimate[n] - s;
    error += e * e;
  }
  return ratio_db(target, error);
}

LatencyReport latency_model(double t_b, double t_init, double f_rtf, double t_seg,
                            bool per_frame) {
  if (t_b < 0.0 || t_init < 0.0 || f_rtf < 0.0 || t_seg < 0.0)
    throw std::invalid_argument("latency_model: arguments must be nonnegative");
  LatencyReport r;
  r.t_init = t_init;
  r.f_rtf = f_rtf;
  r.t_seg = t_seg;
  if (per_frame) {
    r.l_begin = std::min(t_b, t_seg) + t_init;
    r.l_end = std::max(r.l_begin - (1.0 - f_rtf) * t_seg, 0.0);
  } else {
    r.l_end = f_rtf * t_seg;
    r.l_begin = t_seg + r.l_end;
  }
  return r;
}

double measure_rtf(const std::function<void()>& run, double t_seg) {
  if (!(t_seg > 0.0)) throw std::invalid_argument("measure_rtf: segment duration must be positive");
  const auto start = std::chrono::steady_clock::now();
  run();
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return elapsed / t_seg;
}

MetricReport make_report(std::string utterance_id, std::string method, std::string model,
                         std::string mode, std::string scaling, double sdr_obs, double sdr_out) {
  MetricReport r;
  r.utterance_id = std::move(utterance_id);
  r.method = std::move(method);
  r.model = std::move(model);
  r.mode = std::move(mode);
  r.scaling = std::move(scaling);
  r.sdr_obs = sdr_obs;
  r.sdr_out = sdr_out;
  r.delta_sdr = sdr_out - sdr_obs;
  return r;
}

const char* metric_csv_header() {
  return "utterance_id,method,model,mode,scaling,sdr_obs,sdr_out,delta_sdr,rtf,L_begin,L_end";
}

void write_metric_csv_row(std::ostream& os, const MetricReport& r) {
  auto quoted = [](const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
      if (ch == '"') out += '"';
      out += ch;
    }
    return out + "\"";
  };
  os << quoted(r.utterance_id) << ',' << quoted(r.method) << ',' << quoted(r.model) << ','
     << quoted(r.mode) << ',' << quoted(r.scaling) << ',' << r.sdr_obs << ',' << r.sdr_out << ','
     << r.delta_sdr << ',' << r.rtf << ',' << r.l_begin << ',' << r.l_end << '\n';
}

MetricReport mean_report(std::span<const MetricReport> rows) {
  MetricReport m;
  if (rows.empty()) return m;
  for (const MetricReport& r : rows) {
    m.sdr_obs += r.sdr_obs;
    m.sdr_out += r.sdr_out;
    m.delta_sdr += r.delta_sdr;
    m.rtf += r.rtf;
    m.l_begin += r.l_begin;
    m.l_end += r.l_end;
  }
  const double n = static_cast<double>(rows.size());
  m.sdr_obs /= n;
  m.sdr_out /= n;
  m.delta_sdr /= n;
  m.rtf /= n;
  m.l_begin /= n;
  m.l_end /= n;
  m.utterance_id = "mean";
  m.method = rows.front().method;
  m.model = rows.front().model;
  m.mode = rows.front().mode;
  m.scaling = rows.front().scaling;
  return m;
}

}  // namespace sibf
