#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace sibf {

inline constexpr double kSdrCap = 60.0;

// Scale-invariant SDR in dB, clamped to [-kSdrCap, kSdrCap]. Signals must have
// equal length; an all-zero reference is rejected.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

// SDR after a least-squares causal FIR of `filter_len` taps maps the
// reference onto the estimate. filter_len = 1 coincides with si_sdr.
double projection_sdr(std::span<const double> estimate, std::span<const double> reference,
                      int filter_len = 512);

struct LatencyReport {
  double l_begin = 0.0;
  double l_end = 0.0;
  double t_init = 0.0;
  double f_rtf = 0.0;
  double t_seg = 0.0;
};

// Per-frame modes: L_begin = min(T_b, T_seg) + T_init and
// L_end = max(L_begin - (1 - F_rtf) T_seg, 0). Batch: L_end is the processing
// time F_rtf * T_seg and L_begin = T_seg + L_end. Times in seconds.
LatencyReport latency_model(double t_b, double t_init, double f_rtf, double t_seg,
                            bool per_frame);

// Wall-clock run time of `run` divided by the segment duration.
double measure_rtf(const std::function<void()>& run, double t_seg);

struct MetricReport {
  std::string utterance_id;
  std::string method;
  std::string model;
  std::string mode;
  std::string scaling;
  double sdr_obs = 0.0;
  double sdr_out = 0.0;
  double delta_sdr = 0.0;
  double rtf = 0.0;
  double l_begin = 0.0;
  double l_end = 0.0;
};

MetricReport make_report(std::string utterance_id, std::string method, std::string model,
                         std::string mode, std::string scaling, double sdr_obs, double sdr_out);

const char* metric_csv_header();
void write_metric_csv_row(std::ostream& os, const MetricReport& row);

// Mean of sdr_obs, sdr_out, delta_sdr and rtf over the rows.
MetricReport mean_report(std::span<const MetricReport> rows);

}  // namespace sibf
