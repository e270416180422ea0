#include "sibf/sibf.hpp"

#include <chrono>
#include <stdexcept>
#include <string>

namespace sibf {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Complex> filter_row(const CVector& w, const ComplexMatrix& x_bin) {
  std::vector<Complex> y(x_bin.cols());
  for (Eigen::Index t = 0; t < x_bin.cols(); ++t) y[t] = w.dot(x_bin.col(t));
  return y;
}

std::vector<Complex> row_values(const ComplexMatrix& m, int row) {
  std::vector<Complex> out(m.cols());
  for (Eigen::Index t = 0; t < m.cols(); ++t) out[t] = m(row, t);
  return out;
}

void check_reference(const RealMatrix& r, int bins, int frames) {
  if (r.rows() != bins || r.cols() != frames)
    throw std::invalid_argument("reference shape does not match the observation spectrogram");
  if (!r.allFinite() || (r.array() < 0.0).any())
    throw std::invalid_argument("reference must be finite and nonnegative");
}

}  // namespace

int SibfConfig::effective_k_aux() const {
  if (k_aux > 0) return k_aux;
  return is_per_frame(mode) ? 1 : 10;
}

void SibfConfig::validate(int channels) const {
  validate_mode(mode);
  model.validate();
  if (k_aux < 0) throw std::invalid_argument("k_aux must be >= 0 (0 selects the default)");
  if (pm_iterations < 1) throw std::invalid_argument("pm_iterations must be >= 1");
  if (ref_mic < 0 || ref_mic >= channels)
    throw std::invalid_argument("reference microphone index out of range");
  if (inverse_refresh_period < 1) throw std::invalid_argument("inverse_refresh_period must be >= 1");
  if (!(diagonal_loading >= 0.0)) throw std::invalid_argument("diagonal_loading must be >= 0");
  if (!(boost_beta > 0.0)) throw std::invalid_argument("boost_beta must be positive");
  if (model.frame_coupled() && std::holds_alternative<WindowedBatch>(mode))
    throw std::invalid_argument("the IVE-constrained model supports batch, fifo and rls modes");
}

int ExtractionFilterBank::num_failed() const {
  int n = 0;
  for (char f : failed) n += f != 0;
  return n;
}

Complex apply_filter(const CVector& w, const CVector& x) {
  if (w.size() != x.size()) throw std::invalid_argument("apply_filter: dimension mismatch");
  return w.dot(x);
}

double evaluate_objective(std::span<const Complex> y, std::span<const double> r_norm,
                          const SourceModelSpec& model) {
  if (y.size() != r_norm.size()) throw std::invalid_argument("evaluate_objective: size mismatch");
  double acc = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) acc += model_cost(model, r_norm[t], std::abs(y[t]));
  return acc;
}

RealMatrix normalize_reference_batch(const RealMatrix& r) {
  RealMatrix out(r.rows(), r.cols());
  for (Eigen::Index f = 0; f < r.rows(); ++f) {
    const double ms = std::max(r.row(f).squaredNorm() / static_cast<double>(r.cols()), kVrefFloor);
    out.row(f) = r.row(f) / std::sqrt(ms);
  }
  return out;
}

BatchEstimate estimate_filter_batch(const MultichannelSpectrogram& x, const RealMatrix& r,
                                    const SibfConfig& config, const BatchOptions& options) {
  x.validate();
  const int n = x.num_channels();
  const int bins = x.num_bins();
  const int frames = x.num_frames();
  config.validate(n);
  check_reference(r, bins, frames);

  const SourceModelSpec& model = config.model;
  const RealMatrix r_norm = normalize_reference_batch(r);
  const int passes = model.closed_form() ? 1 : config.effective_k_aux();
  const bool coupled = model.frame_coupled();

  BatchEstimate out;
  out.filters.w.assign(bins, CVector::Zero(n));
  out.filters.failed.assign(bins, 0);
  if (options.record_objective) out.objective.assign(bins, {});

  std::vector<ComplexMatrix> x_bins(bins);
  std::vector<HermitianMatrix> phi_x(bins);
  std::vector<char> active(bins, 0);
  for (int f = 0; f < bins; ++f) {
    x_bins[f] = x.bin_matrix(f);
    phi_x[f] = batch_covariance(x_bins[f]);
    if (phi_x[f].trace() > 0.0) {
      active[f] = 1;
    } else {
      ++out.silent_bins;
    }
  }

  auto solve_bin = [&](int f, std::span<const double> c) {
    try {
      try {
        out.filters.w[f] = gev_min_weighted(x_bins[f], c).w;
      } catch (const NumericalError&) {
        const HermitianMatrix phi_c = batch_covariance(x_bins[f], c);
        out.filters.w[f] = solve_gev(phi_c, phi_x[f], config.diagonal_loading).w;
      }
    } catch (const NumericalError&) {
      out.filters.failed[f] = 1;
      out.filters.w[f] = CVector::Zero(n);
      active[f] = 0;
    }
  };

  auto record = [&](int f) {
    if (!options.record_objective || coupled) return;
    const std::vector<Complex> y = filter_row(out.filters.w[f], x_bins[f]);
    const std::vector<double> rn(r_norm.row(f).begin(), r_norm.row(f).end());
    out.objective[f].push_back(evaluate_objective(y, rn, model));
  };

  // First pass: closed-form TV Gaussian (the boost start for iterative models).
  const SourceModelSpec first = model.closed_form() ? model : boost_start_model(model, config.boost_beta);
  std::vector<double> c(frames);
  for (int f = 0; f < bins; ++f) {
    if (!active[f]) continue;
    for (int t = 0; t < frames; ++t) c[t] = model_weight(first, r_norm(f, t), 0.0);
    solve_bin(f, c);
    if (active[f]) record(f);
  }

  // Frame-shared weights for the IVE-constrained model.
  double v_r = 0.0;
  std::vector<double> ref_column(bins);
  std::vector<Complex> y_scale_column(bins);
  if (coupled) {
    for (int t = 0; t < frames; ++t) v_r += r.col(t).squaredNorm();
    v_r = std::max(v_r / frames, kVrefFloor);
  }
  const double ive_beta =
      coupled ? std::get<IveConstrainedTvLaplacian>(model.kind).beta : 0.0;

  for (int pass = 1; pass < passes; ++pass) {
    if (!coupled) {
      for (int f = 0; f < bins; ++f) {
        if (!active[f]) continue;
        const std::vector<Complex> y = filter_row(out.filters.w[f], x_bins[f]);
        for (int t = 0; t < frames; ++t) c[t] = model_weight(model, r_norm(f, t), std::abs(y[t]));
        solve_bin(f, c);
        if (active[f]) record(f);
      }
      continue;
    }
    // Scaled outputs of every bin, then one weight per frame.
    ComplexMatrix y_scale = ComplexMatrix::Zero(bins, frames);
    for (int f = 0; f < bins; ++f) {
      if (!active[f]) continue;
      const std::vector<Complex> y = filter_row(out.filters.w[f], x_bins[f]);
      std::vector<Complex> q(frames);
      for (int t = 0; t < frames; ++t)
        q[t] = scaling_target(r(f, t), x_bins[f](config.ref_mic, t));
      const Complex gamma = swf_factor_batch(q, y);
      for (int t = 0; t < frames; ++t) y_scale(f, t) = gamma * y[t];
    }
    for (int t = 0; t < frames; ++t) {
      for (int f = 0; f < bins; ++f) {
        ref_column[f] = r(f, t);
        y_scale_column[f] = y_scale(f, t);
      }
      c[t] = weight_ive_constrained(ref_column, y_scale_column, ive_beta, model.epsilon, v_r,
                                    model.y_floor)
                 .c;
    }
    for (int f = 0; f < bins; ++f) {
      if (active[f]) solve_bin(f, c);
    }
  }
  return out;
}

Spectrogram ExtractionResult::rescaled(ScalingMethod method) const {
  const ComplexMatrix* g = nullptr;
  switch (method) {
    case ScalingMethod::Mdp:
      g = &gamma_mdp;
      break;
    case ScalingMethod::Swf:
      g = &gamma_swf;
      break;
    case ScalingMethod::Ideal:
      g = &gamma_ideal;
      break;
  }
  if (g->size() == 0) throw std::invalid_argument("ideal scaling requires oracle data");
  Spectrogram out;
  if (g->cols() == 1) {
    out.bins = y.bins.array().colwise() * g->col(0).array();
  } else {
    out.bins = y.bins.array() * g->array();
  }
  return out;
}

FrameInput frame_input(const MultichannelSpectrogram& x, const RealMatrix& r, int t,
                       const MultichannelSpectrogram* target_image) {
  FrameInput in;
  const int bins = x.num_bins();
  in.x.reserve(bins);
  in.r.resize(bins);
  for (int f = 0; f < bins; ++f) {
    in.x.push_back(x.frame_vector(f, t));
    in.r[f] = r(f, t);
  }
  if (target_image != nullptr) {
    in.x_target.reserve(bins);
    for (int f = 0; f < bins; ++f) in.x_target.push_back(target_image->frame_vector(f, t));
  }
  return in;
}

namespace {

ExtractionResult extract_batch(const MultichannelSpectrogram& x, const RealMatrix& r,
                               const SibfConfig& config, OracleInput oracle,
                               const BatchOptions& options) {
  const auto start = Clock::now();
  BatchEstimate est = estimate_filter_batch(x, r, config, options);
  const int bins = x.num_bins();
  const int frames = x.num_frames();
  const int m = config.ref_mic;

  ExtractionResult res;
  res.y.bins = ComplexMatrix::Zero(bins, frames);
  res.gamma_mdp = ComplexMatrix::Zero(bins, 1);
  res.gamma_swf = ComplexMatrix::Zero(bins, 1);
  if (oracle.target_image != nullptr) res.gamma_ideal = ComplexMatrix::Zero(bins, 1);

  for (int f = 0; f < bins; ++f) {
    const ComplexMatrix xb = x.bin_matrix(f);
    const std::vector<Complex> y = filter_row(est.filters.w[f], xb);
    const std::vector<Complex> x_m = row_values(xb, m);
    std::vector<Complex> q(frames);
    for (int t = 0; t < frames; ++t) {
      res.y.bins(f, t) = y[t];
      q[t] = scaling_target(r(f, t), x_m[t]);
    }
    res.gamma_mdp(f, 0) = mdp_factor_batch(x_m, y);
    res.gamma_swf(f, 0) = swf_factor_batch(q, y);
    if (oracle.target_image != nullptr) {
      const ComplexMatrix tb = oracle.target_image->bin_matrix(f);
      res.gamma_ideal(f, 0) = ideal_factor(row_values(tb, m), filter_row(est.filters.w[f], tb));
    }
  }
  res.output = res.rescaled(config.scaling);
  res.final_filters = std::move(est.filters);
  res.objective = std::move(est.objective);
  res.stats.frames = frames;
  res.stats.window = frames;
  res.stats.silent_bins = est.silent_bins;
  res.stats.failed_bins = res.final_filters.num_failed();
  res.stats.total_seconds = seconds_since(start);
  return res;
}

ExtractionResult extract_per_frame(const MultichannelSpectrogram& x, const RealMatrix& r,
                                   const SibfConfig& config, OracleInput oracle) {
  const int bins = x.num_bins();
  const int frames = x.num_frames();
  EngineOptions opts;
  opts.record_filters = true;
  PerFrameSibf engine(x.num_channels(), bins, config, opts);

  ExtractionResult res;
  res.y.bins = ComplexMatrix::Zero(bins, frames);
  res.output.bins = ComplexMatrix::Zero(bins, frames);
  res.gamma_mdp = ComplexMatrix::Zero(bins, frames);
  res.gamma_swf = ComplexMatrix::Zero(bins, frames);
  if (oracle.target_image != nullptr) res.gamma_ideal = ComplexMatrix::Zero(bins, frames);

  auto store = [&](std::vector<OutputFrame>&& outs) {
    for (OutputFrame& o : outs) {
      for (int f = 0; f < bins; ++f) {
        res.y.bins(f, o.index) = o.y[f];
        res.output.bins(f, o.index) = o.y_scale[f];
        res.gamma_mdp(f, o.index) = o.gamma_mdp[f];
        res.gamma_swf(f, o.index) = o.gamma_swf[f];
        if (!o.gamma_ideal.empty()) res.gamma_ideal(f, o.index) = o.gamma_ideal[f];
      }
      if (o.index == frames - 1) {
        res.final_filters.w = std::move(o.w);
        res.final_filters.failed = std::move(o.failed);
        res.final_filters.frame = o.index;
      }
    }
  };

  check_reference(r, bins, frames);
  for (int t = 0; t < frames; ++t)
    store(engine.push(frame_input(x, r, t, oracle.target_image)));
  store(engine.finish());
  res.stats = engine.stats();
  return res;
}

}  // namespace

ExtractionResult extract(const MultichannelSpectrogram& x, const RealMatrix& r,
                         const SibfConfig& config, OracleInput oracle,
                         const BatchOptions& options) {
  x.validate();
  config.validate(x.num_channels());
  if (config.scaling == ScalingMethod::Ideal && oracle.target_image == nullptr)
    throw std::invalid_argument("ideal scaling requires oracle data");
  if (oracle.target_image != nullptr) {
    const auto& tg = *oracle.target_image;
    if (tg.num_channels() != x.num_channels() || tg.num_bins() != x.num_bins() ||
        tg.num_frames() != x.num_frames())
      throw std::invalid_argument("oracle target image shape mismatch");
  }
  if (std::holds_alternative<Batch>(config.mode)) return extract_batch(x, r, config, oracle, options);
  return extract_per_frame(x, r, config, oracle);
}

}  // namespace sibf
