#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "sibf/sibf.hpp"

namespace sibf {
namespace {

using Clock = std::chrono::steady_clock;

enum class Kind { Windowed, Fifo, Rls };

Kind kind_of(const AlgorithmMode& mode) {
  if (std::holds_alternative<WindowedBatch>(mode)) return Kind::Windowed;
  if (std::holds_alternative<FifoOnline>(mode)) return Kind::Fifo;
  if (std::holds_alternative<RlsOnline>(mode)) return Kind::Rls;
  throw std::invalid_argument("PerFrameSibf: batch mode has no per-frame engine");
}

double column_energy(const std::vector<double>& r) {
  double e = 0.0;
  for (double v : r) e += v * v;
  return e;
}

}  // namespace

struct PerFrameSibf::Impl {
  struct Entry {
    std::vector<CVector> x;
    std::vector<CVector> x_target;
    std::vector<double> r;
    std::vector<double> r_norm;
    std::vector<double> c;
    // Closed-form model weight of each bin, fixed once r_norm is known.
    std::vector<double> c_model;
  };

  struct Bin {
    HermitianMatrix phi_x;
    HermitianMatrix phi_c;
    HermitianMatrix phi_c_inv;
    CVector phi_q_mdp;
    CVector phi_q_swf;
    CVector phi_q_ideal;
    CVector w;
    double v_ref = 0.0;
    bool dead = false;
    bool silent = false;
  };

  int n;
  int bins;
  SibfConfig cfg;
  EngineOptions opts;
  Kind kind;
  int window;
  double g;
  int passes;
  bool coupled;
  bool closed;
  double ive_beta = 0.0;

  bool initialized = false;
  std::optional<bool> has_oracle;
  std::vector<FrameInput> pending;
  RingBuffer<Entry> buffer;
  std::vector<Bin> state;
  double v_r = 0.0;
  int next_index = 0;
  RunStats stats;

  Impl(int channels, int num_bins, SibfConfig config, EngineOptions options)
      : n(channels), bins(num_bins), cfg(std::move(config)), opts(std::move(options)) {
    if (num_bins < 1) throw std::invalid_argument("PerFrameSibf: no frequency bins");
    cfg.validate(channels);
    kind = kind_of(cfg.mode);
    window = mode_window(cfg.mode);
    g = mode_forgetting(cfg.mode);
    closed = cfg.model.closed_form();
    coupled = cfg.model.frame_coupled();
    passes = closed ? 1 : cfg.effective_k_aux();
    if (coupled) ive_beta = std::get<IveConstrainedTvLaplacian>(cfg.model.kind).beta;
  }

  void check_frame(const FrameInput& in) {
    if (static_cast<int>(in.x.size()) != bins || static_cast<int>(in.r.size()) != bins)
      throw std::invalid_argument("PerFrameSibf: frame has the wrong number of bins");
    for (const CVector& v : in.x) {
      if (v.size() != n) throw std::invalid_argument("PerFrameSibf: channel count mismatch");
      if (!v.allFinite()) throw std::invalid_argument("PerFrameSibf: non-finite observation");
    }
    for (double v : in.r) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("PerFrameSibf: reference must be finite and nonnegative");
    }
    const bool oracle = !in.x_target.empty();
    if (oracle && static_cast<int>(in.x_target.size()) != bins)
      throw std::invalid_argument("PerFrameSibf: oracle frame has the wrong number of bins");
    if (!has_oracle) {
      has_oracle = oracle;
      if (cfg.scaling == ScalingMethod::Ideal && !oracle)
        throw std::invalid_argument("ideal scaling requires oracle data");
    } else if (*has_oracle != oracle) {
      throw std::invalid_argument("PerFrameSibf: oracle data must be given for every frame or none");
    }
  }

  Entry make_entry(FrameInput&& in) const {
    Entry e;
    e.x = std::move(in.x);
    e.x_target = std::move(in.x_target);
    e.r = std::move(in.r);
    e.r_norm.assign(bins, 0.0);
    e.c.assign(bins, 0.0);
    return e;
  }

  Complex swf_target(const Entry& e, int f) const {
    return scaling_target(e.r[f], e.x[f](cfg.ref_mic));
  }

  // (1-g) sum g^tau c x x^H over the buffer for one bin; `c` oldest first.
  HermitianMatrix window_sum(int f, const std::vector<double>* c) const {
    CMatrix acc = CMatrix::Zero(n, n);
    double decay = 1.0;
    for (std::size_t tau = 0; tau < buffer.size(); ++tau) {
      const std::size_t i = buffer.size() - 1 - tau;
      const CVector& x = buffer[i].x[f];
      const double weight = c == nullptr ? decay : decay * (*c)[i];
      add_weighted_outer(acc, x, weight);
      decay *= g;
    }
    return HermitianMatrix((1.0 - g) * acc);
  }

  double window_objective(int f, const CVector& w) const {
    double acc = 0.0;
    double decay = 1.0;
    for (std::size_t tau = 0; tau < buffer.size(); ++tau) {
      const std::size_t i = buffer.size() - 1 - tau;
      acc += decay * model_cost(cfg.model, buffer[i].r_norm[f], std::abs(w.dot(buffer[i].x[f])));
      decay *= g;
    }
    return (1.0 - g) * acc;
  }

  // Frame-shared weight from post-scaling outputs of all bins.
  double shared_weight(const std::vector<double>& r, const std::vector<Complex>& y_scale) const {
    return weight_ive_constrained(r, y_scale, ive_beta, cfg.model.epsilon, v_r, cfg.model.y_floor)
        .c;
  }

  void initialize() {
    const auto start = Clock::now();
    const int tb = std::min<int>(window, static_cast<int>(pending.size()));
    if (tb < 1) throw std::invalid_argument("PerFrameSibf: stream has no frames");
    stats.window = tb;
    buffer = RingBuffer<Entry>(static_cast<std::size_t>(tb));
    for (int i = 0; i < tb; ++i) {
      FrameInput copy = pending[i];
      buffer.push(make_entry(std::move(copy)));
    }

    state.assign(bins, Bin{});
    const SourceModelSpec first =
        closed ? cfg.model : boost_start_model(cfg.model, cfg.boost_beta);
    std::vector<double> r_window(tb);
    std::vector<CVector> x_window(tb);
    std::vector<Complex> q_window(tb);
    std::vector<double> c_window(tb);
    const std::vector<double> ones(tb, 1.0);
    const int m = cfg.ref_mic;

    for (int f = 0; f < bins; ++f) {
      Bin& b = state[f];
      for (int i = 0; i < tb; ++i) {
        r_window[i] = buffer[i].r[f];
        x_window[i] = buffer[i].x[f];
      }
      b.v_ref = init_v_ref(r_window, g);
      for (int i = 0; i < tb; ++i) {
        buffer[i].r_norm[f] = normalize_reference(r_window[i], b.v_ref);
        if (kind == Kind::Windowed && closed) {
          buffer[i].c_model.resize(bins);
          buffer[i].c_model[f] = model_weight(cfg.model, buffer[i].r_norm[f], 0.0);
        }
      }

      b.phi_x = windowed_covariance(x_window, ones, g);
      for (int i = 0; i < tb; ++i) q_window[i] = x_window[i](m);
      b.phi_q_mdp = init_phi_q(x_window, q_window, g);
      for (int i = 0; i < tb; ++i) q_window[i] = swf_target(buffer[i], f);
      b.phi_q_swf = init_phi_q(x_window, q_window, g);
      if (*has_oracle) {
        std::vector<CVector> t_window(tb);
        for (int i = 0; i < tb; ++i) {
          t_window[i] = buffer[i].x_target[f];
          q_window[i] = t_window[i](m);
        }
        b.phi_q_ideal = init_phi_q(t_window, q_window, g);
      }
      b.w = CVector::Zero(n);
      b.phi_c = HermitianMatrix::zero(n);
      b.phi_c_inv = HermitianMatrix::zero(n);
      if (!(b.phi_x.trace() > 0.0)) {
        b.dead = true;
        b.silent = true;
        ++stats.silent_bins;
        continue;
      }
      try {
        for (int i = 0; i < tb; ++i)
          c_window[i] = model_weight(first, buffer[i].r_norm[f], 0.0);
        b.w = solve_gev(windowed_covariance(x_window, c_window, g), b.phi_x,
                        cfg.diagonal_loading)
                  .w;
        if (!coupled) {
          if (!closed) {
            for (int i = 0; i < tb; ++i)
              c_window[i] = model_weight(cfg.model, buffer[i].r_norm[f],
                                         std::abs(b.w.dot(x_window[i])));
          }
          for (int i = 0; i < tb; ++i) buffer[i].c[f] = c_window[i];
          b.phi_c = windowed_covariance(x_window, c_window, g);
          if (kind == Kind::Rls) b.phi_c_inv = invert_loaded(b.phi_c, cfg.diagonal_loading);
        }
      } catch (const NumericalError&) {
        b.dead = true;
        b.w = CVector::Zero(n);
        ++stats.failed_bins;
      }
    }

    if (coupled) initialize_shared_weights(tb);
    stats.init_seconds += std::chrono::duration<double>(Clock::now() - start).count();
    initialized = true;
  }

  void initialize_shared_weights(int tb) {
    std::vector<double> norms(tb);
    for (int i = 0; i < tb; ++i) norms[i] = std::sqrt(column_energy(buffer[i].r));
    v_r = init_v_ref(norms, g);
    std::vector<Complex> gamma(bins, 0.0);
    for (int f = 0; f < bins; ++f) {
      if (!state[f].dead) gamma[f] = swf_factor_online(state[f].phi_q_swf, state[f].w);
    }
    std::vector<Complex> y_scale(bins);
    for (int i = 0; i < tb; ++i) {
      for (int f = 0; f < bins; ++f)
        y_scale[f] = state[f].dead ? Complex(0.0) : gamma[f] * state[f].w.dot(buffer[i].x[f]);
      const double c = shared_weight(buffer[i].r, y_scale);
      for (int f = 0; f < bins; ++f) buffer[i].c[f] = c;
    }
    std::vector<CVector> x_window(tb);
    std::vector<double> c_window(tb);
    for (int f = 0; f < bins; ++f) {
      Bin& b = state[f];
      if (b.dead) continue;
      for (int i = 0; i < tb; ++i) {
        x_window[i] = buffer[i].x[f];
        c_window[i] = buffer[i].c[f];
      }
      try {
        b.phi_c = windowed_covariance(x_window, c_window, g);
        if (kind == Kind::Rls) b.phi_c_inv = invert_loaded(b.phi_c, cfg.diagonal_loading);
      } catch (const NumericalError&) {
        b.dead = true;
        b.w = CVector::Zero(n);
        ++stats.failed_bins;
      }
    }
  }

  struct Update {
    HermitianMatrix phi_c;
    HermitianMatrix phi_c_inv;
    CVector w;
  };

  // One auxiliary pass for bin f of the newest frame. `bin` holds Phi_x(t) and
  // the Phi_c state committed at t-1; the result is not yet committed.
  Update pass(int f, const Bin& bin, const Update& current, const Entry& newest,
              const Entry* departing, double c_t, int frame, int k,
              const std::vector<double>* window_c) {
    Update u;
    const CVector& x = newest.x[f];
    switch (kind) {
      case Kind::Windowed:
        u.phi_c = window_sum(f, window_c);
        u.w = solve_gev(u.phi_c, bin.phi_x, cfg.diagonal_loading).w;
        break;
      case Kind::Fifo:
        u.phi_c = fifo_update(bin.phi_c, x, c_t, departing->x[f], departing->c[f], g,
                              static_cast<int>(buffer.capacity()));
        u.w = solve_gev(u.phi_c, bin.phi_x, cfg.diagonal_loading).w;
        break;
      case Kind::Rls: {
        u.phi_c = rls_update(bin.phi_c, x, c_t, g);
        const bool refresh = (frame + 1) % cfg.inverse_refresh_period == 0;
        if (refresh) {
          u.phi_c_inv = invert_loaded(u.phi_c, cfg.diagonal_loading);
        } else {
          u.phi_c_inv = mil_rank1_update(HermitianMatrix(bin.phi_c_inv.matrix() / g), x,
                                         (1.0 - g) * c_t);
        }
        u.w = current.w;
        for (int s = 0; s < cfg.pm_iterations; ++s) {
          u.w = power_method_step(u.phi_c_inv, bin.phi_x, u.w);
          if (opts.observer) {
            StepEvent ev;
            ev.kind = StepKind::PowerStep;
            ev.frame = frame;
            ev.bin = f;
            ev.iteration = s;
            ev.w = &u.w;
            ev.phi_x = &bin.phi_x;
            opts.observer(ev);
          }
        }
        break;
      }
    }
    if (opts.observer) {
      StepEvent ev;
      ev.kind = StepKind::AuxiliaryPass;
      ev.frame = frame;
      ev.bin = f;
      ev.iteration = k;
      ev.w = &u.w;
      ev.phi_x = &bin.phi_x;
      if (kind == Kind::Windowed && !coupled) ev.window_objective = window_objective(f, u.w);
      opts.observer(ev);
    }
    return u;
  }

  OutputFrame process(FrameInput&& in) {
    const int t = next_index++;
    Entry entry = make_entry(std::move(in));
    std::optional<Entry> departing;
    const int tb = static_cast<int>(buffer.capacity());
    const int m = cfg.ref_mic;

    // Pre-process: reference normalization and filter-independent statistics.
    if (coupled) {
      const double energy = column_energy(entry.r);
      if (kind == Kind::Rls) {
        v_r = update_v_ref(v_r, std::sqrt(energy), g);
      } else {
        v_r = update_v_ref_fifo(v_r, std::sqrt(energy), std::sqrt(column_energy(buffer.oldest().r)),
                                g, tb);
      }
    }
    for (int f = 0; f < bins; ++f) {
      Bin& b = state[f];
      const CVector& x = entry.x[f];
      const Complex q_swf = swf_target(entry, f);
      if (kind == Kind::Rls) {
        b.v_ref = update_v_ref(b.v_ref, entry.r[f], g);
        b.phi_q_mdp = update_phi_q(b.phi_q_mdp, x, x(m), g);
        b.phi_q_swf = update_phi_q(b.phi_q_swf, x, q_swf, g);
        if (*has_oracle)
          b.phi_q_ideal = update_phi_q(b.phi_q_ideal, entry.x_target[f], entry.x_target[f](m), g);
        if (!b.dead) b.phi_x = rls_update(b.phi_x, x, 1.0, g);
      } else {
        const Entry& old = buffer.oldest();
        const CVector& xo = old.x[f];
        b.v_ref = update_v_ref_fifo(b.v_ref, entry.r[f], old.r[f], g, tb);
        b.phi_q_mdp = update_phi_q_fifo(b.phi_q_mdp, x, x(m), xo, xo(m), g, tb);
        b.phi_q_swf = update_phi_q_fifo(b.phi_q_swf, x, q_swf, xo, swf_target(old, f), g, tb);
        if (*has_oracle) {
          const CVector& xt = entry.x_target[f];
          const CVector& xto = old.x_target[f];
          b.phi_q_ideal = update_phi_q_fifo(b.phi_q_ideal, xt, xt(m), xto, xto(m), g, tb);
        }
        if (!b.dead && kind == Kind::Fifo) b.phi_x = fifo_update(b.phi_x, x, 1.0, xo, 1.0, g, tb);
      }
      entry.r_norm[f] = normalize_reference(entry.r[f], b.v_ref);
    }
    if (kind == Kind::Windowed && closed) {
      entry.c_model.resize(bins);
      for (int f = 0; f < bins; ++f) entry.c_model[f] = model_weight(cfg.model, entry.r_norm[f], 0.0);
    }
    if (kind != Kind::Rls) {
      departing = buffer.push(std::move(entry));
    } else {
      // RLS keeps no window after initialization; the newest frame lives in
      // a one-slot buffer so the pass code can address it uniformly.
      if (buffer.capacity() != 1) buffer = RingBuffer<Entry>(1);
      buffer.push(std::move(entry));
    }
    const Entry& newest = buffer.lag(0);
    if (kind == Kind::Windowed) {
      for (int f = 0; f < bins; ++f) {
        if (!state[f].dead) state[f].phi_x = window_sum(f, nullptr);
      }
    }

    // Filter estimation with warm start from the previous frame.
    std::vector<Update> current(bins);
    std::vector<char> failed(bins, 0);
    for (int f = 0; f < bins; ++f) {
      current[f].phi_c = state[f].phi_c;
      current[f].phi_c_inv = state[f].phi_c_inv;
      current[f].w = state[f].w;
    }
    std::vector<double> c_now(bins, 0.0);
    std::vector<double> window_c;
    std::vector<Complex> y_scale(bins);
    Entry& newest_mut = buffer.lag(0);

    for (int k = 0; k < passes; ++k) {
      double shared = 0.0;
      if (coupled) {
        for (int f = 0; f < bins; ++f) {
          const Bin& b = state[f];
          y_scale[f] = (b.dead || failed[f])
                           ? Complex(0.0)
                           : swf_factor_online(b.phi_q_swf, current[f].w) *
                                 current[f].w.dot(newest.x[f]);
        }
        shared = shared_weight(newest.r, y_scale);
      }
      for (int f = 0; f < bins; ++f) {
        const Bin& b = state[f];
        if (b.dead || failed[f]) continue;
        const double rn = newest.r_norm[f];
        double c_t;
        if (closed) {
          c_t = model_weight(cfg.model, rn, 0.0);
        } else if (coupled) {
          c_t = shared;
        } else {
          c_t = model_weight(cfg.model, rn, std::abs(current[f].w.dot(newest.x[f])));
        }
        const std::vector<double>* wc = nullptr;
        if (kind == Kind::Windowed) {
          window_c.resize(buffer.size());
          for (std::size_t i = 0; i < buffer.size(); ++i) {
            const Entry& e = buffer[i];
            window_c[i] = closed ? e.c_model[f]
                                 : model_weight(cfg.model, e.r_norm[f],
                                                std::abs(current[f].w.dot(e.x[f])));
          }
          wc = &window_c;
        }
        try {
          current[f] = pass(f, b, current[f], newest, departing ? &*departing : nullptr, c_t, t, k,
                            wc);
          c_now[f] = c_t;
        } catch (const NumericalError&) {
          failed[f] = 1;
          ++stats.failed_updates;
        }
      }
    }

    // Commit and generate the output frame.
    OutputFrame out;
    out.index = t;
    out.y.assign(bins, 0.0);
    out.y_scale.assign(bins, 0.0);
    out.gamma_mdp.assign(bins, 0.0);
    out.gamma_swf.assign(bins, 0.0);
    if (*has_oracle) out.gamma_ideal.assign(bins, 0.0);
    out.failed = failed;
    if (opts.record_filters) out.w.assign(bins, CVector::Zero(n));
    for (int f = 0; f < bins; ++f) {
      Bin& b = state[f];
      if (b.dead) {
        out.failed[f] = b.silent ? 0 : 1;
        continue;
      }
      if (failed[f]) {
        // The frame enters the statistics with zero weight so that a later
        // FIFO subtraction removes exactly what was added.
        newest_mut.c[f] = 0.0;
        if (kind == Kind::Fifo) {
          b.phi_c = fifo_update(b.phi_c, newest.x[f], 0.0, departing->x[f], departing->c[f], g, tb);
        } else if (kind == Kind::Rls) {
          b.phi_c = rls_update(b.phi_c, newest.x[f], 0.0, g);
          b.phi_c_inv = HermitianMatrix(b.phi_c_inv.matrix() / g);
        }
        continue;
      }
      b.phi_c = current[f].phi_c;
      b.phi_c_inv = current[f].phi_c_inv;
      b.w = current[f].w;
      newest_mut.c[f] = c_now[f];
      const Complex y = b.w.dot(newest.x[f]);
      out.y[f] = y;
      out.gamma_mdp[f] = swf_factor_online(b.phi_q_mdp, b.w);
      out.gamma_swf[f] = swf_factor_online(b.phi_q_swf, b.w);
      if (*has_oracle) out.gamma_ideal[f] = swf_factor_online(b.phi_q_ideal, b.w);
      Complex gamma = out.gamma_swf[f];
      if (cfg.scaling == ScalingMethod::Mdp) gamma = out.gamma_mdp[f];
      if (cfg.scaling == ScalingMethod::Ideal) gamma = out.gamma_ideal[f];
      out.y_scale[f] = apply_scale(gamma, y);
      if (opts.record_filters) out.w[f] = b.w;
    }
    ++stats.frames;
    return out;
  }

  std::vector<OutputFrame> drain() {
    std::vector<OutputFrame> outs;
    outs.reserve(pending.size());
    std::vector<FrameInput> frames = std::move(pending);
    pending.clear();
    for (FrameInput& in : frames) outs.push_back(process(std::move(in)));
    return outs;
  }
};

PerFrameSibf::PerFrameSibf(int channels, int bins, SibfConfig config, EngineOptions options)
    : impl_(std::make_unique<Impl>(channels, bins, std::move(config), std::move(options))) {}

PerFrameSibf::~PerFrameSibf() = default;
PerFrameSibf::PerFrameSibf(PerFrameSibf&&) noexcept = default;
PerFrameSibf& PerFrameSibf::operator=(PerFrameSibf&&) noexcept = default;

std::vector<OutputFrame> PerFrameSibf::push(FrameInput frame) {
  const auto start = Clock::now();
  Impl& s = *impl_;
  s.check_frame(frame);
  std::vector<OutputFrame> outs;
  if (s.initialized) {
    outs.push_back(s.process(std::move(frame)));
  } else {
    s.pending.push_back(std::move(frame));
    if (static_cast<int>(s.pending.size()) >= s.window) {
      s.initialize();
      outs = s.drain();
    }
  }
  s.stats.total_seconds += std::chrono::duration<double>(Clock::now() - start).count();
  return outs;
}

std::vector<OutputFrame> PerFrameSibf::finish() {
  const auto start = Clock::now();
  Impl& s = *impl_;
  std::vector<OutputFrame> outs;
  if (!s.initialized) {
    if (s.pending.empty()) throw std::invalid_argument("PerFrameSibf: stream has no frames");
    s.initialize();
    outs = s.drain();
  }
  s.stats.total_seconds += std::chrono::duration<double>(Clock::now() - start).count();
  return outs;
}

const RunStats& PerFrameSibf::stats() const { return impl_->stats; }

}  // namespace sibf
