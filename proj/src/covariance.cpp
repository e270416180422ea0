#include "sibf/covariance.hpp"

#include <algorithm>
#include <cmath>

namespace sibf {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void check_forgetting(double g) {
  if (!(g > 0.0 && g < 1.0)) throw std::invalid_argument("forgetting factor must lie in (0, 1)");
}

}  // namespace

const char* mode_name(const AlgorithmMode& mode) {
  return std::visit(Overloaded{
                        [](const Batch&) { return "batch"; },
                        [](const WindowedBatch&) { return "windowed"; },
                        [](const FifoOnline&) { return "fifo"; },
                        [](const RlsOnline&) { return "rls"; },
                    },
                    mode);
}

void validate_mode(const AlgorithmMode& mode) {
  std::visit(Overloaded{
                 [](const Batch&) {},
                 [](const auto& m) {
                   check_forgetting(m.forgetting);
                   if (m.window < 1) throw std::invalid_argument("window length must be >= 1");
                 },
             },
             mode);
}

bool is_per_frame(const AlgorithmMode& mode) { return !std::holds_alternative<Batch>(mode); }

int mode_window(const AlgorithmMode& mode) {
  return std::visit(Overloaded{
                        [](const Batch&) { return 0; },
                        [](const auto& m) { return m.window; },
                    },
                    mode);
}

double mode_forgetting(const AlgorithmMode& mode) {
  return std::visit(Overloaded{
                        [](const Batch&) { return 1.0; },
                        [](const auto& m) { return m.forgetting; },
                    },
                    mode);
}

void add_weighted_outer(CMatrix& acc, const CVector& x, double weight) {
  // Real arithmetic: std::complex multiplication carries NaN recovery that
  // dominates this inner loop.
  const Eigen::Index n = x.size();
  const Eigen::Index ld = acc.outerStride();
  const double* xs = reinterpret_cast<const double*>(x.data());
  double* a = reinterpret_cast<double*>(acc.data());
  for (Eigen::Index j = 0; j < n; ++j) {
    const double cr = weight * xs[2 * j];
    const double ci = -weight * xs[2 * j + 1];
    for (Eigen::Index i = 0; i < j; ++i) {
      const double vr = xs[2 * i] * cr - xs[2 * i + 1] * ci;
      const double vi = xs[2 * i] * ci + xs[2 * i + 1] * cr;
      a[2 * (i + j * ld)] += vr;
      a[2 * (i + j * ld) + 1] += vi;
      a[2 * (j + i * ld)] += vr;
      a[2 * (j + i * ld) + 1] -= vi;
    }
    a[2 * (j + j * ld)] += weight * (xs[2 * j] * xs[2 * j] + xs[2 * j + 1] * xs[2 * j + 1]);
  }
}

HermitianMatrix batch_covariance(const ComplexMatrix& x_bin, std::span<const double> c) {
  const auto n = x_bin.rows();
  const auto frames = x_bin.cols();
  if (frames == 0) throw std::invalid_argument("batch_covariance: no frames");
  if (!c.empty() && static_cast<Eigen::Index>(c.size()) != frames)
    throw std::invalid_argument("batch_covariance: weight count mismatch");
  CMatrix acc = CMatrix::Zero(n, n);
  if (c.empty()) {
    acc.noalias() = x_bin * x_bin.adjoint();
  } else {
    for (Eigen::Index t = 0; t < frames; ++t) add_weighted_outer(acc, x_bin.col(t), c[t]);
  }
  return HermitianMatrix(acc / static_cast<double>(frames));
}

HermitianMatrix windowed_covariance(std::span<const CVector> frames, std::span<const double> c,
                                    double g) {
  if (frames.empty()) throw std::invalid_argument("windowed_covariance: empty buffer");
  if (frames.size() != c.size()) throw std::invalid_argument("windowed_covariance: size mismatch");
  check_forgetting(g);
  const auto n = frames.front().size();
  CMatrix acc = CMatrix::Zero(n, n);
  double decay = 1.0;
  for (std::size_t tau = 0; tau < frames.size(); ++tau) {
    const std::size_t i = frames.size() - 1 - tau;
    add_weighted_outer(acc, frames[i], decay * c[i]);
    decay *= g;
  }
  return HermitianMatrix((1.0 - g) * acc);
}

HermitianMatrix fifo_update(const HermitianMatrix& prev, const CVector& x_new, double c_new,
                            const CVector& x_old, double c_old, double g, int window) {
  check_forgetting(g);
  const double tail = std::pow(g, window);
  CMatrix m = g * prev.matrix();
  m.noalias() += ((1.0 - g) * c_new) * (x_new * x_new.adjoint());
  m.noalias() -= ((1.0 - g) * tail * c_old) * (x_old * x_old.adjoint());
  return HermitianMatrix(m);
}

HermitianMatrix rls_update(const HermitianMatrix& prev, const CVector& x, double c, double g) {
  check_forgetting(g);
  CMatrix m = g * prev.matrix();
  m.noalias() += ((1.0 - g) * c) * (x * x.adjoint());
  return HermitianMatrix(m);
}

double init_v_ref(std::span<const double> r, double g) {
  check_forgetting(g);
  double acc = 0.0;
  double decay = 1.0;
  for (std::size_t tau = 0; tau < r.size(); ++tau) {
    const double v = r[r.size() - 1 - tau];
    acc += decay * v * v;
    decay *= g;
  }
  return std::max((1.0 - g) * acc, kVrefFloor);
}

double update_v_ref(double prev, double r, double g) {
  return std::max(g * prev + (1.0 - g) * r * r, kVrefFloor);
}

double update_v_ref_fifo(double prev, double r_new, double r_old, double g, int window) {
  const double tail = std::pow(g, window);
  return std::max(g * prev + (1.0 - g) * (r_new * r_new - tail * r_old * r_old), kVrefFloor);
}

CVector init_phi_q(std::span<const CVector> frames, std::span<const Complex> q, double g) {
  if (frames.empty() || frames.size() != q.size())
    throw std::invalid_argument("init_phi_q: size mismatch");
  check_forgetting(g);
  CVector acc = CVector::Zero(frames.front().size());
  double decay = 1.0;
  for (std::size_t tau = 0; tau < frames.size(); ++tau) {
    const std::size_t i = frames.size() - 1 - tau;
    acc += (decay * std::conj(q[i])) * frames[i];
    decay *= g;
  }
  return (1.0 - g) * acc;
}

CVector update_phi_q(const CVector& prev, const CVector& x, Complex q, double g) {
  return g * prev + ((1.0 - g) * std::conj(q)) * x;
}

CVector update_phi_q_fifo(const CVector& prev, const CVector& x_new, Complex q_new,
                          const CVector& x_old, Complex q_old, double g, int window) {
  const double tail = std::pow(g, window);
  return g * prev + ((1.0 - g) * std::conj(q_new)) * x_new -
         ((1.0 - g) * tail * std::conj(q_old)) * x_old;
}

FifoCovariance::FifoCovariance(int channels, int window, double forgetting)
    : frames_(static_cast<std::size_t>(window)),
      g_(forgetting),
      window_(window),
      phi_(HermitianMatrix::zero(channels)) {
  check_forgetting(forgetting);
}

void FifoCovariance::prime(const CVector& x, double c) {
  if (frames_.full()) throw std::logic_error("FifoCovariance: window already primed");
  frames_.push(Entry{x, c});
  if (!frames_.full()) return;
  std::vector<CVector> xs;
  std::vector<double> cs;
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    xs.push_back(frames_[i].x);
    cs.push_back(frames_[i].c);
  }
  phi_ = windowed_covariance(xs, cs, g_);
}

const HermitianMatrix& FifoCovariance::fifo_push(const CVector& x, double c) {
  if (!frames_.full()) throw std::logic_error("FifoCovariance: window underfull, prime first");
  const Entry old = frames_.oldest();
  frames_.push(Entry{x, c});
  phi_ = fifo_update(phi_, x, c, old.x, old.c, g_, window_);
  return phi_;
}

}  // namespace sibf
