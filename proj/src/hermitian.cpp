#include "sibf/hermitian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace sibf {
namespace {

// Reciprocal-condition proxy below which a Cholesky factor is treated as
// singular (hard failure) or as needing diagonal loading (soft trigger).
constexpr double kSingularRcond = 1e-14;
constexpr double kLoadingRcond = 1e-12;
constexpr double kTieRelative = 1e-10;
constexpr int kMaxSweeps = 50;

struct Cholesky {
  CMatrix l;
  double rcond = 0.0;
  bool ok = false;
};

Cholesky cholesky(const CMatrix& a) {
  Cholesky out;
  const int n = static_cast<int>(a.rows());
  out.l = CMatrix::Zero(n, n);
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  for (int j = 0; j < n; ++j) {
    double diag = a(j, j).real();
    for (int k = 0; k < j; ++k) diag -= std::norm(out.l(j, k));
    if (!(diag > 0.0) || !std::isfinite(diag)) return out;
    const double ljj = std::sqrt(diag);
    out.l(j, j) = ljj;
    dmin = std::min(dmin, diag);
    dmax = std::max(dmax, diag);
    for (int i = j + 1; i < n; ++i) {
      Complex s = a(i, j);
      for (int k = 0; k < j; ++k) s -= out.l(i, k) * std::conj(out.l(j, k));
      out.l(i, j) = s / ljj;
    }
  }
  out.rcond = dmin / dmax;
  out.ok = true;
  return out;
}

// Solves L y = b column-wise (forward substitution).
CMatrix forward_solve(const CMatrix& l, const CMatrix& b) {
  const int n = static_cast<int>(l.rows());
  CMatrix y = b;
  for (int c = 0; c < b.cols(); ++c) {
    for (int i = 0; i < n; ++i) {
      Complex s = y(i, c);
      for (int k = 0; k < i; ++k) s -= l(i, k) * y(k, c);
      y(i, c) = s / l(i, i);
    }
  }
  return y;
}

// Solves L^H x = b (back substitution).
CVector back_solve_adjoint(const CMatrix& l, const CVector& b) {
  const int n = static_cast<int>(l.rows());
  CVector x = b;
  for (int i = n - 1; i >= 0; --i) {
    Complex s = x(i);
    for (int k = i + 1; k < n; ++k) s -= std::conj(l(k, i)) * x(k);
    x(i) = s / l(i, i);
  }
  return x;
}

// w^H A w accumulated in long double. Near-singular A makes the double-precision
// sum cancel terms far larger than the result.
double hermitian_form(const CMatrix& a, const CVector& w) {
  const int n = static_cast<int>(w.size());
  long double acc = 0.0L;
  for (int i = 0; i < n; ++i) {
    const long double wr = w(i).real(), wi = w(i).imag();
    acc += static_cast<long double>(a(i, i).real()) * (wr * wr + wi * wi);
    for (int j = i + 1; j < n; ++j) {
      // 2 Re(conj(w_i) a_ij w_j)
      const long double ar = a(i, j).real(), ai = a(i, j).imag();
      const long double vr = w(j).real(), vi = w(j).imag();
      const long double pr = ar * vr - ai * vi;
      const long double pi = ar * vi + ai * vr;
      acc += 2.0L * (wr * pr + wi * pi);
    }
  }
  return static_cast<double>(acc);
}

bool lexicographically_less(const CVector& a, const CVector& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
    if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
  }
  return false;
}

void check_square_pair(const HermitianMatrix& a, const HermitianMatrix& b) {
  if (a.size() != b.size()) throw std::invalid_argument("gev: dimension mismatch");
  if (a.size() == 0) throw std::invalid_argument("gev: empty matrices");
}

GevResult gev_from_factor(const HermitianMatrix& a, const Cholesky& chol) {
  const int n = a.size();
  // C = L^{-1} A L^{-H}
  const CMatrix left = forward_solve(chol.l, a.matrix());
  const CMatrix c = forward_solve(chol.l, left.adjoint());
  const HermitianEigen eig = eigh(HermitianMatrix(c));

  const double lambda0 = eig.values(0);
  GevResult best;
  best.lambda_min = lambda0;
  bool have = false;
  for (int i = 0; i < n; ++i) {
    const double li = eig.values(i);
    const double scale = std::max(std::abs(lambda0), std::abs(li));
    const bool tie = (i == 0) || (li - lambda0) < kTieRelative * scale || scale == 0.0;
    if (!tie) break;
    CVector w = fix_phase(back_solve_adjoint(chol.l, eig.vectors.col(i)));
    if (!have || lexicographically_less(w, best.w)) {
      best.w = w;
      have = true;
    }
  }
  return best;
}

}  // namespace

HermitianMatrix::HermitianMatrix(const CMatrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("HermitianMatrix: not square");
  m_ = 0.5 * (m + m.adjoint());
  for (int i = 0; i < m_.rows(); ++i) m_(i, i) = Complex(m_(i, i).real(), 0.0);
}

HermitianMatrix HermitianMatrix::zero(int n) { return HermitianMatrix(CMatrix::Zero(n, n)); }

HermitianMatrix HermitianMatrix::identity(int n) {
  return HermitianMatrix(CMatrix::Identity(n, n));
}

HermitianEigen eigh(const HermitianMatrix& input) {
  const int n = input.size();
  CMatrix a = input.matrix();
  CMatrix v = CMatrix::Identity(n, n);
  const double total = a.norm();

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += std::norm(a(p, q));
    if (off == 0.0 || std::sqrt(off) <= 1e-15 * total) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const Complex z = a(p, q);
        const double mag = std::abs(z);
        if (mag == 0.0) continue;
        const Complex phase = z / mag;  // e^{i phi}
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const double theta = (aqq - app) / (2.0 * mag);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // U = diag(1, e^{-i phi}) * [[c, s], [-s, c]] on the (p, q) plane.
        const Complex upp = c;
        const Complex upq = s;
        const Complex uqp = -s * std::conj(phase);
        const Complex uqq = c * std::conj(phase);

        for (int k = 0; k < n; ++k) {
          const Complex akp = a(k, p);
          const Complex akq = a(k, q);
          a(k, p) = akp * upp + akq * uqp;
          a(k, q) = akp * upq + akq * uqq;
        }
        for (int k = 0; k < n; ++k) {
          const Complex apk = a(p, k);
          const Complex aqk = a(q, k);
          a(p, k) = std::conj(upp) * apk + std::conj(uqp) * aqk;
          a(q, k) = std::conj(upq) * apk + std::conj(uqq) * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const Complex vkp = v(k, p);
          const Complex vkq = v(k, q);
          v(k, p) = vkp * upp + vkq * uqp;
          v(k, q) = vkp * upq + vkq * uqq;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i).real() < a(j, j).real(); });
  HermitianEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    out.values(i) = a(order[i], order[i]).real();
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

CVector fix_phase(const CVector& w) {
  if (w.size() == 0) return w;
  int best = 0;
  double best_mag = std::abs(w(0));
  for (int i = 1; i < w.size(); ++i) {
    const double m = std::abs(w(i));
    if (m > best_mag) {
      best_mag = m;
      best = i;
    }
  }
  if (best_mag == 0.0) return w;
  CVector out = w * (std::conj(w(best)) / best_mag);
  out(best) = Complex(std::abs(out(best)), 0.0);
  return out;
}

GevResult gev_min(const HermitianMatrix& a, const HermitianMatrix& b) {
  check_square_pair(a, b);
  const Cholesky chol = cholesky(b.matrix());
  if (!chol.ok || chol.rcond < kSingularRcond)
    throw NumericalError("gev_min: B is numerically singular (ill-conditioned covariance)");
  return gev_from_factor(a, chol);
}

GevResult gev_min_weighted(const ComplexMatrix& x, std::span<const double> c) {
  const Eigen::Index n = x.rows();
  const Eigen::Index frames = x.cols();
  if (n == 0) throw std::invalid_argument("gev_min_weighted: empty observations");
  if (static_cast<Eigen::Index>(c.size()) != frames)
    throw std::invalid_argument("gev_min_weighted: weight count differs from frame count");
  for (double v : c)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("gev_min_weighted: weights must be finite and nonnegative");
  if (frames < n) throw NumericalError("gev_min_weighted: fewer frames than channels");

  const Eigen::MatrixXcd y = x.adjoint() / std::sqrt(static_cast<double>(frames));
  const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(y);
  const Eigen::MatrixXcd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    dmin = std::min(dmin, std::norm(r(i, i)));
    dmax = std::max(dmax, std::norm(r(i, i)));
  }
  if (!(dmax > 0.0) || dmin / dmax < kLoadingRcond)
    throw NumericalError("gev_min_weighted: covariance needs loading or is singular");

  Eigen::MatrixXcd m = qr.householderQ() * Eigen::MatrixXcd::Identity(frames, n);
  for (Eigen::Index t = 0; t < frames; ++t) m.row(t) *= std::sqrt(c[t]);
  // Row and column pivoting keeps the preconditioning QR accurate for rows
  // scaled over many decades.
  const Eigen::JacobiSVD<Eigen::MatrixXcd, Eigen::FullPivHouseholderQRPreconditioner> svd(
      m, Eigen::ComputeFullV);
  const Eigen::VectorXd& sigma = svd.singularValues();

  GevResult best;
  best.lambda_min = sigma(n - 1) * sigma(n - 1);
  bool have = false;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const double li = sigma(i) * sigma(i);
    const bool tie = i == n - 1 || li - best.lambda_min < kTieRelative * li || li == 0.0;
    if (!tie) break;
    const Eigen::VectorXcd v = svd.matrixV().col(i);
    const CVector w = fix_phase(CVector(r.triangularView<Eigen::Upper>().solve(v)));
    if (!have || lexicographically_less(w, best.w)) {
      best.w = w;
      have = true;
    }
  }
  return best;
}

GevResult solve_gev(const HermitianMatrix& a, const HermitianMatrix& b, double delta_rel) {
  check_square_pair(a, b);
  Cholesky chol = cholesky(b.matrix());
  if (chol.ok && chol.rcond >= kLoadingRcond) return gev_from_factor(a, chol);

  chol = cholesky(diagonal_load(b, delta_rel).matrix());
  if (!chol.ok || chol.rcond < kSingularRcond)
    throw NumericalError("solve_gev: covariance singular after diagonal loading");
  GevResult r = gev_from_factor(a, chol);
  const double q = hermitian_form(b.matrix(), r.w);
  if (!(q > 0.0) || !std::isfinite(q))
    throw NumericalError("solve_gev: filter has no energy under the unloaded covariance");
  r.w /= std::sqrt(q);
  return r;
}

CVector power_method_step(const HermitianMatrix& phi_c_inv, const HermitianMatrix& phi_x,
                          const CVector& w) {
  if (phi_c_inv.size() != phi_x.size() || w.size() != phi_x.size())
    throw std::invalid_argument("power_method_step: dimension mismatch");
  const CVector next = phi_c_inv.matrix() * (phi_x.matrix() * w);
  const double energy = hermitian_form(phi_x.matrix(), next);
  const double floor = 1e-14 * std::max(phi_x.trace(), 0.0) * next.squaredNorm();
  if (!std::isfinite(energy) || energy <= floor)
    throw NumericalError("power_method_step: Phi_x lost positive definiteness");
  return next / std::sqrt(energy);
}

HermitianMatrix mil_rank1_update(const HermitianMatrix& a_inv, const CVector& b, double d) {
  if (b.size() != a_inv.size()) throw std::invalid_argument("mil_rank1_update: dimension mismatch");
  if (d == 0.0) return a_inv;
  const CVector u = a_inv.matrix() * b;
  const double denom = 1.0 / d + b.dot(u).real();
  if (!std::isfinite(denom) || std::abs(denom) < 1e-14)
    throw NumericalError("mil_rank1_update: singular update");
  return HermitianMatrix(a_inv.matrix() - (u * u.adjoint()) / denom);
}

HermitianMatrix diagonal_load(const HermitianMatrix& a, double delta_rel) {
  if (delta_rel < 0.0) throw std::invalid_argument("diagonal_load: negative loading");
  if (delta_rel == 0.0) return a;
  const int n = a.size();
  const double tr = a.trace();
  const double amount = tr == 0.0 ? delta_rel : delta_rel * tr / n;
  CMatrix m = a.matrix();
  m.diagonal().array() += amount;
  return HermitianMatrix(m);
}

HermitianMatrix invert(const HermitianMatrix& a) {
  const Cholesky chol = cholesky(a.matrix());
  if (!chol.ok || chol.rcond < kSingularRcond)
    throw NumericalError("invert: matrix is not numerically positive definite");
  const int n = a.size();
  const CMatrix linv = forward_solve(chol.l, CMatrix::Identity(n, n));
  return HermitianMatrix(linv.adjoint() * linv);
}

HermitianMatrix invert_loaded(const HermitianMatrix& a, double delta_rel) {
  const Cholesky chol = cholesky(a.matrix());
  if (chol.ok && chol.rcond >= kLoadingRcond) return invert(a);
  return invert(diagonal_load(a, delta_rel));
}

}  // namespace sibf
