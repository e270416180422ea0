#pragma once

#include <span>

#include "sibf/types.hpp"

namespace sibf {

// Complex Hermitian matrix of channel dimension (2..16 in practice). The
// constructor symmetrizes its argument, so every instance is exactly Hermitian.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(const CMatrix& m);

  static HermitianMatrix zero(int n);
  static HermitianMatrix identity(int n);

  const CMatrix& matrix() const { return m_; }
  int size() const { return static_cast<int>(m_.rows()); }
  double trace() const { return m_.diagonal().real().sum(); }
  Complex operator()(int i, int j) const { return m_(i, j); }

 private:
  CMatrix m_;
};

// Eigenpairs in ascending eigenvalue order; eigenvectors are the columns.
struct HermitianEigen {
  RVector values;
  CMatrix vectors;
};

// Cyclic Jacobi eigendecomposition.
HermitianEigen eigh(const HermitianMatrix& a);

struct GevResult {
  CVector w;
  double lambda_min = 0.0;
};

// Minimum generalized eigenpair of A w = lambda B w, normalized so that
// w^H B w = 1 and phase-fixed (largest-magnitude entry real, nonnegative).
// Near-degenerate minimum eigenvalues (1e-10 relative) resolve to the
// lexicographically smallest phase-fixed candidate.
// Throws NumericalError if B is not numerically positive definite.
GevResult gev_min(const HermitianMatrix& a, const HermitianMatrix& b);

// gev_min for A = X diag(c) X^H / T and B = X X^H / T, computed from the N x T
// data through a QR factorization of X^H and an SVD of the row-weighted Q
// factor. Unlike forming A explicitly, this stays accurate when the weights
// span many decades. Weights must be finite and nonnegative. Throws
// NumericalError when B would need diagonal loading (or is singular); the
// covariance-based solve_gev is the fallback for that case.
GevResult gev_min_weighted(const ComplexMatrix& x, std::span<const double> c);

// gev_min with diagonal loading of B applied only when B is ill-conditioned.
// The returned w is renormalized so that w^H B w = 1 for the unloaded B.
GevResult solve_gev(const HermitianMatrix& a, const HermitianMatrix& b, double delta_rel);

// One power-method iteration toward the minimum GEV eigenvector:
// w' = Phi_c^{-1} Phi_x w, scaled so that w'^H Phi_x w' = 1.
CVector power_method_step(const HermitianMatrix& phi_c_inv, const HermitianMatrix& phi_x,
                          const CVector& w);

// (A + d b b^H)^{-1} from A^{-1} by the matrix inversion lemma.
HermitianMatrix mil_rank1_update(const HermitianMatrix& a_inv, const CVector& b, double d);

// A + delta_rel * (trace(A)/N) * I, or A + delta_rel * I when trace(A) = 0.
HermitianMatrix diagonal_load(const HermitianMatrix& a, double delta_rel);

// Cholesky-based inverse. Throws NumericalError when A is not positive definite.
HermitianMatrix invert(const HermitianMatrix& a);

// Inverse with the same conditional loading policy as solve_gev.
HermitianMatrix invert_loaded(const HermitianMatrix& a, double delta_rel);

// Rotates w so its largest-magnitude component is real and nonnegative.
CVector fix_phase(const CVector& w);

}  // namespace sibf
