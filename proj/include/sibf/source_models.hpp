#pragma once

#include <span>
#include <string>
#include <variant>

#include "sibf/types.hpp"

namespace sibf {

// p(r, y) ~ exp(-(|y| / r'^beta)^rho). rho = 2 is the TV Gaussian (closed
// form), rho = 1 the TV Laplacian. rho = 0 selects the c = 1/|y|^2 variance
// estimate limit.
struct TvGeneralizedGaussian {
  double rho = 1.0;
  double beta = 0.25;
};

// TV Student's t; the reference enters as r'^beta (beta = 1 is the plain model).
struct TvStudentT {
  double nu = 1.0;
  double beta = 1.0;
};

// p(r, y) ~ exp(-sqrt(alpha r'^2 + |y|^2)).
struct BsLaplacian {
  double alpha = 100.0;
};

// Frame-shared weight from reference and output L2 norms across bins.
struct IveConstrainedTvLaplacian {
  double beta = 0.25;
};

using SourceModelKind =
    std::variant<TvGeneralizedGaussian, TvStudentT, BsLaplacian, IveConstrainedTvLaplacian>;

struct SourceModelSpec {
  SourceModelKind kind = TvGeneralizedGaussian{};
  double epsilon = 1e-9;
  double y_floor = 1e-12;

  // Throws std::invalid_argument when a hyperparameter is out of range.
  void validate() const;
  // True when the weight does not depend on y (no auxiliary iterations).
  bool closed_form() const;
  bool frame_coupled() const;
  std::string name() const;
};

// Weights of the boost start: TV Gaussian with the given exponent.
SourceModelSpec boost_start_model(const SourceModelSpec& model, double boost_beta);

double clip_reference(double r, double epsilon);

double weight_tv_gg(double r_clipped, double y_abs, double beta, double rho, double y_floor);
double weight_tv_student_t(double r_clipped, double y_abs, double nu, double beta, double y_floor);
double weight_bs_laplacian(double r_clipped, double y_abs, double alpha, double y_floor);

// Per-bin weight c(f, t) from the normalized reference and |y|. Not valid for
// the frame-coupled model.
double model_weight(const SourceModelSpec& model, double r_norm, double y_abs);

// -log p(r, y) up to model constants, for objective traces.
double model_cost(const SourceModelSpec& model, double r_norm, double y_abs);

struct IveFrameWeight {
  double reference_norm = 0.0;  // ||R(t)||_2
  double reference_clipped = 0.0;  // R'(t)
  double output_norm = 0.0;  // Y'(t)
  double c = 0.0;
};

// Shared weight for all bins of one frame. `reference` is the unnormalized
// reference column, `scaled_output` the post-scaling output column.
IveFrameWeight weight_ive_constrained(std::span<const double> reference,
                                      std::span<const Complex> scaled_output, double beta,
                                      double epsilon, double v_r, double y_floor = 1e-12);

}  // namespace sibf
