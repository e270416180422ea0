#include "sibf/source_models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sibf {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

double floored(double y_abs, double y_floor) { return std::max(y_abs, y_floor); }

}  // namespace

void SourceModelSpec::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("source model: epsilon must be positive");
  if (!(y_floor > 0.0)) throw std::invalid_argument("source model: y_floor must be positive");
  std::visit(Overloaded{
                 [](const TvGeneralizedGaussian& m) {
                   if (!(m.rho >= 0.0 && m.rho <= 2.0))
                     throw std::invalid_argument("tv_gg: rho must lie in [0, 2]");
                   if (!(m.beta > 0.0)) throw std::invalid_argument("tv_gg: beta must be positive");
                 },
                 [](const TvStudentT& m) {
                   if (!(m.nu >= 0.0)) throw std::invalid_argument("student_t: nu must be >= 0");
                   if (!(m.beta > 0.0))
                     throw std::invalid_argument("student_t: beta must be positive");
                 },
                 [](const BsLaplacian& m) {
                   if (!(m.alpha >= 0.0))
                     throw std::invalid_argument("bs_laplacian: alpha must be >= 0");
                 },
                 [](const IveConstrainedTvLaplacian& m) {
                   if (!(m.beta > 0.0)) throw std::invalid_argument("ive: beta must be positive");
                 },
             },
             kind);
}

bool SourceModelSpec::closed_form() const {
  const auto* gg = std::get_if<TvGeneralizedGaussian>(&kind);
  return gg != nullptr && gg->rho == 2.0;
}

bool SourceModelSpec::frame_coupled() const {
  return std::holds_alternative<IveConstrainedTvLaplacian>(kind);
}

std::string SourceModelSpec::name() const {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const TvGeneralizedGaussian& m) {
                   if (m.rho == 2.0)
                     os << "tv_gaussian";
                   else if (m.rho == 1.0)
                     os << "tv_laplacian";
                   else
                     os << "tv_gg(rho=" << m.rho << ")";
                 },
                 [&](const TvStudentT& m) { os << "tv_student_t(nu=" << m.nu << ")"; },
                 [&](const BsLaplacian& m) { os << "bs_laplacian(alpha=" << m.alpha << ")"; },
                 [&](const IveConstrainedTvLaplacian&) { os << "ive_tv_laplacian"; },
             },
             kind);
  return os.str();
}

SourceModelSpec boost_start_model(const SourceModelSpec& model, double boost_beta) {
  SourceModelSpec out = model;
  out.kind = TvGeneralizedGaussian{2.0, boost_beta};
  return out;
}

double clip_reference(double r, double epsilon) { return std::max(r, epsilon); }

double weight_tv_gg(double r_clipped, double y_abs, double beta, double rho, double y_floor) {
  if (rho == 2.0) return 1.0 / std::pow(r_clipped, 2.0 * beta);
  const double y = floored(y_abs, y_floor);
  return 1.0 / (std::pow(r_clipped, beta * rho) * std::pow(y, 2.0 - rho));
}

double weight_tv_student_t(double r_clipped, double y_abs, double nu, double beta,
                           double y_floor) {
  const double y = floored(y_abs, y_floor);
  const double r = std::pow(r_clipped, beta);
  return (2.0 + nu) / (nu * r * r + 2.0 * y * y);
}

double weight_bs_laplacian(double r_clipped, double y_abs, double alpha, double y_floor) {
  const double y = floored(y_abs, y_floor);
  return 1.0 / std::sqrt(alpha * r_clipped * r_clipped + y * y);
}

double model_weight(const SourceModelSpec& model, double r_norm, double y_abs) {
  const double r = clip_reference(r_norm, model.epsilon);
  return std::visit(
      Overloaded{
          [&](const TvGeneralizedGaussian& m) {
            return weight_tv_gg(r, y_abs, m.beta, m.rho, model.y_floor);
          },
          [&](const TvStudentT& m) {
            return weight_tv_student_t(r, y_abs, m.nu, m.beta, model.y_floor);
          },
          [&](const BsLaplacian& m) { return weight_bs_laplacian(r, y_abs, m.alpha, model.y_floor); },
          [&](const IveConstrainedTvLaplacian&) -> double {
            throw std::logic_error("model_weight: IVE-constrained weight is frame-shared");
          },
      },
      model.kind);
}

double model_cost(const SourceModelSpec& model, double r_norm, double y_abs) {
  const double r = clip_reference(r_norm, model.epsilon);
  return std::visit(
      Overloaded{
          [&](const TvGeneralizedGaussian& m) {
            if (m.rho == 0.0) return 2.0 * std::log(floored(y_abs, model.y_floor));
            return std::pow(y_abs / std::pow(r, m.beta), m.rho);
          },
          [&](const TvStudentT& m) {
            const double rb = std::pow(r, m.beta);
            if (m.nu == 0.0) return 2.0 * std::log(floored(y_abs, model.y_floor));
            return 0.5 * (2.0 + m.nu) * std::log1p(2.0 * y_abs * y_abs / (m.nu * rb * rb));
          },
          [&](const BsLaplacian& m) { return std::sqrt(m.alpha * r * r + y_abs * y_abs); },
          [&](const IveConstrainedTvLaplacian& m) { return y_abs / std::pow(r, m.beta); },
      },
      model.kind);
}

IveFrameWeight weight_ive_constrained(std::span<const double> reference,
                                      std::span<const Complex> scaled_output, double beta,
                                      double epsilon, double v_r, double y_floor) {
  IveFrameWeight out;
  double r2 = 0.0;
  for (double r : reference) r2 += r * r;
  double y2 = 0.0;
  for (const Complex& y : scaled_output) y2 += std::norm(y);
  out.reference_norm = std::sqrt(r2);
  const double r_norm = out.reference_norm / std::sqrt(std::max(v_r, 1e-20));
  out.reference_clipped = clip_reference(r_norm, epsilon);
  out.output_norm = std::max(std::sqrt(y2), y_floor);
  out.c = 1.0 / (std::pow(out.reference_clipped, beta) * out.output_norm);
  return out;
}

}  // namespace sibf
