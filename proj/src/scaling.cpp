#include "sibf/scaling.hpp"

#include <stdexcept>

#include "sibf/stft.hpp"

namespace sibf {
namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

Complex cross(std::span<const Complex> a, std::span<const Complex> y) {
  Complex acc = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) acc += a[t] * std::conj(y[t]);
  return acc;
}

double energy(std::span<const Complex> y) {
  double e = 0.0;
  for (const Complex& v : y) e += std::norm(v);
  return e;
}

}  // namespace

const char* scaling_name(ScalingMethod method) {
  switch (method) {
    case ScalingMethod::Mdp:
      return "mdp";
    case ScalingMethod::Swf:
      return "swf";
    case ScalingMethod::Ideal:
      return "ideal";
  }
  return "unknown";
}

ScalingMethod parse_scaling(const std::string& name) {
  if (name == "mdp") return ScalingMethod::Mdp;
  if (name == "swf") return ScalingMethod::Swf;
  if (name == "ideal") return ScalingMethod::Ideal;
  throw std::invalid_argument("unknown scaling method '" + name + "'");
}

Complex mdp_factor_batch(std::span<const Complex> x_m, std::span<const Complex> y) {
  check_lengths(x_m.size(), y.size(), "mdp_factor_batch");
  const double e = energy(y);
  if (e == 0.0) return 0.0;
  return cross(x_m, y) / e;
}

Complex swf_factor_batch(std::span<const Complex> q, std::span<const Complex> y) {
  check_lengths(q.size(), y.size(), "swf_factor_batch");
  return cross(q, y) / static_cast<double>(y.size());
}

Complex swf_factor_least_squares(std::span<const Complex> q, std::span<const Complex> y) {
  check_lengths(q.size(), y.size(), "swf_factor_least_squares");
  const double e = energy(y);
  if (e == 0.0) return 0.0;
  return cross(q, y) / e;
}

Complex ideal_factor(std::span<const Complex> x_tgt_m, std::span<const Complex> y_tgt) {
  check_lengths(x_tgt_m.size(), y_tgt.size(), "ideal_factor");
  return cross(x_tgt_m, y_tgt) / static_cast<double>(y_tgt.size());
}

Complex swf_factor_online(const CVector& phi_q, const CVector& w) {
  if (phi_q.size() != w.size()) throw std::invalid_argument("swf_factor_online: dimension mismatch");
  return phi_q.dot(w);
}

Complex scaling_target(double r, Complex x_m) { return combine_magnitude_phase(r, x_m); }

}  // namespace sibf
