#pragma once

#include <span>
#include <string>

#include "sibf/types.hpp"

namespace sibf {

enum class ScalingMethod { Mdp, Swf, Ideal };

const char* scaling_name(ScalingMethod method);
// Accepts "mdp", "swf", "ideal" (case-sensitive).
ScalingMethod parse_scaling(const std::string& name);

// sum x_m conj(y) / sum |y|^2; zero when y carries no energy.
Complex mdp_factor_batch(std::span<const Complex> x_m, std::span<const Complex> y);

// (1/T) sum q conj(y). Assumes the caller enforces unit mean-square y.
Complex swf_factor_batch(std::span<const Complex> q, std::span<const Complex> y);

// sum q conj(y) / sum |y|^2, the least-squares scale without assuming unit
// mean-square y. Zero when y carries no energy.
Complex swf_factor_least_squares(std::span<const Complex> q, std::span<const Complex> y);

// (1/T) sum x_tgt conj(y_tgt). Oracle-only.
Complex ideal_factor(std::span<const Complex> x_tgt_m, std::span<const Complex> y_tgt);

// phi_q^H w
Complex swf_factor_online(const CVector& phi_q, const CVector& w);

inline Complex apply_scale(Complex gamma, Complex y) { return gamma * y; }

// q = r x_m / |x_m|, with phase 1 where x_m = 0.
Complex scaling_target(double r, Complex x_m);

}  // namespace sibf
