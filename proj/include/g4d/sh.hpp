#pragma once

#include <array>
#include <vector>

#include "g4d/vec.hpp"

namespace g4d {

// Real SH basis values for a unit direction, bands 0..degree, degree <= 3.
// Uses the constants standard in Gaussian-splatting renderers.
// basis[0] is the DC band; count = (degree+1)^2.
void sh_basis(const Vec3& dir, int degree, double* out);

std::vector<double> sh_basis(const Vec3& dir, int degree);

// Evaluates RGB color: color[c] = sum_b basis[b] * sh[b*3+c] + 0.5.
// Not clamped; rendered images clamp post-blend.
std::array<double, 3> sh_color(const std::vector<double>& sh, int degree, const Vec3& dir);

} // namespace g4d
