#pragma once

#include <vector>

#include "g4d/anchors.hpp"
#include "g4d/image.hpp"
#include "g4d/types.hpp"

// Independent reimplementations used as test oracles. Everything here is
// written from the documented behavior with naive all-pairs algorithms and
// direct convolutions; no spatial pruning, no separable filters, no reuse
// of library internals beyond the domain types and the shared point-line
// distance primitive (which has its own hand-value tests).
namespace g4dref {

// Real SH basis through degree 3, explicit polynomial table.
std::vector<double> sh_basis(const g4d::Vec3& dir, int degree);

// Greedy disjoint grouping in index order, k nearest unassigned neighbors,
// via a full sort of all candidate distances.
g4d::NeighborhoodSet neighborhoods(const g4d::GaussianCloud& cloud, int k);

// All-pairs anchor extraction: for each neighborhood scan every line in
// order and take the first whose radius-delta cylinder contains every
// member. No prefilter.
g4d::AnchorSet anchors(const g4d::GaussianCloud& cloud, const std::vector<g4d::Line>& lines,
                       const g4d::NeighborhoodSet& ns);

// Mean absolute difference over masked pixels, normalized by 3 * |mask|.
double masked_l1(const g4d::Image& a, const g4d::Image& b, const g4d::Image& mask);

// 1 - mean masked SSIM via direct 2D convolution (11x11 Gaussian window,
// sigma 1.5, zero padding), inputs mask-multiplied before filtering.
double masked_ssim_term(const g4d::Image& a, const g4d::Image& b, const g4d::Image& mask);

} // namespace g4dref
