#pragma once

#include <cstdint>
#include <vector>

#include "g4d/common.hpp"
#include "g4d/types.hpp"

namespace g4d {

struct BoundingSphere {
    Vec3 center;
    double radius = 0.0;
};

// Infinite line through point `a` with unit direction `dir`; `b` is the
// second sampled surface point, kept for serialization/debugging.
struct Line {
    Vec3 a, b;
    Vec3 dir;
};

struct Neighborhood {
    std::vector<int> members;
};

struct NeighborhoodSet {
    std::vector<Neighborhood> groups;
    double d_mean = 0.0;  // mean intra-group pairwise distance, groups of >= 2 only
};

struct AnchorSet {
    std::vector<Vec3> anchors;
    std::vector<std::vector<int>> membership;          // per anchor: gaussian indices
    std::vector<std::vector<double>> member_weights;   // normalized centroid weights
    std::vector<std::vector<int>> gaussian_to_anchors; // per gaussian: anchor indices
    double d_mean = 0.0;
    double delta = 0.0;       // cylinder radius (sqrt(3)/2 * d_mean)
    int n_neighborhoods = 0;
    int n_anchored = 0;       // neighborhoods that produced an anchor
};

// Ritter-style approximate minimum enclosing sphere with a final inflation
// pass so every point is inside.
BoundingSphere bounding_sphere(const std::vector<Vec3>& points);

// n_rays chord lines from pairs of area-uniform surface samples
// (u in [-1,1], phi in [0,2pi)); deterministic under seed; the first n
// lines for a seed are a prefix of the first n' > n lines.
std::vector<Line> sample_lines(const BoundingSphere& sphere, uint64_t n_rays, uint64_t seed);

// Greedy disjoint grouping in index order: each unassigned center takes its
// k nearest unassigned neighbors.
NeighborhoodSet build_neighborhoods(const GaussianCloud& cloud, int k);

// Cylinder test against each line in order; first intersecting line yields
// the distance-weighted centroid anchor. Unanchored Gaussians fall back to
// the nearest anchor by Euclidean distance.
AnchorSet extract_anchors(const GaussianCloud& cloud, const std::vector<Line>& lines,
                          const NeighborhoodSet& neighborhoods);

double point_line_distance(const Vec3& p, const Line& line);

// Anchor positions from a deformed cloud, reusing the frame-1 membership
// weights (convex recombination of member positions).
std::vector<Vec3> anchor_positions_at(const AnchorSet& anchors, const GaussianCloud& cloud);

} // namespace g4d
