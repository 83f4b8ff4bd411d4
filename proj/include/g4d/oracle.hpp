#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g4d/types.hpp"
#include "g4d/uot.hpp"

namespace g4d {

// Deterministic test scene with analytically known motion, edits, and
// expected propagation results.
struct OracleScene {
    GaussianCloud source;   // frame-1 source cloud
    GaussianCloud edited;   // frame-1 edited cloud
    GaussianCloud clean;    // occlusion scene only: edited with correct colors
    DeformationField field; // tabulated over the source cloud
    std::vector<Camera> cameras;

    // expected_positions[t-1][i]: closed-form edited-cloud position at frame t.
    std::vector<std::vector<Vec3>> expected_positions;

    int n_base = 0;                   // edited Gaussians before any clones
    std::vector<int> clone_parent;    // per clone: parent index in [0, n_base)
    std::vector<double> clone_jitter; // per clone: jitter vector norm

    int inner_begin = 0, inner_end = 0;  // occlusion scene: corrupted index range

    std::string tag;
};

// Jittered-grid cloud in the unit ball under a rigid rotation of
// omega radians per frame about `axis` through the origin. The edit is a
// recolor (DC shift); with_clones additionally appends 10% cloned Gaussians
// jittered by N(0, 0.01^2 I), resampled to keep the jitter norm >= 0.003.
OracleScene make_rigid_scene(int n, const Vec3& axis, double omega, int t_frames,
                             std::uint64_t seed, bool with_clones);

// Static wall, an opaque cover slab sliding aside, and an initially hidden
// inner patch with corrupted colors that is revealed as frames advance.
// Cover and wall share one flat color, so the flow-warped frame-1 target is
// that color wherever the inner patch appears; `clean` holds the inner patch
// recolored to it. 8 pinhole views, 128x128, 10 frames.
OracleScene make_occlusion_scene(std::uint64_t seed);

// Direct-domain unbalanced Sinkhorn on the scaling variables, for problems
// up to 8x8 (OracleSizeExceeded beyond). Iterates to sup-norm change 1e-12
// on the log-scalings or 20000 sweeps.
TransportPlan brute_force_sinkhorn(const CostMatrix& cost, const SinkhornConfig& config);

} // namespace g4d
