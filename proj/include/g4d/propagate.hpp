#pragma once

#include <string>
#include <vector>

#include "g4d/anchors.hpp"
#include "g4d/types.hpp"
#include "g4d/uot.hpp"

namespace g4d {

struct InfluenceEntry {
    std::vector<int> sources;      // source-Gaussian indices, ascending
    std::vector<double> weights;   // opacity * Mahalanobis kernel, frame-1
    double weight_sum = 0.0;
    bool fallback = false;         // degenerate weights: nearest source used
    int fallback_source = -1;
};

struct InfluenceTable {
    std::vector<InfluenceEntry> per_gaussian;  // aligned with the edited cloud
    int n_fallback = 0;
};

struct PropagateWarnings {
    int weight_fallbacks = 0;
    int degenerate_quaternions = 0;
};

// Union of source members of the corr-mapped influencing anchors, weighted
// by w = sigma_src * exp(-0.5 * (mu_src - mu_g)^T Sigma_src^-1 (mu_src - mu_g)).
InfluenceTable build_influence(const GaussianCloud& edited_cloud,
                               const GaussianCloud& source_cloud,
                               const AnchorSet& anchors_src, const AnchorSet& anchors_edit,
                               const CorrespondenceMap& corr);

struct AggregatedDelta {
    std::vector<Vec3> dmu;
    std::vector<Quat> dq;
    std::vector<Vec3> ds_ratio;
};

// Weighted mean for position, hemisphere-aligned weighted mean for the
// quaternion delta, weighted geometric mean for the scale ratio.
AggregatedDelta aggregate_deformation(const InfluenceTable& influence,
                                      const SourceDelta& deltas);

// Edited clouds for t = 1..T. Frame 1 is the edited cloud unchanged.
std::vector<GaussianCloud> propagate_sequence(const GaussianCloud& edited_cloud,
                                              const GaussianCloud& source_cloud,
                                              const DeformationField& field,
                                              const InfluenceTable& influence,
                                              PropagateWarnings* warnings = nullptr);

// Mean relative change of each anchor's distances to its k_nn frame-1
// nearest anchors.
double neighborhood_distance_deviation(const std::vector<Vec3>& anchors_1,
                                       const std::vector<Vec3>& anchors_t, int k_nn);

} // namespace g4d
