#pragma once

#include <string>
#include <vector>

#include "g4d/image.hpp"
#include "g4d/render.hpp"
#include "g4d/types.hpp"

namespace g4d {

// xi_i = 1 - exp(-||SH(sh, v_t) - SH(sh, v_1)||_1), view directions taken
// from the frame-1 and frame-t positions. Orthographic cameras give 0.
std::vector<double> color_uncertainty(const GaussianCloud& cloud_1,
                                      const GaussianCloud& cloud_t, const Camera& cam);

// M(x) = [U(x) > epsilon * mean(U over pixels with alpha_acc > 0.01)].
Image artifact_mask(const Image& uncertainty, const Image& alpha_acc, double epsilon);

struct LossRecord {
    int step = 0;
    int frame = 0;
    int view = 0;
    double l_fore = 0.0;
    double l_back = 0.0;
    double l_total = 0.0;
};

struct RefineResult {
    std::vector<GaussianCloud> refined;
    std::vector<LossRecord> trace;   // one record per (step, frame, view)
    bool all_masks_empty = false;    // entry masks empty everywhere: no-op
    int steps_run = 0;
    std::vector<std::pair<int, int>> schedule;  // scheduled (frame, view) pairs
};

// Masked SH refinement of a propagated sequence against flow-warped frame-1
// renders. Geometry, opacity, and the frame-1 reference renders stay fixed;
// one shared SH parameter set is optimized with momentum gradient descent,
// gradients averaged over the scheduled (frame, view) pairs per step.
RefineResult refine(const std::vector<GaussianCloud>& sequence,
                    const std::vector<Camera>& cameras, const PipelineParams& params);

void save_loss_trace_csv(const std::vector<LossRecord>& trace, const std::string& path);

} // namespace g4d
