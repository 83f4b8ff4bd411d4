#include "g4d/refine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "g4d/sh.hpp"

namespace g4d {

// -------------------------------------------------------------------------
// Per-Gaussian color uncertainty
// -------------------------------------------------------------------------

std::vector<double> color_uncertainty(const GaussianCloud& cloud_1,
                                      const GaussianCloud& cloud_t, const Camera& cam) {
    if (cloud_1.size() != cloud_t.size() || cloud_1.sh_degree != cloud_t.sh_degree)
        throw Error(ErrorKind::SizeMismatch, "color_uncertainty: clouds not index-aligned");
    std::vector<double> xi(cloud_1.size());
    for (size_t i = 0; i < cloud_1.size(); ++i) {
        // sh is shared across time, so evaluate the frame-t coefficients at
        // both view directions; only the viewing geometry differs.
        const Gaussian& gt = cloud_t.gaussians[i];
        std::array<double, 3> c1 =
            sh_color(gt.sh, cloud_t.sh_degree, cam.view_dir(cloud_1.gaussians[i].mu));
        std::array<double, 3> ct = sh_color(gt.sh, cloud_t.sh_degree, cam.view_dir(gt.mu));
        double c_diff = std::fabs(ct[0] - c1[0]) + std::fabs(ct[1] - c1[1]) +
                        std::fabs(ct[2] - c1[2]);
        xi[i] = 1.0 - std::exp(-c_diff);
    }
    return xi;
}

// -------------------------------------------------------------------------
// Artifact mask
// -------------------------------------------------------------------------

Image artifact_mask(const Image& uncertainty, const Image& alpha_acc, double epsilon) {
    if (uncertainty.width != alpha_acc.width || uncertainty.height != alpha_acc.height ||
        uncertainty.channels != 1 || alpha_acc.channels != 1)
        throw Error(ErrorKind::DimensionMismatch, "artifact_mask: map shapes differ");
    if (!(epsilon > 0.0))
        throw Error(ErrorKind::BadConfig, "artifact_mask: epsilon must be positive");

    Image mask{uncertainty.width, uncertainty.height, 1};
    double sum = 0.0;
    size_t covered = 0;
    double lo = 0.0, hi = 0.0;
    for (size_t i = 0; i < uncertainty.data.size(); ++i) {
        if (alpha_acc.data[i] > 0.01) {
            double u = uncertainty.data[i];
            sum += u;
            if (covered == 0) { lo = u; hi = u; }
            lo = std::min(lo, u);
            hi = std::max(hi, u);
            ++covered;
        }
    }
    if (covered == 0) return mask;  // nothing rendered, nothing masked

    // The mean lies in [lo, hi]; clamping undoes summation rounding so a
    // uniform map never strictly exceeds its own mean.
    double mean = std::clamp(sum / double(covered), lo, hi);
    double threshold = epsilon * mean;
    for (size_t i = 0; i < uncertainty.data.size(); ++i)
        mask.data[i] = uncertainty.data[i] > threshold ? 1.0 : 0.0;
    return mask;
}

// -------------------------------------------------------------------------
// Refinement loop
// -------------------------------------------------------------------------

namespace {

// Frozen per-(frame, view) state. Geometry and opacity never change during
// refinement, so blend weights, flow, the warp target, and the entry-time
// render snapshot are all computed once.
struct PairState {
    int frame = 0;  // 1-based
    int view = 0;
    RenderContext ctx;   // frame-t rasterization at this view
    Image warp_target;   // frame-1 render pulled through the frame-t flow
    Image org;           // clamped render at refine entry (background anchor)
};

// xi from the current sh through frozen basis tables; mirrors
// color_uncertainty but avoids re-deriving view directions every step.
void xi_from_bases(const std::vector<double>& basis_t, const std::vector<double>& basis_1,
                   const std::vector<double>& sh, size_t n, int n_basis,
                   std::vector<double>& xi) {
    size_t n_sh = size_t(3) * size_t(n_basis);
    for (size_t i = 0; i < n; ++i) {
        const double* bt = basis_t.data() + i * size_t(n_basis);
        const double* b1 = basis_1.data() + i * size_t(n_basis);
        const double* s = sh.data() + i * n_sh;
        double c_diff = 0.0;
        for (int c = 0; c < 3; ++c) {
            double vt = 0.5, v1 = 0.5;
            for (int b = 0; b < n_basis; ++b) {
                vt += bt[b] * s[size_t(b) * 3 + size_t(c)];
                v1 += b1[b] * s[size_t(b) * 3 + size_t(c)];
            }
            c_diff += std::fabs(vt - v1);
        }
        xi[i] = 1.0 - std::exp(-c_diff);
    }
}

// Blends a per-Gaussian scalar through frozen contributor weights; equals
// render_uncertainty on the same cloud/camera.
Image blend_scalar(const RenderContext& ctx, const std::vector<double>& xi) {
    Image u{ctx.width, ctx.height, 1};
    for (size_t pix = 0; pix < ctx.contributors.size(); ++pix) {
        double acc = 0.0;
        for (const PixelContrib& pc : ctx.contributors[pix]) acc += pc.weight * xi[pc.index];
        u.data[pix] = acc;
    }
    return u;
}

int mask_coverage(const Image& mask) {
    int count = 0;
    for (double v : mask.data)
        if (v > 0.5) ++count;
    return count;
}

} // namespace

RefineResult refine(const std::vector<GaussianCloud>& sequence,
                    const std::vector<Camera>& cameras, const PipelineParams& params) {
    validate_params(params);
    if (sequence.empty()) throw Error(ErrorKind::EmptyInput, "refine: empty sequence");
    if (cameras.empty()) throw Error(ErrorKind::EmptyInput, "refine: no cameras");
    const GaussianCloud& first = sequence.front();
    if (first.size() == 0) throw Error(ErrorKind::EmptyInput, "refine: empty cloud");
    for (const Camera& cam : cameras) validate_camera(cam);

    size_t n = first.size();
    int degree = first.sh_degree;
    int n_basis = sh_coeff_count(degree);
    size_t n_sh = size_t(3) * size_t(n_basis);
    for (const GaussianCloud& c : sequence) {
        if (c.size() != n || c.sh_degree != degree)
            throw Error(ErrorKind::SizeMismatch, "refine: frames differ in size or degree");
        for (size_t i = 0; i < n; ++i)
            if (c.gaussians[i].sh != first.gaussians[i].sh)
                throw Error(ErrorKind::InvariantViolation,
                            "refine: sh must be shared across frames");
    }

    int t_count = int(sequence.size());
    int v_count = int(cameras.size());

    RefineResult out;
    out.refined = sequence;

    // Schedule: every view, frames strided so one epoch stays within the
    // pair budget. Frame 1 is skipped: zero flow and zero xi make it a
    // provable no-op.
    std::vector<int> frames;
    if (t_count >= 2) {
        int budget = std::max(1, params.max_pairs_per_epoch);
        int max_frames = std::max(1, budget / v_count);
        int stride = (t_count - 1 + max_frames - 1) / max_frames;
        for (int t = 2; t <= t_count; t += stride) frames.push_back(t);
    }
    for (int t : frames)
        for (int v = 0; v < v_count; ++v) out.schedule.emplace_back(t, v);
    if (out.schedule.empty()) {
        out.all_masks_empty = true;
        return out;
    }

    // Shared SH parameter vector.
    std::vector<double> sh(n * n_sh);
    for (size_t i = 0; i < n; ++i)
        std::copy(first.gaussians[i].sh.begin(), first.gaussians[i].sh.end(),
                  sh.begin() + i * n_sh);

    // Per-view frame-1 data: reference render and basis at frame-1 views.
    auto render1 = std::vector<Image>(size_t(v_count));
    auto basis1 = std::vector<std::vector<double>>(size_t(v_count));
    for (int v = 0; v < v_count; ++v) {
        render1[size_t(v)] = render_color(first, cameras[size_t(v)]).color;
        basis1[size_t(v)].resize(n * size_t(n_basis));
        for (size_t i = 0; i < n; ++i)
            sh_basis(cameras[size_t(v)].view_dir(first.gaussians[i].mu), degree,
                     basis1[size_t(v)].data() + i * size_t(n_basis));
    }

    std::vector<Vec3> positions_1(n);
    for (size_t i = 0; i < n; ++i) positions_1[i] = first.gaussians[i].mu;

    // Frozen per-pair state.
    std::vector<PairState> pairs;
    pairs.reserve(out.schedule.size());
    for (const auto& [t, v] : out.schedule) {
        const GaussianCloud& cloud_t = sequence[size_t(t - 1)];
        const Camera& cam = cameras[size_t(v)];
        PairState ps;
        ps.frame = t;
        ps.view = v;
        ps.ctx = build_context(cloud_t, cam);
        RenderedMaps flow = render_flow(cloud_t, positions_1, cam);
        ps.warp_target = warp_frame1(render1[size_t(v)], flow.flow, flow.alpha_acc);
        context_render(ps.ctx, sh.data(), &ps.org, nullptr);
        pairs.push_back(std::move(ps));
    }

    // Entry mask pass: with every mask empty the loss is identically zero
    // and refinement is the exact identity.
    {
        std::vector<double> xi(n);
        bool any = false;
        for (const PairState& ps : pairs) {
            xi_from_bases(ps.ctx.basis, basis1[size_t(ps.view)], sh, n, n_basis, xi);
            Image u = blend_scalar(ps.ctx, xi);
            Image m = artifact_mask(u, ps.ctx.alpha_acc, params.epsilon);
            if (mask_coverage(m) > 0) {
                any = true;
                break;
            }
        }
        if (!any) {
            out.all_masks_empty = true;
            return out;
        }
    }

    // Momentum gradient descent on the shared sh.
    std::vector<double> velocity(sh.size(), 0.0);
    std::vector<double> grad(sh.size());
    std::vector<double> xi(n);
    double pair_norm = 1.0 / double(pairs.size());

    for (int step = 0; step < params.refine_steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const PairState& ps : pairs) {
            Image clamped, raw;
            context_render(ps.ctx, sh.data(), &clamped, &raw);

            xi_from_bases(ps.ctx.basis, basis1[size_t(ps.view)], sh, n, n_basis, xi);
            Image u = blend_scalar(ps.ctx, xi);
            Image mask = artifact_mask(u, ps.ctx.alpha_acc, params.epsilon);
            Image mask_c{mask.width, mask.height, 1};
            for (size_t i = 0; i < mask.data.size(); ++i)
                mask_c.data[i] = mask.data[i] > 0.5 ? 0.0 : 1.0;

            Image dl{ps.ctx.width, ps.ctx.height, 3};
            MaskedLoss fore = masked_loss_grad(ps.ctx, clamped, raw, ps.warp_target, mask,
                                               params.eta, &dl, 1.0 - params.zeta);
            MaskedLoss back = masked_loss_grad(ps.ctx, clamped, raw, ps.org, mask_c, 0.0,
                                               &dl, params.zeta);
            double total = (1.0 - params.zeta) * fore.loss + params.zeta * back.loss;
            if (!std::isfinite(total)) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "refine: non-finite loss at step %d frame %d view %d "
                              "(fore %.6g, back %.6g)",
                              step, ps.frame, ps.view, fore.loss, back.loss);
                throw Error(ErrorKind::NonFiniteLoss, buf);
            }
            LossRecord rec;
            rec.step = step;
            rec.frame = ps.frame;
            rec.view = ps.view;
            rec.l_fore = fore.loss;
            rec.l_back = back.loss;
            rec.l_total = total;
            out.trace.push_back(rec);

            accumulate_sh_grad(ps.ctx, dl, grad);
        }
        for (size_t j = 0; j < sh.size(); ++j) {
            velocity[j] = params.momentum * velocity[j] + grad[j] * pair_norm;
            sh[j] -= params.refine_lr * velocity[j];
        }
        out.steps_run = step + 1;
    }

    // Write the shared sh back into every frame.
    for (GaussianCloud& cloud : out.refined)
        for (size_t i = 0; i < n; ++i)
            std::copy(sh.begin() + i * n_sh, sh.begin() + (i + 1) * n_sh,
                      cloud.gaussians[i].sh.begin());
    return out;
}

void save_loss_trace_csv(const std::vector<LossRecord>& trace, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoFailure, "cannot open " + path);
    f << "step,t,v,l_fore,l_back,l_refine\n";
    char buf[128];
    for (const LossRecord& r : trace) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%.17g,%.17g\n", r.step, r.frame,
                      r.view, r.l_fore, r.l_back, r.l_total);
        f << buf;
    }
    if (!f) throw Error(ErrorKind::IoFailure, "write failed: " + path);
}

} // namespace g4d
