#pragma once

#include <utility>
#include <vector>

#include "g4d/common.hpp"
#include "g4d/image.hpp"
#include "g4d/types.hpp"

namespace g4d {

struct Splat2D {
    Vec2 center_px;
    Sym2 cov2d;           // projected covariance + 0.3 px^2 low-pass, PD
    double depth = 0.0;   // camera-space z
    double opacity = 0.0; // sigma of the source Gaussian
    int gaussian_index = -1;
};

struct RenderedMaps {
    Image color;        // H x W x 3, clamped to [0,1]
    Image color_raw;    // pre-clamp blend, kept for gradient clamp gating
    Image alpha_acc;    // H x W x 1
    Image flow;         // H x W x 2 when produced by render_flow
    Image uncertainty;  // H x W x 1 when produced by render_uncertainty
};

// One blended contribution at a pixel: gaussian index and alpha*transmittance.
struct PixelContrib {
    int index;
    double weight;
};

// Frozen per-(cloud, camera) rasterization record: blend weights and
// per-Gaussian SH basis values. Valid while geometry/opacity are unchanged;
// lets SH-only optimization re-render and differentiate cheaply.
struct RenderContext {
    int width = 0, height = 0;
    int n = 0;           // cloud size
    int degree = 0;
    int n_basis = 0;     // (degree+1)^2
    std::vector<std::vector<PixelContrib>> contributors;  // per pixel, front-to-back
    Image alpha_acc;
    std::vector<double> basis;  // n * n_basis, per-gaussian basis at this view
};

struct MaskedLoss {
    double loss = 0.0;
    double l1 = 0.0;
    double ssim_term = 0.0;  // 1 - mean masked SSIM
    int masked_pixels = 0;
};

// Projects in-frustum Gaussians; cov2d = J W Sigma W^T J^T + 0.3 I. Splats
// whose 3-sigma footprint misses the image are dropped. Cloud order kept.
std::vector<Splat2D> project(const GaussianCloud& cloud, const Camera& cam);

// Front-to-back alpha blending over depth-sorted splats. Pixels sample at
// integer coordinates; alpha clamped to 0.99, contributions below 1/255
// skipped, per-pixel loop stops once transmittance < 1e-4.
RenderedMaps render_color(const GaussianCloud& cloud, const Camera& cam);

// Per-Gaussian projected displacement Proj(mu_t) - Proj(mu_1) blended with
// the frame-t weights. positions_1 aligned with cloud_t by index.
RenderedMaps render_flow(const GaussianCloud& cloud_t, const std::vector<Vec3>& positions_1,
                         const Camera& cam);

// Backward bilinear warp: out(x) = render1 sampled at x - flow(x) where
// alpha_t(x) > 0.01, else render1(x); samples clamp to the border.
Image warp_frame1(const Image& render1, const Image& flow, const Image& alpha_t);

// U = sum xi_i * alpha_i * prod(1 - alpha_j) with frame-t splats.
RenderedMaps render_uncertainty(const std::vector<double>& xi, const GaussianCloud& cloud_t,
                                const Camera& cam);

RenderContext build_context(const GaussianCloud& cloud, const Camera& cam);

// Re-renders color through a frozen context; sh_flat is n * 3*n_basis with
// the cloud's coefficient layout. Either output may be null.
void context_render(const RenderContext& ctx, const double* sh_flat, Image* clamped,
                    Image* raw);

// Masked L1 + SSIM loss between a context render and a target, with the
// derivative w.r.t. the pre-clamp render accumulated into dl_draw
// (scaled by `scale`) when dl_draw is non-null.
MaskedLoss masked_loss_grad(const RenderContext& ctx, const Image& render_clamped,
                            const Image& render_raw, const Image& target, const Image& mask,
                            double eta, Image* dl_draw, double scale);

// Chain rule from a per-pixel render derivative into per-Gaussian SH
// coefficients through the frozen blend weights and basis values.
void accumulate_sh_grad(const RenderContext& ctx, const Image& dl_draw,
                        std::vector<double>& grad);

// Loss and per-Gaussian SH gradient, flat layout n * 3*(degree+1)^2.
std::pair<double, std::vector<double>> masked_loss_and_sh_gradient(
    const GaussianCloud& cloud, const Camera& cam, const Image& target, const Image& mask,
    double eta);

} // namespace g4d
