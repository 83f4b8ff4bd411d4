#include "g4d/render.hpp"

#include <algorithm>
#include <cmath>

#include "g4d/sh.hpp"

namespace g4d {

namespace {

constexpr double kLowPass = 0.3;        // px^2 isotropic dilation
constexpr double kAlphaClamp = 0.99;
constexpr double kAlphaMin = 1.0 / 255.0;
constexpr double kTransmittanceExit = 1e-4;
constexpr double kFootprintSigmas = 3.0;

std::vector<Splat2D> sorted_splats(const GaussianCloud& cloud, const Camera& cam) {
    std::vector<Splat2D> splats = project(cloud, cam);
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_index < b.gaussian_index;
    });
    return splats;
}

// Front-to-back blend of per-Gaussian payload channels. payload is indexed
// by gaussian_index (n x channels). Writes accumulated weights to alpha and
// optionally records (index, weight) per pixel.
void rasterize(const std::vector<Splat2D>& splats, int w, int h, const double* payload,
               int channels, Image* out, Image& alpha,
               std::vector<std::vector<PixelContrib>>* contributors) {
    std::vector<double> trans(size_t(w) * size_t(h), 1.0);
    for (const Splat2D& sp : splats) {
        double lmax = sp.cov2d.max_eigenvalue();
        double r = kFootprintSigmas * std::sqrt(lmax);
        int x0 = std::max(0, int(std::ceil(sp.center_px.x - r)));
        int x1 = std::min(w - 1, int(std::floor(sp.center_px.x + r)));
        int y0 = std::max(0, int(std::ceil(sp.center_px.y - r)));
        int y1 = std::min(h - 1, int(std::floor(sp.center_px.y + r)));
        double det = sp.cov2d.det();
        if (!(det > 0.0)) continue;
        double sigma = sp.opacity;
        const double* row = payload ? payload + size_t(sp.gaussian_index) * size_t(channels)
                                    : nullptr;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                size_t pix = size_t(y) * size_t(w) + size_t(x);
                double t = trans[pix];
                if (t < kTransmittanceExit) continue;
                double dx = double(x) - sp.center_px.x;
                double dy = double(y) - sp.center_px.y;
                double qf = sp.cov2d.inv_quadratic(dx, dy);
                if (qf > kFootprintSigmas * kFootprintSigmas) continue;
                double a = sigma * std::exp(-0.5 * qf);
                if (a > kAlphaClamp) a = kAlphaClamp;
                if (a < kAlphaMin) continue;
                double weight = a * t;
                if (out)
                    for (int c = 0; c < channels; ++c)
                        out->data[pix * size_t(channels) + size_t(c)] += weight * row[c];
                alpha.data[pix] += weight;
                if (contributors)
                    (*contributors)[pix].push_back({sp.gaussian_index, weight});
                trans[pix] = t * (1.0 - a);
            }
        }
    }
}

} // namespace

std::vector<Splat2D> project(const GaussianCloud& cloud, const Camera& cam) {
    validate_camera(cam);
    std::vector<Splat2D> out;
    out.reserve(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        Vec3 p = cam.to_camera(g.mu);
        if (!(p.z > cam.near_clip) || !(p.z < cam.far_clip)) continue;
        Vec2 center = cam.project_point(p);

        // J is the 2x3 Jacobian of the projection at the splat center.
        double j00, j02, j11, j12;
        if (cam.model == CameraModel::Orthographic) {
            j00 = cam.fx; j02 = 0.0;
            j11 = cam.fy; j12 = 0.0;
        } else {
            j00 = cam.fx / p.z; j02 = -cam.fx * p.x / (p.z * p.z);
            j11 = cam.fy / p.z; j12 = -cam.fy * p.y / (p.z * p.z);
        }
        // M = J * W, rows m0, m1 (row 0: j00*W0 + j02*W2; row 1: j11*W1 + j12*W2).
        Vec3 w0{cam.rot(0, 0), cam.rot(0, 1), cam.rot(0, 2)};
        Vec3 w1{cam.rot(1, 0), cam.rot(1, 1), cam.rot(1, 2)};
        Vec3 w2{cam.rot(2, 0), cam.rot(2, 1), cam.rot(2, 2)};
        Vec3 m0 = w0 * j00 + w2 * j02;
        Vec3 m1 = w1 * j11 + w2 * j12;

        Mat3 sigma = g.covariance();
        Vec3 sm0 = sigma * m0;
        Vec3 sm1 = sigma * m1;
        Sym2 cov;
        cov.a = m0.dot(sm0) + kLowPass;
        cov.b = m0.dot(sm1);
        cov.c = m1.dot(sm1) + kLowPass;

        double r = kFootprintSigmas * std::sqrt(cov.max_eigenvalue());
        if (center.x + r < 0.0 || center.x - r > double(cam.width - 1) ||
            center.y + r < 0.0 || center.y - r > double(cam.height - 1))
            continue;

        Splat2D sp;
        sp.center_px = center;
        sp.cov2d = cov;
        sp.depth = p.z;
        sp.gaussian_index = int(i);
        sp.opacity = g.sigma;
        out.push_back(sp);
    }
    return out;
}

RenderedMaps render_color(const GaussianCloud& cloud, const Camera& cam) {
    std::vector<Splat2D> splats = sorted_splats(cloud, cam);
    RenderedMaps maps;
    maps.color_raw = Image(cam.width, cam.height, 3);
    maps.alpha_acc = Image(cam.width, cam.height, 1);

    std::vector<double> colors(cloud.size() * 3);
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        auto c = sh_color(g.sh, cloud.sh_degree, cam.view_dir(g.mu));
        colors[i * 3 + 0] = c[0];
        colors[i * 3 + 1] = c[1];
        colors[i * 3 + 2] = c[2];
    }
    rasterize(splats, cam.width, cam.height, colors.data(), 3, &maps.color_raw,
              maps.alpha_acc, nullptr);

    maps.color = maps.color_raw;
    for (double& v : maps.color.data) v = std::clamp(v, 0.0, 1.0);
    return maps;
}

RenderedMaps render_flow(const GaussianCloud& cloud_t, const std::vector<Vec3>& positions_1,
                         const Camera& cam) {
    if (positions_1.size() != cloud_t.size())
        throw Error(ErrorKind::SizeMismatch, "render_flow: position array length != cloud length");
    std::vector<Splat2D> splats = sorted_splats(cloud_t, cam);

    std::vector<double> disp(cloud_t.size() * 2, 0.0);
    for (size_t i = 0; i < cloud_t.size(); ++i) {
        Vec3 pt = cam.to_camera(cloud_t.gaussians[i].mu);
        Vec3 p1 = cam.to_camera(positions_1[i]);
        if (cam.model == CameraModel::Pinhole && (p1.z <= 1e-9 || pt.z <= 1e-9))
            continue;  // frame-1 position unprojectable; contributes zero flow
        Vec2 a = cam.project_point(pt);
        Vec2 b = cam.project_point(p1);
        disp[i * 2 + 0] = a.x - b.x;
        disp[i * 2 + 1] = a.y - b.y;
    }

    RenderedMaps maps;
    maps.flow = Image(cam.width, cam.height, 2);
    maps.alpha_acc = Image(cam.width, cam.height, 1);
    rasterize(splats, cam.width, cam.height, disp.data(), 2, &maps.flow, maps.alpha_acc,
              nullptr);
    return maps;
}

Image warp_frame1(const Image& render1, const Image& flow, const Image& alpha_t) {
    if (flow.width != render1.width || flow.height != render1.height || flow.channels != 2)
        throw Error(ErrorKind::DimensionMismatch, "warp_frame1: flow shape mismatch");
    if (alpha_t.width != render1.width || alpha_t.height != render1.height ||
        alpha_t.channels != 1)
        throw Error(ErrorKind::DimensionMismatch, "warp_frame1: alpha shape mismatch");

    int w = render1.width, h = render1.height, ch = render1.channels;
    Image out = render1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!(alpha_t.at(x, y, 0) > 0.01)) continue;
            double sx = double(x) - flow.at(x, y, 0);
            double sy = double(y) - flow.at(x, y, 1);
            sx = std::clamp(sx, 0.0, double(w - 1));
            sy = std::clamp(sy, 0.0, double(h - 1));
            int x0 = int(std::floor(sx));
            int y0 = int(std::floor(sy));
            if (x0 > w - 2) x0 = std::max(0, w - 2);
            if (y0 > h - 2) y0 = std::max(0, h - 2);
            double fx = sx - double(x0);
            double fy = sy - double(y0);
            int x1 = std::min(x0 + 1, w - 1);
            int y1 = std::min(y0 + 1, h - 1);
            for (int c = 0; c < ch; ++c) {
                if (fx == 0.0 && fy == 0.0) {
                    out.at(x, y, c) = render1.at(x0, y0, c);
                    continue;
                }
                double v = (1.0 - fx) * (1.0 - fy) * render1.at(x0, y0, c) +
                           fx * (1.0 - fy) * render1.at(x1, y0, c) +
                           (1.0 - fx) * fy * render1.at(x0, y1, c) +
                           fx * fy * render1.at(x1, y1, c);
                out.at(x, y, c) = v;
            }
        }
    }
    return out;
}

RenderedMaps render_uncertainty(const std::vector<double>& xi, const GaussianCloud& cloud_t,
                                const Camera& cam) {
    if (xi.size() != cloud_t.size())
        throw Error(ErrorKind::SizeMismatch, "render_uncertainty: xi length != cloud length");
    for (double v : xi)
        if (!(v >= 0.0 && v <= 1.0))
            throw Error(ErrorKind::InvariantViolation, "render_uncertainty: xi outside [0,1]");
    std::vector<Splat2D> splats = sorted_splats(cloud_t, cam);
    RenderedMaps maps;
    maps.uncertainty = Image(cam.width, cam.height, 1);
    maps.alpha_acc = Image(cam.width, cam.height, 1);
    rasterize(splats, cam.width, cam.height, xi.data(), 1, &maps.uncertainty, maps.alpha_acc,
              nullptr);
    return maps;
}

// -------------------------------------------------------------------------
// Frozen-context rendering and SH gradients
// -------------------------------------------------------------------------

RenderContext build_context(const GaussianCloud& cloud, const Camera& cam) {
    std::vector<Splat2D> splats = sorted_splats(cloud, cam);
    RenderContext ctx;
    ctx.width = cam.width;
    ctx.height = cam.height;
    ctx.n = int(cloud.size());
    ctx.degree = cloud.sh_degree;
    ctx.n_basis = sh_coeff_count(cloud.sh_degree);
    ctx.contributors.assign(size_t(cam.width) * size_t(cam.height), {});
    ctx.alpha_acc = Image(cam.width, cam.height, 1);
    rasterize(splats, cam.width, cam.height, nullptr, 0, nullptr, ctx.alpha_acc,
              &ctx.contributors);

    ctx.basis.resize(cloud.size() * size_t(ctx.n_basis));
    for (size_t i = 0; i < cloud.size(); ++i)
        sh_basis(cam.view_dir(cloud.gaussians[i].mu), cloud.sh_degree,
                 ctx.basis.data() + i * size_t(ctx.n_basis));
    return ctx;
}

void context_render(const RenderContext& ctx, const double* sh_flat, Image* clamped,
                    Image* raw) {
    int nb = ctx.n_basis;
    size_t n_sh = size_t(3) * size_t(nb);
    std::vector<double> colors(size_t(ctx.n) * 3);
    for (int i = 0; i < ctx.n; ++i) {
        const double* basis = ctx.basis.data() + size_t(i) * size_t(nb);
        const double* sh = sh_flat + size_t(i) * n_sh;
        for (int c = 0; c < 3; ++c) {
            double v = 0.5;
            for (int b = 0; b < nb; ++b) v += basis[b] * sh[size_t(b) * 3 + size_t(c)];
            colors[size_t(i) * 3 + size_t(c)] = v;
        }
    }
    Image raw_local;
    Image* raw_out = raw;
    if (!raw_out) {
        raw_local = Image(ctx.width, ctx.height, 3);
        raw_out = &raw_local;
    } else {
        *raw_out = Image(ctx.width, ctx.height, 3);
    }
    for (size_t pix = 0; pix < ctx.contributors.size(); ++pix) {
        double acc[3] = {0.0, 0.0, 0.0};
        for (const PixelContrib& pc : ctx.contributors[pix]) {
            const double* col = colors.data() + size_t(pc.index) * 3;
            acc[0] += pc.weight * col[0];
            acc[1] += pc.weight * col[1];
            acc[2] += pc.weight * col[2];
        }
        raw_out->data[pix * 3 + 0] = acc[0];
        raw_out->data[pix * 3 + 1] = acc[1];
        raw_out->data[pix * 3 + 2] = acc[2];
    }
    if (clamped) {
        *clamped = *raw_out;
        for (double& v : clamped->data) v = std::clamp(v, 0.0, 1.0);
    }
}

// -------------------------------------------------------------------------
// SSIM with analytic backward
// -------------------------------------------------------------------------

namespace {

struct SsimKernel {
    static constexpr int kRadius = 5;  // 11x11 window
    double w[2 * kRadius + 1];
    SsimKernel() {
        double sum = 0.0;
        for (int i = -kRadius; i <= kRadius; ++i) {
            w[i + kRadius] = std::exp(-double(i * i) / (2.0 * 1.5 * 1.5));
            sum += w[i + kRadius];
        }
        for (double& v : w) v /= sum;
    }
};

const SsimKernel& ssim_kernel() {
    static SsimKernel k;
    return k;
}

// Separable Gaussian filter with zero padding; self-adjoint on the image
// domain, which the backward pass relies on.
void filter2d(const std::vector<double>& in, int w, int h, std::vector<double>& tmp,
              std::vector<double>& out) {
    const SsimKernel& k = ssim_kernel();
    constexpr int R = SsimKernel::kRadius;
    tmp.assign(in.size(), 0.0);
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        const double* row = in.data() + size_t(y) * size_t(w);
        double* trow = tmp.data() + size_t(y) * size_t(w);
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            int lo = std::max(-R, -x), hi = std::min(R, w - 1 - x);
            for (int i = lo; i <= hi; ++i) acc += k.w[i + R] * row[x + i];
            trow[x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        int lo = std::max(-R, -y), hi = std::min(R, h - 1 - y);
        double* orow = out.data() + size_t(y) * size_t(w);
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = lo; i <= hi; ++i) acc += k.w[i + R] * tmp[size_t(y + i) * size_t(w) + size_t(x)];
            orow[x] = acc;
        }
    }
}

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

// Sum over masked pixels of SSIM(a, b) for one channel, plus dS/da when
// grad is non-null. a and b are already mask-multiplied.
double ssim_masked_sum(const std::vector<double>& a, const std::vector<double>& b,
                       const std::vector<double>& mask, int w, int h,
                       std::vector<double>* grad) {
    size_t npix = a.size();
    std::vector<double> tmp, mu_a, mu_b, e_a2, e_b2, e_ab, prod(npix);
    filter2d(a, w, h, tmp, mu_a);
    filter2d(b, w, h, tmp, mu_b);
    for (size_t i = 0; i < npix; ++i) prod[i] = a[i] * a[i];
    filter2d(prod, w, h, tmp, e_a2);
    for (size_t i = 0; i < npix; ++i) prod[i] = b[i] * b[i];
    filter2d(prod, w, h, tmp, e_b2);
    for (size_t i = 0; i < npix; ++i) prod[i] = a[i] * b[i];
    filter2d(prod, w, h, tmp, e_ab);

    std::vector<double> g_mu, g_ea2, g_eab;
    if (grad) {
        g_mu.assign(npix, 0.0);
        g_ea2.assign(npix, 0.0);
        g_eab.assign(npix, 0.0);
    }

    double total = 0.0;
    for (size_t i = 0; i < npix; ++i) {
        if (!(mask[i] > 0.5)) continue;
        double ma = mu_a[i], mb = mu_b[i];
        double sa2 = e_a2[i] - ma * ma;
        double sb2 = e_b2[i] - mb * mb;
        double sab = e_ab[i] - ma * mb;
        double A = 2.0 * ma * mb + kSsimC1;
        double B = 2.0 * sab + kSsimC2;
        double C = ma * ma + mb * mb + kSsimC1;
        double D = sa2 + sb2 + kSsimC2;
        double denom = C * D;
        double ssim = (A * B) / denom;
        total += ssim;
        if (grad) {
            // Independent filtered variables: mu_a, E[a^2], E[ab].
            double d_mu = (2.0 * mb * (B - A) * denom - A * B * 2.0 * ma * (D - C)) /
                          (denom * denom);
            double d_ea2 = -(A * B) / (C * D * D);
            double d_eab = 2.0 * A / denom;
            g_mu[i] = d_mu;
            g_ea2[i] = d_ea2;
            g_eab[i] = d_eab;
        }
    }

    if (grad) {
        std::vector<double> c_mu, c_ea2, c_eab;
        filter2d(g_mu, w, h, tmp, c_mu);
        filter2d(g_ea2, w, h, tmp, c_ea2);
        filter2d(g_eab, w, h, tmp, c_eab);
        grad->assign(npix, 0.0);
        for (size_t i = 0; i < npix; ++i)
            (*grad)[i] = c_mu[i] + 2.0 * a[i] * c_ea2[i] + b[i] * c_eab[i];
    }
    return total;
}

} // namespace

MaskedLoss masked_loss_grad(const RenderContext& ctx, const Image& render_clamped,
                            const Image& render_raw, const Image& target, const Image& mask,
                            double eta, Image* dl_draw, double scale) {
    if (target.width != ctx.width || target.height != ctx.height || target.channels != 3)
        throw Error(ErrorKind::DimensionMismatch, "loss: target shape mismatch");
    if (mask.width != ctx.width || mask.height != ctx.height || mask.channels != 1)
        throw Error(ErrorKind::DimensionMismatch, "loss: mask shape mismatch");
    if (dl_draw && (!dl_draw->same_shape(target)))
        throw Error(ErrorKind::DimensionMismatch, "loss: gradient buffer shape mismatch");

    size_t npix = size_t(ctx.width) * size_t(ctx.height);
    MaskedLoss result;
    int m_count = 0;
    for (size_t i = 0; i < npix; ++i)
        if (mask.data[i] > 0.5) ++m_count;
    result.masked_pixels = m_count;
    if (m_count == 0) return result;  // loss 0, gradient untouched

    double norm = 1.0 / (3.0 * double(m_count));

    // L1 over masked pixels.
    double l1 = 0.0;
    for (size_t i = 0; i < npix; ++i) {
        if (!(mask.data[i] > 0.5)) continue;
        for (int c = 0; c < 3; ++c)
            l1 += std::fabs(render_clamped.data[i * 3 + c] - target.data[i * 3 + c]);
    }
    l1 *= norm;
    result.l1 = l1;

    // SSIM on mask-multiplied images.
    double ssim_sum = 0.0;
    std::vector<std::vector<double>> ssim_grads(3);
    if (eta > 0.0) {
        std::vector<double> a(npix), b(npix);
        for (int c = 0; c < 3; ++c) {
            for (size_t i = 0; i < npix; ++i) {
                double m = mask.data[i] > 0.5 ? 1.0 : 0.0;
                a[i] = m * render_clamped.data[i * 3 + c];
                b[i] = m * target.data[i * 3 + c];
            }
            ssim_sum += ssim_masked_sum(a, b, mask.data, ctx.width, ctx.height,
                                        dl_draw ? &ssim_grads[c] : nullptr);
        }
        result.ssim_term = 1.0 - ssim_sum * norm;
    }

    result.loss = (1.0 - eta) * l1 + eta * result.ssim_term;

    if (dl_draw) {
        for (size_t i = 0; i < npix; ++i) {
            bool masked = mask.data[i] > 0.5;
            for (int c = 0; c < 3; ++c) {
                double raw = render_raw.data[i * 3 + c];
                if (!(raw > 0.0 && raw < 1.0)) continue;  // clamp gate
                double g = 0.0;
                if (masked) {
                    double diff = render_clamped.data[i * 3 + c] - target.data[i * 3 + c];
                    double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                    g += (1.0 - eta) * sgn * norm;
                    if (eta > 0.0) g += eta * (-norm) * ssim_grads[c][i];
                }
                if (g != 0.0) dl_draw->data[i * 3 + c] += scale * g;
            }
        }
    }
    return result;
}

void accumulate_sh_grad(const RenderContext& ctx, const Image& dl_draw,
                        std::vector<double>& grad) {
    size_t n_sh = size_t(3) * size_t(ctx.n_basis);
    if (grad.size() != size_t(ctx.n) * n_sh)
        throw Error(ErrorKind::SizeMismatch, "sh gradient buffer size mismatch");
    size_t npix = size_t(ctx.width) * size_t(ctx.height);
    for (size_t pix = 0; pix < npix; ++pix) {
        const double* d = dl_draw.data.data() + pix * 3;
        if (d[0] == 0.0 && d[1] == 0.0 && d[2] == 0.0) continue;
        for (const PixelContrib& pc : ctx.contributors[pix]) {
            const double* basis = ctx.basis.data() + size_t(pc.index) * size_t(ctx.n_basis);
            double* g = grad.data() + size_t(pc.index) * n_sh;
            for (int b = 0; b < ctx.n_basis; ++b) {
                double wb = pc.weight * basis[b];
                g[size_t(b) * 3 + 0] += d[0] * wb;
                g[size_t(b) * 3 + 1] += d[1] * wb;
                g[size_t(b) * 3 + 2] += d[2] * wb;
            }
        }
    }
}

std::pair<double, std::vector<double>> masked_loss_and_sh_gradient(
    const GaussianCloud& cloud, const Camera& cam, const Image& target, const Image& mask,
    double eta) {
    RenderContext ctx = build_context(cloud, cam);
    size_t n_sh = size_t(3) * size_t(ctx.n_basis);
    std::vector<double> sh_flat(size_t(ctx.n) * n_sh);
    for (size_t i = 0; i < cloud.size(); ++i)
        std::copy(cloud.gaussians[i].sh.begin(), cloud.gaussians[i].sh.end(),
                  sh_flat.begin() + i * n_sh);

    Image clamped, raw;
    context_render(ctx, sh_flat.data(), &clamped, &raw);
    Image dl(ctx.width, ctx.height, 3);
    MaskedLoss ml = masked_loss_grad(ctx, clamped, raw, target, mask, eta, &dl, 1.0);
    std::vector<double> grad(size_t(ctx.n) * n_sh, 0.0);
    accumulate_sh_grad(ctx, dl, grad);
    return {ml.loss, std::move(grad)};
}

} // namespace g4d
