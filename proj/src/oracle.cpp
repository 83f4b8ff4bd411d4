#include "g4d/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "g4d/sh.hpp"

namespace g4d {

namespace {

constexpr double kC0 = 0.28209479177387814;

// Deterministic near-uniform positions: cubic grid restricted to a ball,
// evenly subsampled to n points, then jittered by +-0.15 pitch per axis.
std::vector<Vec3> jittered_ball_positions(int n, Rng& rng) {
    const double r_max = 0.95;
    double volume = 4.0 / 3.0 * 3.14159265358979323846 * r_max * r_max * r_max;
    double pitch = std::cbrt(volume / (1.15 * double(n)));
    for (int attempt = 0; attempt < 10; ++attempt) {
        std::vector<Vec3> grid;
        int half = int(std::ceil(r_max / pitch));
        for (int iz = -half; iz <= half; ++iz)
            for (int iy = -half; iy <= half; ++iy)
                for (int ix = -half; ix <= half; ++ix) {
                    Vec3 p{double(ix) * pitch, double(iy) * pitch, double(iz) * pitch};
                    if (p.norm() <= r_max) grid.push_back(p);
                }
        if (int(grid.size()) >= n) {
            std::vector<Vec3> out;
            out.reserve(size_t(n));
            for (int i = 0; i < n; ++i) {
                Vec3 p = grid[size_t(i) * grid.size() / size_t(n)];
                p.x += pitch * 0.15 * rng.uniform(-1.0, 1.0);
                p.y += pitch * 0.15 * rng.uniform(-1.0, 1.0);
                p.z += pitch * 0.15 * rng.uniform(-1.0, 1.0);
                out.push_back(p);
            }
            return out;
        }
        pitch *= 0.9;
    }
    throw Error(ErrorKind::InvariantViolation, "ball grid generation failed");
}

Camera ring_camera(double radius, double angle, double fx, int size, double depth_z) {
    Camera cam;
    cam.model = CameraModel::Pinhole;
    cam.rot = Mat3::identity();
    Vec3 pos{radius * std::cos(angle), radius * std::sin(angle), depth_z};
    cam.trans = pos * -1.0;  // world-to-camera with identity rotation
    cam.fx = cam.fy = fx;
    cam.cx = cam.cy = (double(size) - 1.0) / 2.0;
    cam.width = cam.height = size;
    cam.near_clip = 0.1;
    cam.far_clip = 100.0;
    return cam;
}

// Axis-aligned planar grid of identical Gaussians at fixed z layers.
void add_plate(GaussianCloud& cloud, double x_lo, double x_hi, double y_lo, double y_hi,
               double pitch, const std::vector<double>& z_layers, double scale_xy,
               double sigma, const std::vector<double>& sh) {
    int nx = int(std::lround((x_hi - x_lo) / pitch)) + 1;
    int ny = int(std::lround((y_hi - y_lo) / pitch)) + 1;
    for (double z : z_layers)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                Gaussian g;
                g.mu = {x_lo + ix * pitch, y_lo + iy * pitch, z};
                g.q = {1, 0, 0, 0};
                g.s = {scale_xy, scale_xy, 0.01};
                g.sigma = sigma;
                g.sh = sh;
                cloud.gaussians.push_back(std::move(g));
            }
}

} // namespace

// -------------------------------------------------------------------------
// Rigid-rotation scene
// -------------------------------------------------------------------------

OracleScene make_rigid_scene(int n, const Vec3& axis, double omega, int t_frames,
                             std::uint64_t seed, bool with_clones) {
    if (n < 8) throw Error(ErrorKind::BadConfig, "rigid scene needs n >= 8");
    if (t_frames < 1) throw Error(ErrorKind::BadConfig, "rigid scene needs t_frames >= 1");
    double axis_norm = axis.norm();
    if (axis_norm < 1e-12)
        throw Error(ErrorKind::BadConfig, "rigid scene axis must be nonzero");
    Vec3 axis_n = axis * (1.0 / axis_norm);

    OracleScene scene;
    scene.tag = "rigid";

    Rng rng(derive_seed(seed, "rigid-scene"));
    std::vector<Vec3> centers = jittered_ball_positions(n, rng);

    scene.source.sh_degree = 1;
    scene.source.frame = 1;
    scene.source.gaussians.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        g.mu = centers[size_t(i)];
        g.s = {rng.uniform(0.008, 0.012), rng.uniform(0.008, 0.012),
               rng.uniform(0.008, 0.012)};
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        q = q.normalized();
        if (q.w < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
        g.q = q;
        g.sigma = rng.uniform(0.6, 1.0);
        g.sh.resize(12);
        for (int c = 0; c < 3; ++c) g.sh[size_t(c)] = rng.uniform(-0.4, 0.4);
        for (int b = 1; b < 4; ++b)
            for (int c = 0; c < 3; ++c)
                g.sh[size_t(b) * 3 + size_t(c)] = rng.uniform(-0.1, 0.1);
        scene.source.gaussians.push_back(std::move(g));
    }

    // Recolor edit: DC shift, geometry untouched.
    scene.edited = scene.source;
    for (Gaussian& g : scene.edited.gaussians) {
        g.sh[0] += 0.5;
        g.sh[1] -= 0.4;
        g.sh[2] += 0.3;
    }
    scene.n_base = n;

    if (with_clones) {
        int n_clones = n / 10;
        for (int j = 0; j < n_clones; ++j) {
            int parent = j * 10;
            Gaussian g = scene.edited.gaussians[size_t(parent)];
            Vec3 jitter;
            double norm = 0.0;
            do {
                jitter = {0.01 * rng.normal(), 0.01 * rng.normal(), 0.01 * rng.normal()};
                norm = jitter.norm();
            } while (norm < 0.003);
            g.mu = g.mu + jitter;
            scene.edited.gaussians.push_back(std::move(g));
            scene.clone_parent.push_back(parent);
            scene.clone_jitter.push_back(norm);
        }
    }

    DeformationField analytic;
    analytic.kind = MotionKind::RigidRotation;
    analytic.n_frames = t_frames;
    analytic.axis = axis_n;
    analytic.center = {0, 0, 0};
    analytic.omega = omega;
    scene.field = tabulate_field(analytic, scene.source);

    scene.expected_positions.resize(size_t(t_frames));
    for (int t = 1; t <= t_frames; ++t) {
        Mat3 rot = Mat3::axis_angle(axis_n, omega * double(t - 1));
        auto& row = scene.expected_positions[size_t(t - 1)];
        row.reserve(scene.edited.size());
        for (const Gaussian& g : scene.edited.gaussians) row.push_back(rot * g.mu);
    }

    scene.cameras.push_back(ring_camera(0.0, 0.0, 200.0, 160, -3.0));
    scene.cameras.push_back(ring_camera(0.5, 1.5707963267948966, 200.0, 160, -3.0));

    validate_cloud(scene.source);
    validate_cloud(scene.edited);
    return scene;
}

// -------------------------------------------------------------------------
// Occlusion scene
// -------------------------------------------------------------------------

OracleScene make_occlusion_scene(std::uint64_t seed) {
    OracleScene scene;
    scene.tag = "occlusion";

    const int t_frames = 10;
    const double wall_color[3] = {0.55, 0.45, 0.5};
    std::vector<double> wall_sh(12, 0.0);
    for (int c = 0; c < 3; ++c) wall_sh[size_t(c)] = (wall_color[c] - 0.5) / kC0;

    GaussianCloud& cloud = scene.edited;
    cloud.sh_degree = 1;
    cloud.frame = 1;

    // Static backdrop wall at z ~ 4, spanning the full view of every camera.
    add_plate(cloud, -1.9, 1.9, -1.9, 1.9, 3.8 / 32.0, {4.0, 4.06, 4.12},
              1.5 * 3.8 / 32.0, 0.99, wall_sh);
    int wall_end = int(cloud.size());

    // Opaque cover slab at z ~ 3 in the same color, sliding +x over time.
    // Five stacked layers push transmittance below the 1e-4 blending exit,
    // so at frame 1 nothing behind it reaches the image.
    add_plate(cloud, 0.0, 2.2, -1.3, 1.3, 0.1, {3.0, 3.03, 3.06, 3.09, 3.12}, 0.15,
              0.99, wall_sh);
    int cover_end = int(cloud.size());

    // Inner patch at z ~ 3.5, hidden at frame 1, revealed as the cover
    // slides away while the patch drifts toward the camera.
    scene.inner_begin = cover_end;
    add_plate(cloud, 0.25, 1.05, -0.5, 0.5, 0.05, {3.5, 3.54}, 0.075, 0.99, wall_sh);
    scene.inner_end = int(cloud.size());

    // Corrupt the inner colors: shifted DC plus spurious view-dependence.
    Rng rng(derive_seed(seed, "occlusion-scene"));
    scene.clean = cloud;
    for (int i = scene.inner_begin; i < scene.inner_end; ++i) {
        Gaussian& g = cloud.gaussians[size_t(i)];
        g.sh[0] += rng.uniform(0.65, 0.95);
        g.sh[1] -= rng.uniform(0.65, 0.95);
        g.sh[2] += rng.uniform(0.45, 0.75);
        for (int b = 1; b < 4; ++b)
            for (int c = 0; c < 3; ++c)
                g.sh[size_t(b) * 3 + size_t(c)] = rng.uniform(-0.25, 0.25);
    }

    scene.source = scene.edited;
    scene.n_base = int(cloud.size());

    // Tabulated field: cover slides +x, inner drifts (+x, -z), wall static.
    const Vec3 cover_vel{0.075, 0.0, 0.0};
    const Vec3 inner_vel{0.008, 0.0, -0.022};
    DeformationField& field = scene.field;
    field.kind = MotionKind::Tabulated;
    field.n_frames = t_frames;
    field.frames.resize(size_t(t_frames));
    size_t count = cloud.size();
    for (int t = 1; t <= t_frames; ++t) {
        FrameDelta& fd = field.frames[size_t(t - 1)];
        fd.dmu.assign(count, Vec3{});
        fd.dq.assign(count, Quat{0, 0, 0, 0});
        fd.ds.assign(count, Vec3{});
        for (int i = wall_end; i < cover_end; ++i)
            fd.dmu[size_t(i)] = cover_vel * double(t - 1);
        for (int i = scene.inner_begin; i < scene.inner_end; ++i)
            fd.dmu[size_t(i)] = inner_vel * double(t - 1);
    }

    scene.expected_positions.resize(size_t(t_frames));
    for (int t = 1; t <= t_frames; ++t) {
        auto& row = scene.expected_positions[size_t(t - 1)];
        row.reserve(count);
        const FrameDelta& fd = field.frames[size_t(t - 1)];
        for (size_t i = 0; i < count; ++i)
            row.push_back(cloud.gaussians[i].mu + fd.dmu[i]);
    }

    for (int v = 0; v < 8; ++v)
        scene.cameras.push_back(
            ring_camera(0.25, 2.0 * 3.14159265358979323846 * double(v) / 8.0, 160.0,
                        128, 0.0));

    validate_cloud(scene.edited);
    validate_cloud(scene.clean);
    return scene;
}

// -------------------------------------------------------------------------
// Brute-force unbalanced Sinkhorn
// -------------------------------------------------------------------------

TransportPlan brute_force_sinkhorn(const CostMatrix& cost, const SinkhornConfig& config) {
    if (cost.n <= 0 || cost.m <= 0)
        throw Error(ErrorKind::EmptyInput, "brute_force_sinkhorn: empty cost matrix");
    if (cost.n > 8 || cost.m > 8)
        throw Error(ErrorKind::OracleSizeExceeded, "brute_force_sinkhorn: limited to 8x8");
    if (!(config.lambda0 > 0.0) || !(config.lambda1 > 0.0) || !(config.lambda2 > 0.0))
        throw Error(ErrorKind::BadConfig, "brute_force_sinkhorn: weights must be positive");

    int n = cost.n, m = cost.m;
    double a = 1.0 / double(n), b = 1.0 / double(m);
    double p1 = config.lambda1 / (config.lambda1 + config.lambda0);
    double p2 = config.lambda2 / (config.lambda2 + config.lambda0);

    std::vector<double> kernel(size_t(n) * size_t(m));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            kernel[size_t(i) * size_t(m) + size_t(j)] = std::exp(-cost.at(i, j) / config.lambda0);

    std::vector<double> u(size_t(n), 1.0), v(size_t(m), 1.0);
    TransportPlan plan;
    plan.n = n;
    plan.m = m;
    const int max_sweeps = 20000;
    const double tol = 1e-12;
    for (int it = 0; it < max_sweeps; ++it) {
        double change = 0.0;
        for (int i = 0; i < n; ++i) {
            double kv = 0.0;
            for (int j = 0; j < m; ++j) kv += kernel[size_t(i) * size_t(m) + size_t(j)] * v[size_t(j)];
            double nu = std::pow(a / kv, p1);
            change = std::max(change, std::fabs(std::log(nu) - std::log(u[size_t(i)])));
            u[size_t(i)] = nu;
        }
        for (int j = 0; j < m; ++j) {
            double ku = 0.0;
            for (int i = 0; i < n; ++i) ku += kernel[size_t(i) * size_t(m) + size_t(j)] * u[size_t(i)];
            double nv = std::pow(b / ku, p2);
            change = std::max(change, std::fabs(std::log(nv) - std::log(v[size_t(j)])));
            v[size_t(j)] = nv;
        }
        plan.iterations = it + 1;
        plan.marginal_err = change;
        if (change < tol) {
            plan.converged = true;
            break;
        }
    }

    plan.P.resize(size_t(n) * size_t(m));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            plan.P[size_t(i) * size_t(m) + size_t(j)] =
                u[size_t(i)] * kernel[size_t(i) * size_t(m) + size_t(j)] * v[size_t(j)];
    return plan;
}

} // namespace g4d
