#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g4d/common.hpp"
#include "g4d/vec.hpp"

namespace g4d {

// -------------------------------------------------------------------------
// Gaussian primitive
// -------------------------------------------------------------------------

struct Gaussian {
    Vec3 mu;
    Quat q;                  // unit within 1e-6 after construction/update
    Vec3 s;                  // per-axis scale, all components > 0
    double sigma = 1.0;      // opacity in [0,1]
    std::vector<double> sh;  // 3*(deg+1)^2 coeffs, layout sh[band*3 + channel]

    // World covariance Sigma = R S S^T R^T.
    Mat3 covariance() const {
        Mat3 r = Mat3::from_quat(q);
        Mat3 ss = Mat3::diag(s.x * s.x, s.y * s.y, s.z * s.z);
        return r * ss * r.transposed();
    }
};

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

struct GaussianCloud {
    std::vector<Gaussian> gaussians;
    int sh_degree = 0;  // in [0,3]
    int frame = 1;      // 1-based; frame 1 is the canonical first frame

    size_t size() const { return gaussians.size(); }
};

// Checks all type invariants; throws InvariantViolation on failure.
void validate_cloud(const GaussianCloud& cloud);

// -------------------------------------------------------------------------
// Deformation field
// -------------------------------------------------------------------------

enum class MotionKind {
    Tabulated,
    TranslationRamp,   // delta_mu = velocity * (t-1)
    RigidRotation,     // rotation by omega*(t-1) about axis through center
    SinusoidalShear,   // delta_mu.x = amp * sin(omega*(t-1)) * mu.y
};

struct FrameDelta {
    std::vector<Vec3> dmu;
    std::vector<Quat> dq;  // additive quaternion delta
    std::vector<Vec3> ds;  // additive scale delta (source representation)
};

struct DeformationField {
    MotionKind kind = MotionKind::Tabulated;
    int n_frames = 1;

    // Tabulated payload, frames[t-1] for t = 1..n_frames.
    std::vector<FrameDelta> frames;

    // Analytic parameters.
    Vec3 velocity;                   // TranslationRamp
    Vec3 axis{0, 0, 1}, center;      // RigidRotation
    double omega = 0.0;              // RigidRotation angular step per frame
    double amp = 0.0, shear_omega = 0.0;  // SinusoidalShear
};

// Evaluates the field for frame t against a canonical cloud. t=1 yields
// exact zeros for every kind. Tabulated fields must match the cloud length.
FrameDelta eval_field(const DeformationField& field, const GaussianCloud& cloud, int t);

// Converts an analytic field to a tabulated one over the given cloud.
DeformationField tabulate_field(const DeformationField& field, const GaussianCloud& cloud);

// mu += dmu, q = normalize(q + dq), s += ds; sigma/sh unchanged; frame = t.
GaussianCloud deform_source(const GaussianCloud& cloud, const DeformationField& field, int t);

// Per-Gaussian deltas with the scale channel converted to the
// multiplicative ratio (s + ds) / s the edited cloud consumes.
struct SourceDelta {
    std::vector<Vec3> dmu;
    std::vector<Quat> dq;
    std::vector<Vec3> ds_ratio;
};
SourceDelta source_delta(const GaussianCloud& cloud, const DeformationField& field, int t);

// -------------------------------------------------------------------------
// Camera
// -------------------------------------------------------------------------

enum class CameraModel { Pinhole, Orthographic };

struct Camera {
    CameraModel model = CameraModel::Pinhole;
    Mat3 rot;         // world-to-camera rotation
    Vec3 trans;       // world-to-camera translation
    double fx = 1.0, fy = 1.0;  // focal lengths (orthographic: px per world unit)
    double cx = 0.0, cy = 0.0;
    int width = 1, height = 1;
    double near_clip = 0.01, far_clip = 1000.0;

    Vec3 to_camera(const Vec3& p) const { return rot * p + trans; }
    Vec3 center() const { return rot.transposed() * (trans * -1.0); }

    // Unit direction from the camera toward a world point; for the
    // orthographic model this is the fixed viewing axis.
    Vec3 view_dir(const Vec3& p) const {
        if (model == CameraModel::Orthographic)
            return rot.transposed() * Vec3{0, 0, 1};
        return (p - center()).normalized();
    }

    Vec2 project_point(const Vec3& cam_p) const {
        if (model == CameraModel::Orthographic)
            return {fx * cam_p.x + cx, fy * cam_p.y + cy};
        return {fx * cam_p.x / cam_p.z + cx, fy * cam_p.y / cam_p.z + cy};
    }
};

void validate_camera(const Camera& cam);

// -------------------------------------------------------------------------
// Pipeline configuration
// -------------------------------------------------------------------------

struct PipelineParams {
    int k = 2;                       // neighborhood size (k nearest)
    uint64_t n_rays = 300000;        // line samples on the bounding sphere
    double gamma = 0.05;             // Welsch bandwidth factor
    double lambda0 = 0.1;            // entropy weight
    double lambda1 = 1.0;            // source-marginal KL weight
    double lambda2 = 1.0;            // edit-marginal KL weight
    double epsilon = 1.0;            // artifact mask threshold factor
    double eta = 0.2;                // SSIM mix inside the foreground loss
    double zeta = 0.3;               // background loss weight
    double sinkhorn_tol = 1e-8;
    int sinkhorn_max_iters = 2000;
    double refine_lr = 0.01;         // optimizer step size
    int refine_steps = 200;          // optimizer iteration budget
    double momentum = 0.9;
    int max_pairs_per_epoch = 64;    // (frame, view) pairs per step
    int ndd_knn = 5;
    uint64_t seed = 1;
};

void validate_params(const PipelineParams& p);

// -------------------------------------------------------------------------
// Edit session
// -------------------------------------------------------------------------

struct EditSession {
    GaussianCloud source_cloud;  // frame 1
    GaussianCloud edited_cloud;  // frame 1
    DeformationField deformation;
    std::vector<Camera> cameras;
    PipelineParams params;
};

void validate_session(const EditSession& session);

} // namespace g4d
