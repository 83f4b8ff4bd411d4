#include "g4d/types.hpp"

#include <cmath>

namespace g4d {

static bool finite3(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

void validate_cloud(const GaussianCloud& cloud) {
    if (cloud.sh_degree < 0 || cloud.sh_degree > 3)
        throw Error(ErrorKind::InvariantViolation, "sh_degree outside [0,3]");
    size_t want_sh = size_t(3) * sh_coeff_count(cloud.sh_degree);
    for (size_t i = 0; i < cloud.gaussians.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        std::string where = "gaussian " + std::to_string(i);
        if (!finite3(g.mu) || !finite3(g.s) || !std::isfinite(g.sigma) ||
            !std::isfinite(g.q.w) || !std::isfinite(g.q.x) ||
            !std::isfinite(g.q.y) || !std::isfinite(g.q.z))
            throw Error(ErrorKind::InvariantViolation, where + ": non-finite field");
        if (std::fabs(g.q.norm() - 1.0) > 1e-6)
            throw Error(ErrorKind::InvariantViolation, where + ": quaternion not unit");
        if (!(g.s.x > 0.0 && g.s.y > 0.0 && g.s.z > 0.0))
            throw Error(ErrorKind::InvariantViolation, where + ": scale not positive");
        if (g.sigma < 0.0 || g.sigma > 1.0)
            throw Error(ErrorKind::InvariantViolation, where + ": sigma outside [0,1]");
        if (g.sh.size() != want_sh)
            throw Error(ErrorKind::InvariantViolation, where + ": sh coefficient count mismatch");
        for (double c : g.sh)
            if (!std::isfinite(c))
                throw Error(ErrorKind::InvariantViolation, where + ": non-finite sh");
    }
}

// -------------------------------------------------------------------------
// Deformation
// -------------------------------------------------------------------------

static FrameDelta zero_delta(size_t n) {
    FrameDelta d;
    d.dmu.assign(n, Vec3{});
    d.dq.assign(n, Quat{0, 0, 0, 0});
    d.ds.assign(n, Vec3{});
    return d;
}

FrameDelta eval_field(const DeformationField& field, const GaussianCloud& cloud, int t) {
    if (t < 1 || t > field.n_frames)
        throw Error(ErrorKind::FrameOutOfRange,
                    "frame " + std::to_string(t) + " outside [1," +
                        std::to_string(field.n_frames) + "]");
    size_t n = cloud.size();
    if (field.kind == MotionKind::Tabulated) {
        const FrameDelta& d = field.frames.at(size_t(t) - 1);
        if (d.dmu.size() != n || d.dq.size() != n || d.ds.size() != n)
            throw Error(ErrorKind::SizeMismatch, "tabulated field length != cloud length");
        return d;
    }
    // Frame 1 is the reference: deltas are exactly zero by contract.
    if (t == 1) return zero_delta(n);

    FrameDelta d = zero_delta(n);
    double dt = double(t - 1);
    switch (field.kind) {
        case MotionKind::TranslationRamp: {
            Vec3 shift = field.velocity * dt;
            for (size_t i = 0; i < n; ++i) d.dmu[i] = shift;
            break;
        }
        case MotionKind::RigidRotation: {
            Mat3 r = Mat3::axis_angle(field.axis, field.omega * dt);
            Quat qr = quat_axis_angle(field.axis, field.omega * dt);
            for (size_t i = 0; i < n; ++i) {
                const Gaussian& g = cloud.gaussians[i];
                d.dmu[i] = r * (g.mu - field.center) + field.center - g.mu;
                Quat qt = qr.mul(g.q);
                if (qt.dot(g.q) < 0.0) qt = qt * -1.0;  // same hemisphere as q1
                d.dq[i] = qt - g.q;
            }
            break;
        }
        case MotionKind::SinusoidalShear: {
            double a = field.amp * std::sin(field.shear_omega * dt);
            for (size_t i = 0; i < n; ++i)
                d.dmu[i] = Vec3{a * cloud.gaussians[i].mu.y, 0.0, 0.0};
            break;
        }
        case MotionKind::Tabulated: break;  // handled above
    }
    return d;
}

DeformationField tabulate_field(const DeformationField& field, const GaussianCloud& cloud) {
    DeformationField out;
    out.kind = MotionKind::Tabulated;
    out.n_frames = field.n_frames;
    out.frames.reserve(size_t(field.n_frames));
    for (int t = 1; t <= field.n_frames; ++t)
        out.frames.push_back(eval_field(field, cloud, t));
    return out;
}

GaussianCloud deform_source(const GaussianCloud& cloud, const DeformationField& field, int t) {
    FrameDelta d = eval_field(field, cloud, t);
    GaussianCloud out = cloud;
    out.frame = t;
    for (size_t i = 0; i < cloud.size(); ++i) {
        Gaussian& g = out.gaussians[i];
        g.mu = g.mu + d.dmu[i];
        Quat qs = g.q + d.dq[i];
        double nq = qs.norm();
        if (nq < 1e-9)
            throw Error(ErrorKind::InvariantViolation,
                        "gaussian " + std::to_string(i) + ": degenerate quaternion after delta");
        // Keep the reference frame bit-identical: a zero delta must not
        // perturb q through a renormalizing divide.
        if (!(d.dq[i].w == 0.0 && d.dq[i].x == 0.0 && d.dq[i].y == 0.0 && d.dq[i].z == 0.0))
            g.q = qs.normalized();
        g.s = g.s + d.ds[i];
        if (!(g.s.x > 0.0 && g.s.y > 0.0 && g.s.z > 0.0))
            throw Error(ErrorKind::InvariantViolation,
                        "gaussian " + std::to_string(i) + ": scale not positive at frame " +
                            std::to_string(t));
    }
    return out;
}

SourceDelta source_delta(const GaussianCloud& cloud, const DeformationField& field, int t) {
    FrameDelta d = eval_field(field, cloud, t);
    SourceDelta out;
    out.dmu = d.dmu;
    out.dq = d.dq;
    out.ds_ratio.resize(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& s = cloud.gaussians[i].s;
        if (s.x < 1e-9 || s.y < 1e-9 || s.z < 1e-9)
            throw Error(ErrorKind::DivisionDegenerate,
                        "gaussian " + std::to_string(i) + ": scale below 1e-9");
        Vec3 st = s + d.ds[i];
        if (!(st.x > 0.0 && st.y > 0.0 && st.z > 0.0))
            throw Error(ErrorKind::InvariantViolation,
                        "gaussian " + std::to_string(i) + ": nonpositive deformed scale");
        out.ds_ratio[i] = st.cwise_div(s);
    }
    return out;
}

// -------------------------------------------------------------------------
// Camera / params / session validation
// -------------------------------------------------------------------------

void validate_camera(const Camera& cam) {
    if (cam.width < 1 || cam.height < 1)
        throw Error(ErrorKind::InvariantViolation, "camera: image dimensions < 1");
    if (!(cam.fx > 0.0) || !(cam.fy > 0.0))
        throw Error(ErrorKind::InvariantViolation, "camera: focal lengths must be > 0");
    if (!(cam.near_clip < cam.far_clip))
        throw Error(ErrorKind::InvariantViolation, "camera: near >= far");
    // R^T R = I within 1e-6.
    Mat3 gram = cam.rot.transposed() * cam.rot;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double want = i == j ? 1.0 : 0.0;
            if (std::fabs(gram(i, j) - want) > 1e-6)
                throw Error(ErrorKind::InvariantViolation, "camera: rotation not orthonormal");
        }
}

void validate_params(const PipelineParams& p) {
    if (p.k < 1) throw Error(ErrorKind::BadConfig, "k must be >= 1");
    if (p.n_rays < 1) throw Error(ErrorKind::BadConfig, "n_rays must be >= 1");
    if (!(p.gamma > 0.0)) throw Error(ErrorKind::BadConfig, "gamma must be > 0");
    if (!(p.lambda0 > 0.0 && p.lambda1 > 0.0 && p.lambda2 > 0.0))
        throw Error(ErrorKind::BadConfig, "lambda weights must be > 0");
    if (!(p.epsilon > 0.0)) throw Error(ErrorKind::BadConfig, "epsilon must be > 0");
    if (p.eta < 0.0 || p.eta > 1.0) throw Error(ErrorKind::BadConfig, "eta outside [0,1]");
    if (p.zeta < 0.0 || p.zeta > 1.0) throw Error(ErrorKind::BadConfig, "zeta outside [0,1]");
    if (!(p.sinkhorn_tol > 0.0)) throw Error(ErrorKind::BadConfig, "sinkhorn_tol must be > 0");
    if (p.sinkhorn_max_iters < 1)
        throw Error(ErrorKind::BadConfig, "sinkhorn_max_iters must be >= 1");
    if (!(p.refine_lr > 0.0)) throw Error(ErrorKind::BadConfig, "refine_lr must be > 0");
    if (p.refine_steps < 0) throw Error(ErrorKind::BadConfig, "refine_steps must be >= 0");
    if (p.momentum < 0.0 || p.momentum >= 1.0)
        throw Error(ErrorKind::BadConfig, "momentum outside [0,1)");
    if (p.max_pairs_per_epoch < 1)
        throw Error(ErrorKind::BadConfig, "max_pairs_per_epoch must be >= 1");
    if (p.ndd_knn < 1) throw Error(ErrorKind::BadConfig, "ndd_knn must be >= 1");
}

void validate_session(const EditSession& session) {
    validate_cloud(session.source_cloud);
    validate_cloud(session.edited_cloud);
    validate_params(session.params);
    if (session.source_cloud.frame != 1 || session.edited_cloud.frame != 1)
        throw Error(ErrorKind::InvariantViolation, "session clouds must be at frame 1");
    if (session.cameras.empty())
        throw Error(ErrorKind::BadConfig, "session has no cameras");
    for (const Camera& cam : session.cameras) validate_camera(cam);
    if (session.deformation.kind == MotionKind::Tabulated) {
        for (const FrameDelta& d : session.deformation.frames)
            if (d.dmu.size() != session.source_cloud.size())
                throw Error(ErrorKind::SizeMismatch,
                            "deformation indexed by a different cloud size");
    }
}

} // namespace g4d
