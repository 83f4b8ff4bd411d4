#include "g4d/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace g4d {

InfluenceTable build_influence(const GaussianCloud& edited_cloud,
                               const GaussianCloud& source_cloud,
                               const AnchorSet& anchors_src, const AnchorSet& anchors_edit,
                               const CorrespondenceMap& corr) {
    if (corr.corr.size() != anchors_edit.anchors.size())
        throw Error(ErrorKind::SizeMismatch, "correspondence not total over edit anchors");
    for (int i : corr.corr)
        if (i < 0 || size_t(i) >= anchors_src.anchors.size())
            throw Error(ErrorKind::SizeMismatch, "correspondence index outside source anchors");
    if (source_cloud.size() == 0)
        throw Error(ErrorKind::EmptyInput, "build_influence: empty source cloud");

    // Precompute frame-1 source rotations for the Mahalanobis form.
    size_t ns = source_cloud.size();
    std::vector<Mat3> rot(ns);
    for (size_t i = 0; i < ns; ++i) rot[i] = Mat3::from_quat(source_cloud.gaussians[i].q);

    InfluenceTable table;
    table.per_gaussian.resize(edited_cloud.size());
    for (size_t g = 0; g < edited_cloud.size(); ++g) {
        InfluenceEntry& entry = table.per_gaussian[g];
        const Vec3& mu_g = edited_cloud.gaussians[g].mu;

        std::set<int> src_anchor_ids;
        for (int ea : anchors_edit.gaussian_to_anchors[g])
            src_anchor_ids.insert(corr.corr[size_t(ea)]);
        std::set<int> sources;
        for (int sa : src_anchor_ids)
            for (int m : anchors_src.membership[size_t(sa)]) sources.insert(m);

        entry.sources.assign(sources.begin(), sources.end());
        entry.weights.resize(entry.sources.size());
        for (size_t k = 0; k < entry.sources.size(); ++k) {
            const Gaussian& gs = source_cloud.gaussians[size_t(entry.sources[k])];
            // d' = R^T (mu_g - mu_src); quadratic form sum (d'_i / s_i)^2.
            Vec3 d = rot[size_t(entry.sources[k])].transposed() * (mu_g - gs.mu);
            double quad = (d.x / gs.s.x) * (d.x / gs.s.x) + (d.y / gs.s.y) * (d.y / gs.s.y) +
                          (d.z / gs.s.z) * (d.z / gs.s.z);
            entry.weights[k] = gs.sigma * std::exp(-0.5 * quad);
            entry.weight_sum += entry.weights[k];
        }

        if (!(entry.weight_sum > 1e-12)) {
            entry.fallback = true;
            size_t nearest = 0;
            double best = (source_cloud.gaussians[0].mu - mu_g).norm();
            for (size_t i = 1; i < ns; ++i) {
                double d = (source_cloud.gaussians[i].mu - mu_g).norm();
                if (d < best) { best = d; nearest = i; }
            }
            entry.fallback_source = int(nearest);
            ++table.n_fallback;
        }
    }
    return table;
}

AggregatedDelta aggregate_deformation(const InfluenceTable& influence,
                                      const SourceDelta& deltas) {
    size_t n = influence.per_gaussian.size();
    AggregatedDelta out;
    out.dmu.resize(n);
    out.dq.resize(n);
    out.ds_ratio.resize(n);
    for (size_t g = 0; g < n; ++g) {
        const InfluenceEntry& entry = influence.per_gaussian[g];
        if (entry.fallback) {
            size_t s = size_t(entry.fallback_source);
            out.dmu[g] = deltas.dmu.at(s);
            out.dq[g] = deltas.dq.at(s);
            out.ds_ratio[g] = deltas.ds_ratio.at(s);
            continue;
        }
        double wsum = entry.weight_sum;

        Vec3 dmu{};
        Vec3 log_ratio{};
        for (size_t k = 0; k < entry.sources.size(); ++k) {
            size_t s = size_t(entry.sources[k]);
            double w = entry.weights[k] / wsum;
            dmu += deltas.dmu.at(s) * w;
            const Vec3& r = deltas.ds_ratio.at(s);
            log_ratio += Vec3{std::log(r.x), std::log(r.y), std::log(r.z)} * w;
        }
        out.dmu[g] = dmu;
        out.ds_ratio[g] = {std::exp(log_ratio.x), std::exp(log_ratio.y), std::exp(log_ratio.z)};

        // Hemisphere alignment: flip contributors whose delta opposes the
        // highest-weight contributor's before averaging.
        size_t ref = 0;
        for (size_t k = 1; k < entry.sources.size(); ++k)
            if (entry.weights[k] > entry.weights[ref]) ref = k;
        const Quat& q_ref = deltas.dq.at(size_t(entry.sources[ref]));
        Quat dq{0, 0, 0, 0};
        for (size_t k = 0; k < entry.sources.size(); ++k) {
            double w = entry.weights[k] / wsum;
            Quat q = deltas.dq.at(size_t(entry.sources[k]));
            if (q.dot(q_ref) < 0.0) q = q * -1.0;
            dq = dq + q * w;
        }
        out.dq[g] = dq;
    }
    return out;
}

std::vector<GaussianCloud> propagate_sequence(const GaussianCloud& edited_cloud,
                                              const GaussianCloud& source_cloud,
                                              const DeformationField& field,
                                              const InfluenceTable& influence,
                                              PropagateWarnings* warnings) {
    if (influence.per_gaussian.size() != edited_cloud.size())
        throw Error(ErrorKind::SizeMismatch, "influence table not aligned with edited cloud");
    PropagateWarnings local;
    local.weight_fallbacks = influence.n_fallback;

    std::vector<GaussianCloud> sequence;
    sequence.reserve(size_t(field.n_frames));
    sequence.push_back(edited_cloud);
    sequence.back().frame = 1;

    for (int t = 2; t <= field.n_frames; ++t) {
        SourceDelta deltas = source_delta(source_cloud, field, t);
        AggregatedDelta agg = aggregate_deformation(influence, deltas);
        GaussianCloud cloud = edited_cloud;
        cloud.frame = t;
        for (size_t g = 0; g < cloud.size(); ++g) {
            Gaussian& gg = cloud.gaussians[g];
            gg.mu = gg.mu + agg.dmu[g];
            Quat qs = gg.q + agg.dq[g];
            double nq = qs.norm();
            if (nq < 1e-9) {
                ++local.degenerate_quaternions;  // keep the frame-1 rotation
            } else if (!(agg.dq[g].w == 0.0 && agg.dq[g].x == 0.0 && agg.dq[g].y == 0.0 &&
                         agg.dq[g].z == 0.0)) {
                gg.q = qs.normalized();
            }
            gg.s = gg.s.cwise_mul(agg.ds_ratio[g]);
        }
        sequence.push_back(std::move(cloud));
    }
    if (warnings) *warnings = local;
    return sequence;
}

double neighborhood_distance_deviation(const std::vector<Vec3>& anchors_1,
                                       const std::vector<Vec3>& anchors_t, int k_nn) {
    if (anchors_1.size() != anchors_t.size())
        throw Error(ErrorKind::SizeMismatch, "anchor lists not aligned");
    if (k_nn < 1) throw Error(ErrorKind::BadConfig, "k_nn must be >= 1");
    size_t n = anchors_1.size();
    if (n < 2) return 0.0;

    double total = 0.0;
    std::vector<std::pair<double, size_t>> near;
    for (size_t a = 0; a < n; ++a) {
        near.clear();
        for (size_t b = 0; b < n; ++b) {
            if (b == a) continue;
            near.push_back({(anchors_1[b] - anchors_1[a]).norm(), b});
        }
        size_t take = std::min(size_t(k_nn), near.size());
        std::partial_sort(near.begin(), near.begin() + std::ptrdiff_t(take), near.end());
        double acc = 0.0;
        for (size_t k = 0; k < take; ++k) {
            size_t b = near[k].second;
            double d1 = near[k].first;
            double dt = (anchors_t[b] - anchors_t[a]).norm();
            acc += std::fabs(dt - d1) / std::max(d1, 1e-9);
        }
        total += acc / double(take);
    }
    return total / double(n);
}

} // namespace g4d
