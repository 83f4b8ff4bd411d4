#include "g4d/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace g4d {

BoundingSphere bounding_sphere(const std::vector<Vec3>& points) {
    if (points.empty()) throw Error(ErrorKind::EmptyInput, "bounding_sphere: no points");

    // Ritter: two farthest-point probes seed the sphere, then grow to cover.
    const Vec3& p0 = points[0];
    size_t i1 = 0;
    double best = -1.0;
    for (size_t i = 0; i < points.size(); ++i) {
        double d = (points[i] - p0).norm();
        if (d > best) { best = d; i1 = i; }
    }
    size_t i2 = i1;
    best = -1.0;
    for (size_t i = 0; i < points.size(); ++i) {
        double d = (points[i] - points[i1]).norm();
        if (d > best) { best = d; i2 = i; }
    }
    BoundingSphere s;
    s.center = (points[i1] + points[i2]) * 0.5;
    s.radius = 0.5 * (points[i1] - points[i2]).norm();
    for (const Vec3& p : points) {
        double d = (p - s.center).norm();
        if (d > s.radius) {
            double nr = 0.5 * (s.radius + d);
            s.center = s.center + (p - s.center) * ((d - nr) / d);
            s.radius = nr;
        }
    }
    // Inflate so every point is strictly covered despite rounding.
    double dmax = 0.0;
    for (const Vec3& p : points) dmax = std::max(dmax, (p - s.center).norm());
    s.radius = std::max(dmax, 1e-6);
    return s;
}

std::vector<Line> sample_lines(const BoundingSphere& sphere, uint64_t n_rays, uint64_t seed) {
    Rng rng(seed);
    auto surface_point = [&]() {
        double u = rng.uniform(-1.0, 1.0);
        double phi = rng.uniform(0.0, 2.0 * M_PI);
        double rxy = std::sqrt(std::max(0.0, 1.0 - u * u));
        return sphere.center + Vec3{sphere.radius * rxy * std::cos(phi),
                                    sphere.radius * rxy * std::sin(phi),
                                    sphere.radius * u};
    };
    std::vector<Line> lines;
    lines.reserve(size_t(n_rays));
    for (uint64_t i = 0; i < n_rays; ++i) {
        Line line;
        do {
            line.a = surface_point();
            line.b = surface_point();
        } while ((line.b - line.a).norm() < 1e-9 * sphere.radius);
        line.dir = (line.b - line.a).normalized();
        lines.push_back(line);
    }
    return lines;
}

double point_line_distance(const Vec3& p, const Line& line) {
    Vec3 v = p - line.a;
    double along = v.dot(line.dir);
    return (v - line.dir * along).norm();
}

NeighborhoodSet build_neighborhoods(const GaussianCloud& cloud, int k) {
    size_t n = cloud.size();
    if (n == 0) throw Error(ErrorKind::EmptyInput, "build_neighborhoods: empty cloud");
    if (k < 1) throw Error(ErrorKind::BadConfig, "build_neighborhoods: k < 1");

    std::vector<Vec3> pos(n);
    for (size_t i = 0; i < n; ++i) pos[i] = cloud.gaussians[i].mu;

    std::vector<char> assigned(n, 0);
    NeighborhoodSet set;
    std::vector<std::pair<double, int>> cand;
    double dist_sum = 0.0;
    size_t groups_with_pairs = 0;
    for (size_t i = 0; i < n; ++i) {
        if (assigned[i]) continue;
        assigned[i] = 1;
        cand.clear();
        for (size_t j = 0; j < n; ++j) {
            if (assigned[j]) continue;
            cand.push_back({(pos[j] - pos[i]).norm(), int(j)});
        }
        size_t take = std::min(size_t(k), cand.size());
        // Nearest unassigned first; distance ties resolved by index.
        std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(take), cand.end());
        Neighborhood group;
        group.members.push_back(int(i));
        for (size_t t = 0; t < take; ++t) {
            group.members.push_back(cand[t].second);
            assigned[size_t(cand[t].second)] = 1;
        }
        std::sort(group.members.begin(), group.members.end());
        if (group.members.size() >= 2) {
            double sum = 0.0;
            size_t pairs = 0;
            for (size_t a = 0; a < group.members.size(); ++a)
                for (size_t b = a + 1; b < group.members.size(); ++b) {
                    sum += (pos[size_t(group.members[a])] - pos[size_t(group.members[b])]).norm();
                    ++pairs;
                }
            dist_sum += sum / double(pairs);
            ++groups_with_pairs;
        }
        set.groups.push_back(std::move(group));
    }
    set.d_mean = groups_with_pairs ? dist_sum / double(groups_with_pairs) : 0.0;
    return set;
}

AnchorSet extract_anchors(const GaussianCloud& cloud, const std::vector<Line>& lines,
                          const NeighborhoodSet& neighborhoods) {
    size_t n = cloud.size();
    std::vector<Vec3> pos(n);
    for (size_t i = 0; i < n; ++i) pos[i] = cloud.gaussians[i].mu;

    AnchorSet out;
    out.d_mean = neighborhoods.d_mean;
    out.delta = 0.5 * std::sqrt(3.0) * neighborhoods.d_mean;
    out.n_neighborhoods = int(neighborhoods.groups.size());

    size_t n_groups = neighborhoods.groups.size();
    std::vector<Vec3> centroid(n_groups);
    for (size_t g = 0; g < n_groups; ++g) {
        Vec3 c{};
        for (int m : neighborhoods.groups[g].members) c += pos[size_t(m)];
        centroid[g] = c / double(neighborhoods.groups[g].members.size());
    }

    // First intersecting line per neighborhood, walking lines in sampling
    // order. The centroid prefilter is exact: point-line distance is convex,
    // so the centroid's distance is a lower bound on the max member distance.
    std::vector<int> hit_line(n_groups, -1);
    std::vector<size_t> remaining(n_groups);
    std::iota(remaining.begin(), remaining.end(), size_t(0));
    double delta = out.delta;
    for (size_t li = 0; li < lines.size() && !remaining.empty(); ++li) {
        const Line& line = lines[li];
        size_t keep = 0;
        for (size_t r = 0; r < remaining.size(); ++r) {
            size_t g = remaining[r];
            bool inside = point_line_distance(centroid[g], line) <= delta;
            if (inside) {
                for (int m : neighborhoods.groups[g].members) {
                    if (point_line_distance(pos[size_t(m)], line) > delta) {
                        inside = false;
                        break;
                    }
                }
            }
            if (inside) hit_line[g] = int(li);
            else remaining[keep++] = g;
        }
        remaining.resize(keep);
    }

    std::vector<int> group_anchor(n_groups, -1);
    for (size_t g = 0; g < n_groups; ++g) {
        if (hit_line[g] < 0) continue;
        const Line& line = lines[size_t(hit_line[g])];
        const std::vector<int>& members = neighborhoods.groups[g].members;
        std::vector<double> w(members.size());
        double wsum = 0.0;
        for (size_t m = 0; m < members.size(); ++m) {
            w[m] = point_line_distance(pos[size_t(members[m])], line);
            wsum += w[m];
        }
        Vec3 anchor{};
        if (wsum > 0.0) {
            for (size_t m = 0; m < members.size(); ++m)
                anchor += pos[size_t(members[m])] * (w[m] / wsum);
            for (double& v : w) v /= wsum;
        } else {
            // All members on the line: unweighted centroid.
            double uw = 1.0 / double(members.size());
            for (size_t m = 0; m < members.size(); ++m) {
                anchor += pos[size_t(members[m])] * uw;
                w[m] = uw;
            }
        }
        group_anchor[g] = int(out.anchors.size());
        out.anchors.push_back(anchor);
        out.membership.push_back(members);
        out.member_weights.push_back(std::move(w));
    }
    out.n_anchored = int(out.anchors.size());
    if (out.anchors.empty())
        throw Error(ErrorKind::NoAnchorsProduced,
                    "no neighborhood intersects any sampled line; raise n_rays");

    out.gaussian_to_anchors.assign(n, {});
    for (size_t g = 0; g < n_groups; ++g) {
        if (group_anchor[g] < 0) continue;
        for (int m : neighborhoods.groups[g].members)
            out.gaussian_to_anchors[size_t(m)].push_back(group_anchor[g]);
    }
    for (size_t i = 0; i < n; ++i) {
        if (!out.gaussian_to_anchors[i].empty()) continue;
        size_t nearest = 0;
        double best = (out.anchors[0] - pos[i]).norm();
        for (size_t a = 1; a < out.anchors.size(); ++a) {
            double d = (out.anchors[a] - pos[i]).norm();
            if (d < best) { best = d; nearest = a; }
        }
        out.gaussian_to_anchors[i].push_back(int(nearest));
    }
    return out;
}

std::vector<Vec3> anchor_positions_at(const AnchorSet& anchors, const GaussianCloud& cloud) {
    std::vector<Vec3> out(anchors.anchors.size());
    for (size_t a = 0; a < anchors.anchors.size(); ++a) {
        Vec3 p{};
        const std::vector<int>& members = anchors.membership[a];
        const std::vector<double>& w = anchors.member_weights[a];
        if (members.size() != w.size() || members.empty())
            throw Error(ErrorKind::SizeMismatch, "anchor membership/weight mismatch");
        for (size_t m = 0; m < members.size(); ++m) {
            size_t idx = size_t(members[m]);
            if (idx >= cloud.size())
                throw Error(ErrorKind::SizeMismatch, "anchor member outside cloud");
            p += cloud.gaussians[idx].mu * w[m];
        }
        out[a] = p;
    }
    return out;
}

} // namespace g4d
