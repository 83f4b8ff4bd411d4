#include "g4d/uot.hpp"

#include <algorithm>
#include <cmath>

namespace g4d {

CostMatrix welsch_cost(const std::vector<Vec3>& src, const std::vector<Vec3>& edit,
                       double gamma) {
    if (src.empty() || edit.empty())
        throw Error(ErrorKind::EmptyAnchorSet, "welsch_cost: empty anchor set");
    size_t n = src.size(), m = edit.size();
    std::vector<double> dist(n * m);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < m; ++j)
            dist[i * m + j] = (src[i] - edit[j]).norm();

    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    size_t count = sorted.size();
    double d_med = (count % 2 == 1) ? sorted[count / 2]
                                    : 0.5 * (sorted[count / 2 - 1] + sorted[count / 2]);

    CostMatrix cost;
    cost.n = int(n);
    cost.m = int(m);
    cost.d_med = d_med;
    cost.beta = std::max(gamma * d_med, 1e-9);
    cost.D.resize(n * m);
    double inv2b2 = 1.0 / (2.0 * cost.beta * cost.beta);
    for (size_t e = 0; e < dist.size(); ++e)
        cost.D[e] = 1.0 - std::exp(-dist[e] * dist[e] * inv2b2);
    return cost;
}

TransportPlan sinkhorn_uot(const CostMatrix& cost, const SinkhornConfig& config) {
    int n = cost.n, m = cost.m;
    for (double d : cost.D)
        if (!std::isfinite(d))
            throw Error(ErrorKind::InvariantViolation, "sinkhorn_uot: non-finite cost");
    if (!(config.lambda0 > 0.0 && config.lambda1 > 0.0 && config.lambda2 > 0.0))
        throw Error(ErrorKind::BadConfig, "sinkhorn_uot: weights must be > 0");

    double l0 = config.lambda0;
    double exp1 = config.lambda1 / (config.lambda1 + l0);
    double exp2 = config.lambda2 / (config.lambda2 + l0);
    double log_a = -std::log(double(n));  // a = 1/n
    double log_b = -std::log(double(m));  // b = 1/m

    // Log-domain scalings: f = l0 * log u, g = l0 * log v.
    std::vector<double> f(size_t(n), 0.0), g(size_t(m), 0.0);
    std::vector<double> f_new = f, g_new = g;

    auto lse_rows = [&](std::vector<double>& out) {
        // out_i = logsumexp_j of (-D_ij + g_j) / l0
        for (int i = 0; i < n; ++i) {
            const double* row = cost.D.data() + size_t(i) * size_t(m);
            double mx = -row[0] + g[0];
            for (int j = 1; j < m; ++j) mx = std::max(mx, -row[j] + g[size_t(j)]);
            double sum = 0.0;
            for (int j = 0; j < m; ++j) sum += std::exp((-row[j] + g[size_t(j)] - mx) / l0);
            out[size_t(i)] = mx / l0 + std::log(sum);
        }
    };
    auto lse_cols = [&](std::vector<double>& out) {
        for (int j = 0; j < m; ++j) {
            double mx = -cost.D[size_t(j)] + f[0];
            for (int i = 1; i < n; ++i)
                mx = std::max(mx, -cost.D[size_t(i) * size_t(m) + size_t(j)] + f[size_t(i)]);
            double sum = 0.0;
            for (int i = 0; i < n; ++i)
                sum += std::exp((-cost.D[size_t(i) * size_t(m) + size_t(j)] + f[size_t(i)] - mx) / l0);
            out[size_t(j)] = mx / l0 + std::log(sum);
        }
    };

    TransportPlan plan;
    plan.n = n;
    plan.m = m;
    std::vector<double> lse(size_t(std::max(n, m)));
    int it = 0;
    for (; it < config.max_iters; ++it) {
        // u <- (a / K v)^{l1/(l1+l0)} i.e. f_i = exp1 * l0 * (log a - lse_i)
        lse_rows(lse);
        for (int i = 0; i < n; ++i) f_new[size_t(i)] = exp1 * l0 * (log_a - lse[size_t(i)]);
        std::swap(f, f_new);
        lse_cols(lse);
        for (int j = 0; j < m; ++j) g_new[size_t(j)] = exp2 * l0 * (log_b - lse[size_t(j)]);
        std::swap(g, g_new);

        // Sup-norm change of the log-scalings log u = f / l0, log v = g / l0.
        double change = 0.0;
        for (int i = 0; i < n; ++i)
            change = std::max(change, std::fabs(f[size_t(i)] - f_new[size_t(i)]) / l0);
        for (int j = 0; j < m; ++j)
            change = std::max(change, std::fabs(g[size_t(j)] - g_new[size_t(j)]) / l0);
        plan.residual_trace.push_back(change);
        if (change < config.tol) {
            ++it;
            plan.converged = true;
            break;
        }
    }
    plan.iterations = it;
    plan.marginal_err = plan.residual_trace.empty() ? 0.0 : plan.residual_trace.back();

    plan.P.resize(size_t(n) * size_t(m));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            plan.P[size_t(i) * size_t(m) + size_t(j)] =
                std::exp((-cost.D[size_t(i) * size_t(m) + size_t(j)] + f[size_t(i)] + g[size_t(j)]) / l0);
    return plan;
}

CorrespondenceMap extract_correspondence(const TransportPlan& plan) {
    for (double p : plan.P)
        if (!std::isfinite(p))
            throw Error(ErrorKind::InvariantViolation, "extract_correspondence: non-finite plan");
    CorrespondenceMap map;
    map.corr.resize(size_t(plan.m));
    for (int j = 0; j < plan.m; ++j) {
        int arg = 0;
        double best = plan.at(0, j);
        for (int i = 1; i < plan.n; ++i) {
            double v = plan.at(i, j);
            if (v > best) { best = v; arg = i; }  // ties keep the smallest i
        }
        map.corr[size_t(j)] = arg;
    }
    return map;
}

} // namespace g4d
