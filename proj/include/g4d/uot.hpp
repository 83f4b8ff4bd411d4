#pragma once

#include <vector>

#include "g4d/common.hpp"
#include "g4d/vec.hpp"

namespace g4d {

struct CostMatrix {
    int n = 0, m = 0;            // n source rows, m edit columns
    std::vector<double> D;       // row-major, values in [0,1)
    double beta = 0.0;           // Welsch bandwidth
    double d_med = 0.0;          // median pairwise distance

    double at(int i, int j) const { return D[size_t(i) * size_t(m) + size_t(j)]; }
};

struct SinkhornConfig {
    double lambda0 = 0.1;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    int max_iters = 2000;
    double tol = 1e-8;
};

struct TransportPlan {
    int n = 0, m = 0;
    std::vector<double> P;       // row-major, nonnegative
    bool converged = false;
    int iterations = 0;
    double marginal_err = 0.0;   // final sup-norm change of the log-scalings
    std::vector<double> residual_trace;

    double at(int i, int j) const { return P[size_t(i) * size_t(m) + size_t(j)]; }
};

struct CorrespondenceMap {
    std::vector<int> corr;  // per edit-anchor column: source-anchor row
};

// D_ij = 1 - exp(-|p_i - q_j|^2 / (2 beta^2)), beta = gamma * d_med with a
// 1e-9 floor, d_med the median over all n*m pairwise distances.
CostMatrix welsch_cost(const std::vector<Vec3>& src, const std::vector<Vec3>& edit,
                       double gamma);

// Log-domain unbalanced Sinkhorn with uniform marginals a = 1/n, b = 1/m.
TransportPlan sinkhorn_uot(const CostMatrix& cost, const SinkhornConfig& config);

// corr_j = argmax_i P_ij, ties to the smallest i.
CorrespondenceMap extract_correspondence(const TransportPlan& plan);

} // namespace g4d
