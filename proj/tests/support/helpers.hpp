#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "g4d/common.hpp"
#include "g4d/image.hpp"
#include "g4d/types.hpp"

// Shared fixtures for the unit tests.
namespace g4dtest {

inline g4d::Gaussian make_gaussian(const g4d::Vec3& mu, double sigma = 0.5,
                                   double dc = 0.0, double scale = 0.1) {
    g4d::Gaussian g;
    g.mu = mu;
    g.q = {1, 0, 0, 0};
    g.s = {scale, scale, scale};
    g.sigma = sigma;
    g.sh = {dc, dc, dc};
    return g;
}

// Random cloud with colors kept strictly inside (0,1) after blending so the
// renderer's clamp gate never activates (finite-difference tests need a
// smooth loss surface).
inline g4d::GaussianCloud random_cloud(uint64_t seed, int n, int degree,
                                       double spread = 0.8) {
    g4d::Rng rng(seed);
    g4d::GaussianCloud cloud;
    cloud.sh_degree = degree;
    int nb = g4d::sh_coeff_count(degree);
    for (int i = 0; i < n; ++i) {
        g4d::Gaussian g;
        g.mu = {rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                rng.uniform(2.0, 4.0)};
        g4d::Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        if (q.norm() < 1e-6) q = {1, 0, 0, 0};
        q = q.normalized();
        if (q.w < 0.0) q = q * -1.0;
        g.q = q;
        g.s = {rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2)};
        g.sigma = rng.uniform(0.3, 0.9);
        g.sh.assign(size_t(3 * nb), 0.0);
        for (int c = 0; c < 3; ++c) g.sh[size_t(c)] = rng.uniform(-0.25, 0.25);
        for (int b = 1; b < nb; ++b)
            for (int c = 0; c < 3; ++c) g.sh[size_t(b * 3 + c)] = rng.uniform(-0.08, 0.08);
        cloud.gaussians.push_back(std::move(g));
    }
    return cloud;
}

// Identity-pose pinhole camera looking down +z with the principal point on
// an exact pixel.
inline g4d::Camera test_camera(int size = 64, double fx = 100.0) {
    g4d::Camera cam;
    cam.model = g4d::CameraModel::Pinhole;
    cam.fx = cam.fy = fx;
    cam.cx = cam.cy = double(size / 2);
    cam.width = cam.height = size;
    cam.near_clip = 0.1;
    cam.far_clip = 100.0;
    return cam;
}

inline bool bits_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

inline bool image_bits_equal(const g4d::Image& a, const g4d::Image& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

inline bool gaussian_geometry_bits_equal(const g4d::Gaussian& a, const g4d::Gaussian& b) {
    return bits_equal(a.mu.x, b.mu.x) && bits_equal(a.mu.y, b.mu.y) &&
           bits_equal(a.mu.z, b.mu.z) && bits_equal(a.q.w, b.q.w) && bits_equal(a.q.x, b.q.x) &&
           bits_equal(a.q.y, b.q.y) && bits_equal(a.q.z, b.q.z) && bits_equal(a.s.x, b.s.x) &&
           bits_equal(a.s.y, b.s.y) && bits_equal(a.s.z, b.s.z) && bits_equal(a.sigma, b.sigma);
}

inline bool cloud_bits_equal(const g4d::GaussianCloud& a, const g4d::GaussianCloud& b) {
    if (a.size() != b.size() || a.sh_degree != b.sh_degree) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!gaussian_geometry_bits_equal(a.gaussians[i], b.gaussians[i])) return false;
        if (a.gaussians[i].sh.size() != b.gaussians[i].sh.size()) return false;
        if (std::memcmp(a.gaussians[i].sh.data(), b.gaussians[i].sh.data(),
                        a.gaussians[i].sh.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

// Fresh scratch directory under the system temp root.
inline std::string temp_dir(const std::string& tag) {
    static int counter = 0;
    std::filesystem::path p = std::filesystem::temp_directory_path() /
                              ("g4d_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace g4dtest
