#include "g4d/sh.hpp"

namespace g4d {

namespace {
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
} // namespace

void sh_basis(const Vec3& dir, int degree, double* out) {
    out[0] = kC0;
    if (degree < 1) return;
    double x = dir.x, y = dir.y, z = dir.z;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (degree < 2) return;
    double xx = x * x, yy = y * y, zz = z * z;
    double xy = x * y, yz = y * z, xz = x * z;
    out[4] = kC2[0] * xy;
    out[5] = kC2[1] * yz;
    out[6] = kC2[2] * (2.0 * zz - xx - yy);
    out[7] = kC2[3] * xz;
    out[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = kC3[0] * y * (3.0 * xx - yy);
    out[10] = kC3[1] * xy * z;
    out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kC3[5] * z * (xx - yy);
    out[15] = kC3[6] * x * (xx - 3.0 * yy);
}

std::vector<double> sh_basis(const Vec3& dir, int degree) {
    std::vector<double> out(size_t((degree + 1) * (degree + 1)));
    sh_basis(dir, degree, out.data());
    return out;
}

std::array<double, 3> sh_color(const std::vector<double>& sh, int degree, const Vec3& dir) {
    double basis[16];
    sh_basis(dir, degree, basis);
    int n = (degree + 1) * (degree + 1);
    std::array<double, 3> c{0.5, 0.5, 0.5};
    for (int b = 0; b < n; ++b) {
        c[0] += basis[b] * sh[size_t(b) * 3 + 0];
        c[1] += basis[b] * sh[size_t(b) * 3 + 1];
        c[2] += basis[b] * sh[size_t(b) * 3 + 2];
    }
    return c;
}

} // namespace g4d
