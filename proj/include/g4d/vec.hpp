#pragma once

#include <array>
#include <cmath>

namespace g4d {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double k) const { return {x * k, y * k}; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
    Vec3 operator/(double k) const { return {x / k, y / k, z / k}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
    }
    // Componentwise product and quotient.
    Vec3 cwise_mul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
    Vec3 cwise_div(const Vec3& o) const { return {x / o.x, y / o.y, z / o.z}; }
};

inline Vec3 operator*(double k, const Vec3& v) { return v * k; }

// Quaternion, w-x-y-z component order (matching the cloud file layout).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quat operator+(const Quat& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
    Quat operator-(const Quat& o) const { return {w - o.w, x - o.x, y - o.y, z - o.z}; }
    Quat operator*(double k) const { return {w * k, x * k, y * k, z * k}; }

    // Hamilton product.
    Quat mul(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }

    double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Quat normalized() const {
        double n = norm();
        return {w / n, x / n, y / n, z / n};
    }
};

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    static Mat3 identity() { return Mat3{}; }

    static Mat3 diag(double a, double b, double c) {
        Mat3 r;
        r.m = {a, 0, 0, 0, b, 0, 0, 0, c};
        return r;
    }

    // Rotation matrix of a unit quaternion.
    static Mat3 from_quat(const Quat& q) {
        double w = q.w, x = q.x, y = q.y, z = q.z;
        Mat3 r;
        r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
               2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
               2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
        return r;
    }

    // Rotation by angle about a unit axis (Rodrigues).
    static Mat3 axis_angle(const Vec3& axis, double angle);
};

// Unit quaternion for a rotation by angle about a unit axis, w >= 0.
Quat quat_axis_angle(const Vec3& axis, double angle);

// Symmetric 2x2 matrix [[a, b], [b, c]].
struct Sym2 {
    double a = 0.0, b = 0.0, c = 0.0;

    double det() const { return a * c - b * b; }
    double max_eigenvalue() const {
        double mid = 0.5 * (a + c);
        double d = 0.5 * (a - c);
        return mid + std::sqrt(d * d + b * b);
    }
    // Mahalanobis form d^T M^{-1} d for d = (dx, dy).
    double inv_quadratic(double dx, double dy) const {
        double dt = det();
        return (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / dt;
    }
};

} // namespace g4d
