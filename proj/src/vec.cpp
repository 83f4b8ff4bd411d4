#include "g4d/vec.hpp"

namespace g4d {

Mat3 Mat3::axis_angle(const Vec3& axis, double angle) {
    Vec3 u = axis.normalized();
    double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    Mat3 r;
    r.m = {t * u.x * u.x + c, t * u.x * u.y - s * u.z, t * u.x * u.z + s * u.y,
           t * u.x * u.y + s * u.z, t * u.y * u.y + c, t * u.y * u.z - s * u.x,
           t * u.x * u.z - s * u.y, t * u.y * u.z + s * u.x, t * u.z * u.z + c};
    return r;
}

Quat quat_axis_angle(const Vec3& axis, double angle) {
    Vec3 u = axis.normalized();
    double h = 0.5 * angle;
    double s = std::sin(h);
    Quat q{std::cos(h), u.x * s, u.y * s, u.z * s};
    if (q.w < 0.0) q = q * -1.0;
    return q.normalized();
}

} // namespace g4d
