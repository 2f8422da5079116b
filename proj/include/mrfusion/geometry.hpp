#pragma once

#include <algorithm>

#include "mrfusion/common.hpp"

namespace mrfusion {

inline Mat2 rotation(double theta) {
    Mat2 r;
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

/// Proper rigid motion of the plane, x -> R x + t, mapping radar-2 local
/// coordinates into radar-1 local coordinates.
struct RigidTransform2D {
    Mat2 R = Mat2::Identity();
    Vec2 t = Vec2::Zero();

    static RigidTransform2D from_params(double x, double y, double theta) {
        return {rotation(theta), Vec2(x, y)};
    }

    /// Rotation angle, canonicalized to (-pi, pi].
    double theta() const { return wrap_angle(std::atan2(R(1, 0), R(0, 0))); }

    Vec2 apply(const Vec2& p) const { return R * p + t; }

    RigidTransform2D inverse() const {
        Mat2 rt = R.transpose();
        return {rt, -rt * t};
    }

    /// (*this) after other: p -> this(other(p)).
    RigidTransform2D compose(const RigidTransform2D& other) const {
        return {R * other.R, R * other.t + t};
    }
};

/// Distance from point p to the closed segment [a, b].
inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0.0) return (p - a).norm();
    const double s = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + s * ab)).norm();
}

}  // namespace mrfusion
