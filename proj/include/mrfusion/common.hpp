#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mrfusion {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLight = 299792458.0;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

/// Raised when a computation cannot proceed because of degenerate geometry
/// (coincident points, too few correspondences for an alignment, ...).
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when cross-radar alignment is impossible (e.g. fewer than two
/// clusters on one side of the correlation matrix).
class AlignmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mrfusion
