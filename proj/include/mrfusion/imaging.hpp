#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mrfusion/common.hpp"
#include "mrfusion/scene_sim.hpp"

namespace mrfusion {

/// Cartesian pixel grid in a radar's local frame (x along the baseline,
/// y along boresight). Pixel (ix, iy) is centered at
/// (x_min + (ix + 0.5) * pixel_size, y_min + (iy + 0.5) * pixel_size).
struct ImageGrid {
    double x_min = -3.0;
    double x_max = 3.0;
    double y_min = 0.5;
    double y_max = 5.5;
    double pixel_size = 0.05;

    void validate() const;
    std::size_t nx() const;
    std::size_t ny() const;
    std::size_t size() const { return nx() * ny(); }

    std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx() + ix; }
    Vec2 center(std::size_t pixel) const;
    /// Pixel containing p, or size() when p is outside the grid.
    std::size_t locate(const Vec2& p) const;

    double rho(std::size_t pixel) const { return center(pixel).norm(); }
    /// Angle from boresight, positive towards +x.
    double phi(std::size_t pixel) const {
        const Vec2 c = center(pixel);
        return std::atan2(c.x(), c.y());
    }
};

struct RadarImage {
    int radar_id = 0;
    ImageGrid grid;
    std::size_t frames = 0;
    double slow_dt = 0.1;
    double t0 = 0.0;
    std::vector<cplx> samples;  // [frame][pixel]

    const cplx& at(std::size_t frame, std::size_t pixel) const { return samples[frame * grid.size() + pixel]; }
    cplx& at(std::size_t frame, std::size_t pixel) { return samples[frame * grid.size() + pixel]; }

    /// Slow-time series of one pixel.
    std::vector<cplx> pixel_series(std::size_t pixel) const;
    /// Mean of |I|^2 over frames [first, last).
    std::vector<double> mean_power(std::size_t first, std::size_t last) const;
};

/// Removes the slow-time mean of every (range bin, element) series.
SlowTimeCube suppress_clutter(const SlowTimeCube& cube);

/// Taylor taper (peak-normalized) for K elements. sidelobe_db is the design
/// sidelobe level; its sign is ignored (-35 and 35 mean the same).
std::vector<double> taylor_window(int K, double sidelobe_db, int nbar);

/// Beamformed response of the weighted array at angle theta for a unit plane
/// wave arriving from angle phi0.
cplx array_factor(std::span<const double> element_x, std::span<const double> window, double wavelength,
                  double theta, double phi0);

/// Delay-and-sum image of a clutter-suppressed cube over frames
/// [first_frame, first_frame + frame_count). frame_count = 0 means all.
RadarImage beamform(const SlowTimeCube& cube, const ImageGrid& grid, std::span<const double> window,
                    std::size_t first_frame = 0, std::size_t frame_count = 0);

/// Position of the brightest point of mean |I|^2 over the frame range. The
/// brightest pixel of `grid` seeds a polar search: a range scan within
/// +-radius, an angle scan along the arc over +-one Rayleigh resolution, then
/// a second range scan, all at `step` metres. The response is narrow in range
/// and wide in angle, so Cartesian pixels trade angle error for range fit;
/// the polar scans do not.
Vec2 locate_peak(const SlowTimeCube& cube, const ImageGrid& grid, std::span<const double> window,
                 double radius = 0.25, double step = 5e-4, std::size_t first_frame = 0,
                 std::size_t frame_count = 0);

/// Writes mean |I|^2 per pixel as an ny x nx CSV grid (rows = y).
void write_power_csv(std::ostream& os, const RadarImage& image);

}  // namespace mrfusion
