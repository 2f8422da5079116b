#include "mrfusion/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace mrfusion {

void ImageGrid::validate() const {
    if (!(pixel_size > 0.0)) throw std::invalid_argument("image grid: pixel_size must be > 0");
    if (!(x_max > x_min) || !(y_max > y_min)) throw std::invalid_argument("image grid: empty extent");
    // Forward-looking array: every pixel must sit strictly in front of the baseline.
    if (!(y_min > 0.0)) throw std::invalid_argument("image grid: y_min must be > 0");
}

std::size_t ImageGrid::nx() const {
    return static_cast<std::size_t>(std::llround(std::ceil((x_max - x_min) / pixel_size - 1e-9)));
}

std::size_t ImageGrid::ny() const {
    return static_cast<std::size_t>(std::llround(std::ceil((y_max - y_min) / pixel_size - 1e-9)));
}

Vec2 ImageGrid::center(std::size_t pixel) const {
    const std::size_t n = nx();
    const auto ix = static_cast<double>(pixel % n);
    const auto iy = static_cast<double>(pixel / n);
    return {x_min + (ix + 0.5) * pixel_size, y_min + (iy + 0.5) * pixel_size};
}

std::size_t ImageGrid::locate(const Vec2& p) const {
    const double fx = (p.x() - x_min) / pixel_size;
    const double fy = (p.y() - y_min) / pixel_size;
    if (!(fx >= 0.0) || !(fy >= 0.0)) return size();
    const auto ix = static_cast<std::size_t>(fx);
    const auto iy = static_cast<std::size_t>(fy);
    if (ix >= nx() || iy >= ny()) return size();
    return index(ix, iy);
}

std::vector<cplx> RadarImage::pixel_series(std::size_t pixel) const {
    if (pixel >= grid.size()) throw std::out_of_range("pixel_series: pixel outside grid");
    std::vector<cplx> s(frames);
    for (std::size_t f = 0; f < frames; ++f) s[f] = at(f, pixel);
    return s;
}

std::vector<double> RadarImage::mean_power(std::size_t first, std::size_t last) const {
    if (first >= last || last > frames) throw std::out_of_range("mean_power: bad frame range");
    const std::size_t n = grid.size();
    std::vector<double> p(n, 0.0);
    for (std::size_t f = first; f < last; ++f)
        for (std::size_t k = 0; k < n; ++k) p[k] += std::norm(samples[f * n + k]);
    const double inv = 1.0 / static_cast<double>(last - first);
    for (double& v : p) v *= inv;
    return p;
}

SlowTimeCube suppress_clutter(const SlowTimeCube& cube) {
    if (cube.frames < 2) throw std::invalid_argument("suppress_clutter: need at least 2 frames");
    SlowTimeCube out = cube;
    const std::size_t cell = cube.range_bins * cube.elements;
    std::vector<cplx> mean(cell, cplx(0.0, 0.0));
    for (std::size_t f = 0; f < cube.frames; ++f)
        for (std::size_t k = 0; k < cell; ++k) mean[k] += cube.samples[f * cell + k];
    const double inv = 1.0 / static_cast<double>(cube.frames);
    for (auto& m : mean) m *= inv;
    for (std::size_t f = 0; f < cube.frames; ++f)
        for (std::size_t k = 0; k < cell; ++k) out.samples[f * cell + k] -= mean[k];
    return out;
}

std::vector<double> taylor_window(int K, double sidelobe_db, int nbar) {
    if (K < 1) throw std::invalid_argument("taylor_window: K must be >= 1");
    if (nbar < 1) throw std::invalid_argument("taylor_window: nbar must be >= 1");
    const double B = std::pow(10.0, std::abs(sidelobe_db) / 20.0);
    const double A = std::acosh(B) / kPi;
    const double s2 = nbar * nbar / (A * A + (nbar - 0.5) * (nbar - 0.5));

    std::vector<double> Fm(static_cast<std::size_t>(nbar - 1));
    for (int m = 1; m < nbar; ++m) {
        const double m2 = static_cast<double>(m) * m;
        double numer = (m % 2 == 1) ? 1.0 : -1.0;
        double denom = 2.0;
        for (int n = 1; n < nbar; ++n) {
            numer *= 1.0 - m2 / s2 / (A * A + (n - 0.5) * (n - 0.5));
            if (n != m) denom *= 1.0 - m2 / (static_cast<double>(n) * n);
        }
        Fm[static_cast<std::size_t>(m - 1)] = numer / denom;
    }

    std::vector<double> w(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
        double v = 1.0;
        for (int m = 1; m < nbar; ++m)
            v += 2.0 * Fm[static_cast<std::size_t>(m - 1)] * std::cos(2.0 * kPi * m * (i - K / 2.0 + 0.5) / K);
        w[static_cast<std::size_t>(i)] = v;
    }
    const double peak = *std::max_element(w.begin(), w.end());
    for (double& v : w) v /= peak;
    return w;
}

cplx array_factor(std::span<const double> element_x, std::span<const double> window, double wavelength,
                  double theta, double phi0) {
    cplx acc(0.0, 0.0);
    const double k = 2.0 * kPi / wavelength;
    for (std::size_t i = 0; i < element_x.size(); ++i)
        acc += window[i] * std::polar(1.0, k * element_x[i] * (std::sin(phi0) - std::sin(theta)));
    return acc;
}

RadarImage beamform(const SlowTimeCube& cube, const ImageGrid& grid, std::span<const double> window,
                    std::size_t first_frame, std::size_t frame_count) {
    grid.validate();
    if (window.size() != cube.elements) throw std::invalid_argument("beamform: window length must equal element count");
    if (cube.element_x.size() != cube.elements) throw std::invalid_argument("beamform: cube lacks element coordinates");
    if (frame_count == 0) frame_count = cube.frames - std::min(first_frame, cube.frames);
    if (first_frame + frame_count > cube.frames) throw std::out_of_range("beamform: frame range exceeds cube");

    RadarImage img;
    img.radar_id = cube.radar_id;
    img.grid = grid;
    img.frames = frame_count;
    img.slow_dt = cube.slow_dt;
    img.t0 = cube.t0 + static_cast<double>(first_frame) * cube.slow_dt;
    const std::size_t n_pix = grid.size();
    const std::size_t K = cube.elements;
    img.samples.assign(frame_count * n_pix, cplx(0.0, 0.0));

    // Per-pixel range interpolation and conjugated steering weights. The
    // simulated element signal carries exp(+j 2 pi x_i sin(phi) / lambda),
    // so the conjugate steering vector realigns a target at phi in phase.
    struct PixelTap {
        std::size_t pixel;
        std::size_t bin;
        double frac;
    };
    std::vector<PixelTap> taps;
    std::vector<cplx> weights;
    taps.reserve(n_pix);
    weights.reserve(n_pix * K);
    const double k = 2.0 * kPi / cube.wavelength;
    const double max_bin = static_cast<double>(cube.range_bins - 1);
    for (std::size_t p = 0; p < n_pix; ++p) {
        const double pos = grid.rho(p) / cube.range_bin_size;
        if (!(pos >= 0.0) || pos >= max_bin) continue;
        const auto bin = static_cast<std::size_t>(pos);
        taps.push_back({p, bin, pos - static_cast<double>(bin)});
        const double s = std::sin(grid.phi(p));
        for (std::size_t i = 0; i < K; ++i) weights.push_back(window[i] * std::polar(1.0, -k * cube.element_x[i] * s));
    }

    for (std::size_t f = 0; f < frame_count; ++f) {
        const std::size_t src = first_frame + f;
        cplx* out = img.samples.data() + f * n_pix;
        for (std::size_t t = 0; t < taps.size(); ++t) {
            const PixelTap& tap = taps[t];
            const cplx* lo = &cube.at(src, tap.bin, 0);
            const cplx* hi = lo + K;
            const cplx* w = weights.data() + t * K;
            cplx acc(0.0, 0.0);
            for (std::size_t i = 0; i < K; ++i) acc += w[i] * (lo[i] + tap.frac * (hi[i] - lo[i]));
            out[tap.pixel] = acc;
        }
    }
    return img;
}

namespace {

// Mean |I|^2 at one polar point, with the same taps as beamform().
double power_at(const SlowTimeCube& cube, std::span<const double> window, double rho, double phi, std::size_t first,
                std::size_t count) {
    const double pos = rho / cube.range_bin_size;
    if (!(pos >= 0.0) || pos >= static_cast<double>(cube.range_bins - 1)) return 0.0;
    const auto bin = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(bin);
    const std::size_t K = cube.elements;
    const double k = 2.0 * kPi / cube.wavelength;
    std::vector<cplx> w(K);
    for (std::size_t i = 0; i < K; ++i) w[i] = window[i] * std::polar(1.0, -k * cube.element_x[i] * std::sin(phi));
    double acc = 0.0;
    for (std::size_t f = first; f < first + count; ++f) {
        const cplx* lo = &cube.at(f, bin, 0);
        const cplx* hi = lo + K;
        cplx s(0.0, 0.0);
        for (std::size_t i = 0; i < K; ++i) s += w[i] * (lo[i] + frac * (hi[i] - lo[i]));
        acc += std::norm(s);
    }
    return acc / static_cast<double>(count);
}

}  // namespace

Vec2 locate_peak(const SlowTimeCube& cube, const ImageGrid& grid, std::span<const double> window, double radius,
                 double step, std::size_t first_frame, std::size_t frame_count) {
    if (!(radius > 0.0) || !(step > 0.0)) throw std::invalid_argument("locate_peak: radius and step must be > 0");
    const RadarImage img = beamform(cube, grid, window, first_frame, frame_count);
    const auto p = img.mean_power(0, img.frames);
    const Vec2 coarse = grid.center(static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
    double rho = coarse.norm();
    double phi = std::atan2(coarse.x(), coarse.y());
    // The coarse pixel can sit anywhere on the mainlobe, so the angle scan
    // spans one Rayleigh resolution either side; the mainlobe is unimodal there.
    const auto [xlo, xhi] = std::minmax_element(cube.element_x.begin(), cube.element_x.end());
    const double K = static_cast<double>(cube.elements);
    const double aperture = K > 1 ? (*xhi - *xlo) * K / (K - 1.0) : cube.wavelength;
    const double rayleigh = cube.wavelength / aperture;

    const auto scan = [&](int n, auto&& at) {
        double best = -1.0;
        int arg = 0;
        for (int i = -n; i <= n; ++i)
            if (const double v = at(i); v > best) {
                best = v;
                arg = i;
            }
        return arg;
    };
    const int n_range = static_cast<int>(std::ceil(radius / step));
    const auto range_scan = [&] {
        const double r0 = rho;
        rho = r0 + step * scan(n_range, [&](int i) { return power_at(cube, window, r0 + step * i, phi, first_frame, img.frames); });
    };
    const auto angle_scan = [&] {
        const double p0 = phi, dphi = step / rho;
        const int n = static_cast<int>(std::ceil(rayleigh / dphi));
        phi = p0 + dphi * scan(n, [&](int i) { return power_at(cube, window, rho, p0 + dphi * i, first_frame, img.frames); });
    };
    range_scan();
    angle_scan();
    range_scan();
    return {rho * std::sin(phi), rho * std::cos(phi)};
}

void write_power_csv(std::ostream& os, const RadarImage& image) {
    const auto p = image.mean_power(0, image.frames);
    const std::size_t nx = image.grid.nx();
    for (std::size_t iy = 0; iy < image.grid.ny(); ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            if (ix) os << ',';
            os << p[image.grid.index(ix, iy)];
        }
        os << '\n';
    }
}

}  // namespace mrfusion
