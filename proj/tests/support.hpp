#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "mrfusion/pipeline.hpp"

namespace testsupport {

using mrfusion::cplx;
using mrfusion::Vec2;

inline std::string source_path(const std::string& rel) { return std::string(MRFUSION_SOURCE_DIR) + "/" + rel; }

inline mrfusion::PipelineConfig bundled(const std::string& name) {
    auto c = mrfusion::load_config(source_path("configs/" + name));
    c.output_dir.clear();
    return c;
}

// Distance to a segment by cases on the projection parameter, written out
// independently of the library helper.
inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const double dx = b.x() - a.x(), dy = b.y() - a.y();
    const double len = std::hypot(dx, dy);
    if (len == 0.0) return std::hypot(p.x() - a.x(), p.y() - a.y());
    const double along = ((p.x() - a.x()) * dx + (p.y() - a.y()) * dy) / len;
    if (along <= 0.0) return std::hypot(p.x() - a.x(), p.y() - a.y());
    if (along >= len) return std::hypot(p.x() - b.x(), p.y() - b.y());
    return std::abs((p.x() - a.x()) * dy - (p.y() - a.y()) * dx) / len;
}

// Plain O(N^2) DFT magnitude at integer bins 0..n/2.
template <typename T>
std::vector<double> dft_magnitude(const std::vector<T>& x) {
    const std::size_t n = x.size();
    std::vector<double> mag(n / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) {
        std::complex<double> acc;
        for (std::size_t i = 0; i < n; ++i)
            acc += x[i] * std::exp(std::complex<double>(0.0, -2.0 * M_PI * double(k) * double(i) / double(n)));
        mag[k] = std::abs(acc);
    }
    return mag;
}

inline std::vector<double> unwrapped_phase(const std::vector<cplx>& s) {
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        out[i] = std::arg(s[i]);
        if (i > 0) {
            while (out[i] - out[i - 1] > M_PI) out[i] -= 2 * M_PI;
            while (out[i] - out[i - 1] < -M_PI) out[i] += 2 * M_PI;
        }
    }
    return out;
}

inline mrfusion::SceneConfig one_target_scene(const Vec2& pos, double rate = 15.0, double amplitude = 0.002) {
    mrfusion::SceneConfig s;
    mrfusion::BreathingTarget t;
    t.id = 1;
    t.position = pos;
    t.rate = rate;
    t.amplitude = amplitude;
    s.targets = {t};
    s.radars = {mrfusion::RadarPlacement{}};
    s.duration = 30.0;
    s.noise_power = 0.0;
    s.clutter_ratio = 0.0;
    s.clutter_scatterers = 0;
    return s;
}

}  // namespace testsupport
