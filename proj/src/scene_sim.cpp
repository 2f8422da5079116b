#include "mrfusion/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "mrfusion/rng.hpp"

namespace mrfusion {

void BreathingTarget::validate() const {
    if (!(rate >= 6.0 && rate <= 40.0))
        throw std::invalid_argument("target " + std::to_string(id) + ": rate must lie in [6, 40] rpm");
    if (!(amplitude > 0.0)) throw std::invalid_argument("target " + std::to_string(id) + ": amplitude must be > 0");
    if (!(body_radius > 0.0)) throw std::invalid_argument("target " + std::to_string(id) + ": body_radius must be > 0");
}

double BreathingTarget::displacement(double t) const {
    const double arg = 2.0 * kPi * rate / 60.0 * t + phase0;
    return amplitude * (std::sin(arg) + harmonic_ratio * std::sin(2.0 * arg));
}

void RadarPlacement::validate() const {
    if (n_tx < 1 || n_rx < 1) throw std::invalid_argument("radar " + std::to_string(id) + ": n_tx and n_rx must be >= 1");
    if (!(wavelength > 0.0) || !(range_resolution > 0.0) || !(slow_dt > 0.0) || !(max_range > 0.0))
        throw std::invalid_argument("radar " + std::to_string(id) + ": wavelength, range_resolution, slow_dt and max_range must be > 0");
}

RigidTransform2D RadarPlacement::local_to_scene() const {
    return {rotation(orientation - kPi / 2), position};
}

Vec2 RadarPlacement::to_scene(const Vec2& local) const { return local_to_scene().apply(local); }

Vec2 RadarPlacement::to_local(const Vec2& scene) const { return local_to_scene().inverse().apply(scene); }

RigidTransform2D relative_transform(const RadarPlacement& reference, const RadarPlacement& other) {
    return reference.local_to_scene().inverse().compose(other.local_to_scene());
}

void SceneConfig::validate() const {
    if (targets.empty()) throw std::invalid_argument("scene: at least one target is required");
    if (radars.empty()) throw std::invalid_argument("scene: at least one radar is required");
    if (!(duration > 0.0)) throw std::invalid_argument("scene: duration must be > 0");
    if (noise_power < 0.0) throw std::invalid_argument("scene: noise_power must be >= 0");
    for (const auto& t : targets) t.validate();
    for (const auto& r : radars) r.validate();
}

std::size_t SceneConfig::frame_count(const RadarPlacement& radar) const {
    // 120 / 0.1 is 1199.999... in binary floating point
    return static_cast<std::size_t>(std::floor(duration / radar.slow_dt + 1e-9));
}

SlowTimeCube::SlowTimeCube(int radar, std::size_t n_frames, std::size_t n_bins, std::size_t n_elements)
    : radar_id(radar), frames(n_frames), range_bins(n_bins), elements(n_elements),
      samples(n_frames * n_bins * n_elements) {}

namespace {

struct ArrayLayout {
    std::vector<double> tx;  // physical element x, centered
    std::vector<double> rx;
};

ArrayLayout array_layout(const RadarPlacement& p) {
    ArrayLayout a;
    for (int i = 0; i < p.n_tx; ++i) a.tx.push_back(i * p.tx_spacing - 0.5 * (p.n_tx - 1) * p.tx_spacing);
    for (int j = 0; j < p.n_rx; ++j) a.rx.push_back(j * p.rx_spacing - 0.5 * (p.n_rx - 1) * p.rx_spacing);
    return a;
}

// One-way equivalent range of a bistatic tx/rx pair: half the round-trip path.
double pair_range(const Vec2& p, double tx, double rx) {
    return 0.5 * ((p - Vec2(tx, 0.0)).norm() + (p - Vec2(rx, 0.0)).norm());
}

// Adds a point echo at one-way range `range` to the profile of one element.
void add_echo(SlowTimeCube& cube, std::size_t frame, std::size_t element, double range, cplx amplitude,
              double psf_sigma) {
    const double centre = range / cube.range_bin_size;
    const double reach = 5.0 * psf_sigma / cube.range_bin_size;
    const auto lo = static_cast<long>(std::ceil(centre - reach));
    const auto hi = static_cast<long>(std::floor(centre + reach));
    for (long k = std::max(0L, lo); k <= std::min<long>(hi, static_cast<long>(cube.range_bins) - 1); ++k) {
        const double dr = static_cast<double>(k) * cube.range_bin_size - range;
        cube.at(frame, static_cast<std::size_t>(k), element) += amplitude * std::exp(-0.5 * dr * dr / (psf_sigma * psf_sigma));
    }
}

}  // namespace

std::vector<double> virtual_array_positions(const RadarPlacement& placement) {
    const ArrayLayout a = array_layout(placement);
    std::vector<double> x;
    x.reserve(a.tx.size() * a.rx.size());
    for (double t : a.tx)
        for (double r : a.rx) x.push_back(t + r);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    for (double& v : x) v -= mean;
    return x;
}

bool los_blocked(const BreathingTarget& target, const RadarPlacement& radar, std::span<const BreathingTarget> others) {
    for (const auto& o : others) {
        if (o.id == target.id && o.position == target.position) continue;
        if (point_segment_distance(o.position, radar.position, target.position) < o.body_radius) return true;
    }
    return false;
}

std::vector<bool> occlusion_mask(const SceneConfig& config, const RadarPlacement& radar) {
    std::vector<bool> mask;
    for (std::size_t i = 0; i < config.targets.size(); ++i) {
        std::vector<BreathingTarget> others;
        for (std::size_t j = 0; j < config.targets.size(); ++j)
            if (j != i) others.push_back(config.targets[j]);
        mask.push_back(los_blocked(config.targets[i], radar, others));
    }
    return mask;
}

SlowTimeCube synthesize_radar(const SceneConfig& config, std::size_t radar_index) {
    config.validate();
    const RadarPlacement& radar = config.radars.at(radar_index);
    const ArrayLayout layout = array_layout(radar);
    const std::size_t n_frames = config.frame_count(radar);
    const auto n_bins = static_cast<std::size_t>(std::ceil(radar.max_range / radar.range_resolution)) + 1;
    const auto n_el = static_cast<std::size_t>(radar.element_count());

    SlowTimeCube cube(radar.id, n_frames, n_bins, n_el);
    cube.range_bin_size = radar.range_resolution;
    cube.slow_dt = radar.slow_dt;
    cube.wavelength = radar.wavelength;
    cube.element_x = virtual_array_positions(radar);

    // Gaussian PSF whose 1/e^2 half-width equals the range resolution.
    const double psf_sigma = 0.5 * radar.range_resolution;
    const double k4 = 4.0 * kPi / radar.wavelength;
    const std::vector<bool> occluded = occlusion_mask(config, radar);
    const double occlusion_gain = std::pow(10.0, config.occlusion_attenuation / 20.0);

    struct LocalTarget {
        Vec2 p;
        double gain;
        const BreathingTarget* src;
    };
    std::vector<LocalTarget> locals;
    double strongest = 0.0;
    for (std::size_t i = 0; i < config.targets.size(); ++i) {
        const auto& t = config.targets[i];
        const Vec2 p = radar.to_local(t.position);
        const double echo = t.reflectivity / std::max(p.norm(), 1e-3);
        strongest = std::max(strongest, echo);
        locals.push_back({p, occluded[i] ? occlusion_gain : 1.0, &t});
    }

    for (std::size_t f = 0; f < n_frames; ++f) {
        const double t = cube.t0 + static_cast<double>(f) * radar.slow_dt;
        for (const auto& lt : locals) {
            const double disp = lt.src->displacement(t) + lt.src->rest_range_offset;
            std::size_t e = 0;
            for (double tx : layout.tx) {
                for (double rx : layout.rx) {
                    const double d = pair_range(lt.p, tx, rx) + disp;
                    const cplx a = lt.gain * lt.src->reflectivity / d * std::polar(1.0, -k4 * d);
                    add_echo(cube, f, e++, d, a, psf_sigma);
                }
            }
        }
    }

    // Static clutter: fixed scatterers inside the field of view, constant in slow time.
    {
        auto gen = substream(config.rng_seed, "scene.clutter", static_cast<std::uint64_t>(radar.id));
        std::uniform_real_distribution<double> range_dist(0.5, radar.max_range - 0.5);
        std::uniform_real_distribution<double> angle_dist(-kPi / 3, kPi / 3);
        std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * kPi);
        std::vector<cplx> profile(n_bins * n_el);
        for (int c = 0; c < config.clutter_scatterers; ++c) {
            const double rho = range_dist(gen);
            const double phi = angle_dist(gen);
            const cplx amp = std::polar(config.clutter_ratio * strongest * rho, phase_dist(gen));
            const Vec2 p(rho * std::sin(phi), rho * std::cos(phi));
            std::size_t e = 0;
            for (double tx : layout.tx) {
                for (double rx : layout.rx) {
                    const double d = pair_range(p, tx, rx);
                    const cplx a = amp / d * std::polar(1.0, -k4 * d);
                    const double centre = d / cube.range_bin_size;
                    for (std::size_t k = 0; k < n_bins; ++k) {
                        const double dr = (static_cast<double>(k) - centre) * cube.range_bin_size;
                        if (std::abs(dr) > 5.0 * psf_sigma) continue;
                        profile[k * n_el + e] += a * std::exp(-0.5 * dr * dr / (psf_sigma * psf_sigma));
                    }
                    ++e;
                }
            }
        }
        for (std::size_t f = 0; f < n_frames; ++f)
            for (std::size_t k = 0; k < n_bins * n_el; ++k) cube.samples[f * n_bins * n_el + k] += profile[k];
    }

    if (config.noise_power > 0.0) {
        auto gen = substream(config.rng_seed, "scene.noise", static_cast<std::uint64_t>(radar.id));
        std::normal_distribution<double> n(0.0, std::sqrt(0.5 * config.noise_power));
        for (auto& s : cube.samples) {
            const double re = n(gen);
            const double im = n(gen);
            s += cplx(re, im);
        }
    }
    return cube;
}

std::vector<SlowTimeCube> synthesize(const SceneConfig& config) {
    config.validate();
    std::vector<SlowTimeCube> cubes;
    cubes.reserve(config.radars.size());
    for (std::size_t m = 0; m < config.radars.size(); ++m) cubes.push_back(synthesize_radar(config, m));
    return cubes;
}

GroundTruth ground_truth(const SceneConfig& config, double window_length) {
    config.validate();
    if (!(window_length > 0.0)) throw std::invalid_argument("ground_truth: window length must be > 0");
    GroundTruth gt;
    gt.window_length = window_length;
    gt.window_count = static_cast<std::size_t>(std::floor(config.duration / window_length + 1e-9));
    const RadarPlacement& first = config.radars.front();
    for (const auto& r : config.radars) {
        gt.radar_ids.push_back(r.id);
        gt.to_first_radar.push_back(relative_transform(first, r));
    }
    std::vector<std::vector<bool>> masks;
    for (const auto& r : config.radars) masks.push_back(occlusion_mask(config, r));

    const std::size_t n_frames = config.frame_count(first);
    for (std::size_t i = 0; i < config.targets.size(); ++i) {
        const auto& t = config.targets[i];
        TargetTruth tt;
        tt.id = t.id;
        for (std::size_t m = 0; m < config.radars.size(); ++m) {
            tt.local_position.push_back(config.radars[m].to_local(t.position));
            tt.occluded.push_back(masks[m][i]);
        }
        tt.displacement.reserve(n_frames);
        for (std::size_t f = 0; f < n_frames; ++f) tt.displacement.push_back(t.displacement(static_cast<double>(f) * first.slow_dt));
        tt.window_rate.assign(gt.window_count, t.rate);
        gt.targets.push_back(std::move(tt));
    }
    return gt;
}

}  // namespace mrfusion
