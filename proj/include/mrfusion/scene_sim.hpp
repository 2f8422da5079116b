#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mrfusion/common.hpp"
#include "mrfusion/geometry.hpp"

namespace mrfusion {

/// A seated person modeled as a point scatterer whose range oscillates with
/// breathing, plus a body disk that blocks lines of sight behind it.
struct BreathingTarget {
    int id = 0;
    Vec2 position = Vec2::Zero();   // scene frame, m
    double rest_range_offset = 0.0; // m, added to every element-to-chest range
    double rate = 15.0;             // rpm
    double amplitude = 0.002;       // m
    double phase0 = 0.0;            // rad
    double body_radius = 0.25;      // m
    double reflectivity = 1.0;
    double harmonic_ratio = 0.0;    // second-harmonic amplitude relative to the fundamental

    void validate() const;

    /// Chest displacement towards/away from the radar at time t (seconds).
    double displacement(double t) const;
};

/// Pose and array geometry of one MIMO radar. The local frame has x along
/// the array baseline and y along boresight.
struct RadarPlacement {
    int id = 1;
    Vec2 position = Vec2::Zero();  // scene frame, m
    double orientation = kPi / 2;  // boresight direction in scene frame, rad
    double wavelength = 3.8e-3;
    int n_tx = 3;
    int n_rx = 4;
    double tx_spacing = 7.6e-3;
    double rx_spacing = 1.9e-3;
    double range_resolution = kSpeedOfLight / (2.0 * 3.9e9);
    double slow_dt = 0.1;
    double max_range = 7.0;        // range extent of the synthesized cube, m

    void validate() const;
    int element_count() const { return n_tx * n_rx; }

    Vec2 to_local(const Vec2& scene) const;
    Vec2 to_scene(const Vec2& local) const;

    /// Pose of this radar's local frame expressed in the scene frame.
    RigidTransform2D local_to_scene() const;
};

/// Transform mapping `other`'s local coordinates into `reference`'s local
/// coordinates; this is the quantity the fusion stage estimates.
RigidTransform2D relative_transform(const RadarPlacement& reference, const RadarPlacement& other);

struct SceneConfig {
    std::vector<BreathingTarget> targets;
    std::vector<RadarPlacement> radars;
    double duration = 120.0;
    double noise_power = 1e-4;
    double occlusion_attenuation = -40.0;  // dB
    double clutter_ratio = 10.0;           // static clutter amplitude / strongest target echo
    int clutter_scatterers = 4;
    std::uint64_t rng_seed = 1;

    void validate() const;
    std::size_t frame_count(const RadarPlacement& radar) const;
};

/// Range-compressed samples of one radar, laid out [frame][range bin][element].
struct SlowTimeCube {
    int radar_id = 0;
    std::size_t frames = 0;
    std::size_t range_bins = 0;
    std::size_t elements = 0;
    double range_bin_size = 0.0;
    double t0 = 0.0;
    double slow_dt = 0.1;
    double wavelength = 3.8e-3;
    std::vector<double> element_x;  // virtual element coordinates along the baseline
    std::vector<cplx> samples;

    SlowTimeCube() = default;
    SlowTimeCube(int radar, std::size_t n_frames, std::size_t n_bins, std::size_t n_elements);

    std::size_t index(std::size_t frame, std::size_t bin, std::size_t element) const {
        return (frame * range_bins + bin) * elements + element;
    }
    cplx& at(std::size_t frame, std::size_t bin, std::size_t element) { return samples[index(frame, bin, element)]; }
    const cplx& at(std::size_t frame, std::size_t bin, std::size_t element) const {
        return samples[index(frame, bin, element)];
    }
    double duration() const { return static_cast<double>(frames) * slow_dt; }
};

/// Virtual array coordinates {tx_i + rx_j}, re-centered to zero mean.
std::vector<double> virtual_array_positions(const RadarPlacement& placement);

/// True iff the body disk of any target in `others` cuts the line of sight
/// from the radar to `target`.
bool los_blocked(const BreathingTarget& target, const RadarPlacement& radar, std::span<const BreathingTarget> others);

/// Per-target visibility for one radar (true = line of sight blocked).
std::vector<bool> occlusion_mask(const SceneConfig& config, const RadarPlacement& radar);

std::vector<SlowTimeCube> synthesize(const SceneConfig& config);
SlowTimeCube synthesize_radar(const SceneConfig& config, std::size_t radar_index);

struct TargetTruth {
    int id = 0;
    std::vector<Vec2> local_position;  // one entry per radar, that radar's local frame
    std::vector<bool> occluded;        // one entry per radar
    std::vector<double> displacement;  // per slow-time frame (first radar's clock)
    std::vector<double> window_rate;   // rpm per evaluation window
};

struct GroundTruth {
    double window_length = 30.0;
    std::size_t window_count = 0;
    std::vector<int> radar_ids;
    std::vector<TargetTruth> targets;
    std::vector<RigidTransform2D> to_first_radar;  // per radar, local -> first radar local
};

GroundTruth ground_truth(const SceneConfig& config, double window_length = 30.0);

}  // namespace mrfusion
