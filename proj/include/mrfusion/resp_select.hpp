#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mrfusion/common.hpp"

namespace mrfusion {

struct RespBand {
    double low_hz = 0.1;
    double high_hz = 0.5;
};

/// Spectral fourth-moment ratio sum |S_k|^4 / (sum |S_k|^2)^2 of the
/// mean-removed series over positive-frequency DFT bins inside the band.
/// Returns 0 for an all-zero (or constant) series. Needs >= 32 samples.
double kappa(std::span<const cplx> series, double slow_dt, RespBand band = {});

/// Same statistic evaluated on a real series (e.g. the unwrapped phase).
double kappa(std::span<const double> series, double slow_dt, RespBand band = {});

/// Index of the largest score; missing entries are skipped and ties go to
/// the lower index. Empty when no radar observed the target.
std::optional<std::size_t> select_radar(std::span<const std::optional<double>> scores);

enum class RateEstimator { Spectral, Intervals };

struct RateEstimate {
    bool detected = false;
    double rpm = 0.0;
    double peak_ratio = 0.0;  // in-band peak magnitude / median in-band magnitude
};

struct RateParams {
    RespBand band;
    int zero_pad = 8;
    double min_peak_ratio = 3.0;
    RateEstimator method = RateEstimator::Spectral;
};

/// Respiration rate of a displacement-like series: linear detrend, Hann
/// window, zero-padded DFT, quadratic interpolation around the in-band
/// magnitude peak. The interval method counts upward zero crossings instead
/// but uses the same spectral peak test for detection.
RateEstimate estimate_rpm(std::span<const double> series, double slow_dt, const RateParams& params = {});

/// Per-window detection record of one ground-truth target.
struct WindowDetection {
    int target_id = 0;
    std::size_t window = 0;
    std::vector<bool> per_radar;  // cluster within the gate of the truth, per radar
    bool fused = false;           // covered by the fused target list
};

struct DetectionTable {
    std::vector<int> target_ids;
    std::vector<int> radar_ids;
    std::vector<std::vector<double>> per_radar;  // [radar][target], percent
    std::vector<double> fused;                   // [target], percent
};

/// True iff any position lies within `radius` of `truth`.
bool covers(std::span<const Vec2> positions, const Vec2& truth, double radius);

DetectionTable detection_rate(const std::vector<WindowDetection>& records, const std::vector<int>& target_ids,
                              const std::vector<int>& radar_ids);

/// One rate estimate for one target in one window.
struct RespEstimate {
    int target_id = 0;
    std::size_t window = 0;
    int radar_id = 0;  // chosen radar
    bool detected = false;
    double rpm = 0.0;
    double true_rpm = 0.0;
};

struct RpmErrorTable {
    std::map<int, double> per_target;  // mean |error| over detected windows; NaN if none
    double mean = 0.0;                 // mean over targets with at least one detection
};

RpmErrorTable rpm_error(const std::vector<RespEstimate>& estimates);

}  // namespace mrfusion
