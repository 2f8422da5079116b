#include "mrfusion/resp_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mrfusion {

namespace {

// DFT of x (length n, zero-padded to n_fft) at integer bin k.
template <typename T>
cplx dft_bin(std::span<const T> x, std::size_t n_fft, std::size_t k) {
    cplx acc(0.0, 0.0);
    const double w = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n_fft);
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * std::polar(1.0, w * static_cast<double>(i));
    return acc;
}

std::pair<std::size_t, std::size_t> band_bins(std::size_t n_fft, double slow_dt, RespBand band) {
    const double df = 1.0 / (static_cast<double>(n_fft) * slow_dt);
    const auto lo = static_cast<std::size_t>(std::ceil(band.low_hz / df - 1e-9));
    const auto hi = static_cast<std::size_t>(std::floor(band.high_hz / df + 1e-9));
    return {std::max<std::size_t>(lo, 1), std::min(hi, n_fft / 2)};
}

template <typename T>
double kappa_impl(std::span<const T> series, double slow_dt, RespBand band) {
    if (series.size() < 32) throw std::invalid_argument("kappa: need at least 32 samples");
    T mean{};
    for (const auto& v : series) mean += v;
    mean /= static_cast<double>(series.size());
    std::vector<T> x(series.begin(), series.end());
    for (auto& v : x) v -= mean;

    const auto [lo, hi] = band_bins(x.size(), slow_dt, band);
    double s2 = 0.0, s4 = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
        const double p = std::norm(dft_bin<T>(x, x.size(), k));
        s2 += p;
        s4 += p * p;
    }
    if (!(s2 > 0.0)) return 0.0;
    return s4 / (s2 * s2);
}

}  // namespace

double kappa(std::span<const cplx> series, double slow_dt, RespBand band) { return kappa_impl(series, slow_dt, band); }

double kappa(std::span<const double> series, double slow_dt, RespBand band) { return kappa_impl(series, slow_dt, band); }

std::optional<std::size_t> select_radar(std::span<const std::optional<double>> scores) {
    std::optional<std::size_t> best;
    for (std::size_t m = 0; m < scores.size(); ++m)
        if (scores[m] && (!best || *scores[m] > *scores[*best])) best = m;
    return best;
}

RateEstimate estimate_rpm(std::span<const double> series, double slow_dt, const RateParams& params) {
    const std::size_t n = series.size();
    if (n < 8) throw std::invalid_argument("estimate_rpm: series too short");

    // Least-squares linear detrend.
    const double tm = 0.5 * static_cast<double>(n - 1);
    double sy = 0.0, sty = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) - tm;
        sy += series[i];
        sty += t * series[i];
        stt += t * t;
    }
    const double mean = sy / static_cast<double>(n);
    const double slope = sty / stt;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = series[i] - mean - slope * (static_cast<double>(i) - tm);

    std::vector<double> xw(x);
    for (std::size_t i = 0; i < n; ++i) xw[i] *= 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));

    const std::size_t n_fft = n * static_cast<std::size_t>(std::max(1, params.zero_pad));
    const auto [lo, hi] = band_bins(n_fft, slow_dt, params.band);
    if (hi < lo + 2) throw std::invalid_argument("estimate_rpm: band too narrow for the window");
    std::vector<double> mag;
    for (std::size_t k = lo; k <= hi; ++k) mag.push_back(std::abs(dft_bin<double>(xw, n_fft, k)));

    RateEstimate est;
    const auto peak_it = std::max_element(mag.begin(), mag.end());
    const auto peak = static_cast<std::size_t>(peak_it - mag.begin());
    std::vector<double> sorted(mag);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    est.peak_ratio = median > 0.0 ? *peak_it / median : (*peak_it > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    // A peak on the band edge is a leak from outside the band, not a breathing line.
    est.detected = est.peak_ratio >= params.min_peak_ratio && peak > 0 && peak + 1 < mag.size();
    if (!est.detected) return est;

    const double df = 1.0 / (static_cast<double>(n_fft) * slow_dt);
    if (params.method == RateEstimator::Spectral) {
        const double a = mag[peak - 1], b = mag[peak], c = mag[peak + 1];
        const double denom = a - 2.0 * b + c;
        const double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
        est.rpm = 60.0 * (static_cast<double>(lo + peak) + delta) * df;
    } else {
        std::vector<double> ups;
        for (std::size_t i = 1; i < n; ++i)
            if (x[i - 1] < 0.0 && x[i] >= 0.0) ups.push_back(static_cast<double>(i - 1) + x[i - 1] / (x[i - 1] - x[i]));
        if (ups.size() < 2) {
            est.detected = false;
            return est;
        }
        const double span = (ups.back() - ups.front()) * slow_dt;
        est.rpm = 60.0 * static_cast<double>(ups.size() - 1) / span;
    }
    return est;
}

bool covers(std::span<const Vec2> positions, const Vec2& truth, double radius) {
    return std::any_of(positions.begin(), positions.end(), [&](const Vec2& p) { return (p - truth).norm() <= radius; });
}

DetectionTable detection_rate(const std::vector<WindowDetection>& records, const std::vector<int>& target_ids,
                              const std::vector<int>& radar_ids) {
    DetectionTable t;
    t.target_ids = target_ids;
    t.radar_ids = radar_ids;
    t.per_radar.assign(radar_ids.size(), std::vector<double>(target_ids.size(), 0.0));
    t.fused.assign(target_ids.size(), 0.0);
    for (std::size_t j = 0; j < target_ids.size(); ++j) {
        std::size_t windows = 0, fused = 0;
        std::vector<std::size_t> hits(radar_ids.size(), 0);
        for (const auto& r : records) {
            if (r.target_id != target_ids[j]) continue;
            ++windows;
            if (r.fused) ++fused;
            for (std::size_t m = 0; m < radar_ids.size() && m < r.per_radar.size(); ++m)
                if (r.per_radar[m]) ++hits[m];
        }
        if (windows == 0) continue;
        const double scale = 100.0 / static_cast<double>(windows);
        t.fused[j] = scale * static_cast<double>(fused);
        for (std::size_t m = 0; m < radar_ids.size(); ++m) t.per_radar[m][j] = scale * static_cast<double>(hits[m]);
    }
    return t;
}

RpmErrorTable rpm_error(const std::vector<RespEstimate>& estimates) {
    RpmErrorTable t;
    std::map<int, std::pair<double, std::size_t>> acc;
    for (const auto& e : estimates) {
        auto& a = acc[e.target_id];
        if (!e.detected) continue;
        a.first += std::abs(e.rpm - e.true_rpm);
        ++a.second;
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [id, a] : acc) {
        if (a.second == 0) {
            t.per_target[id] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double e = a.first / static_cast<double>(a.second);
        t.per_target[id] = e;
        sum += e;
        ++n;
    }
    t.mean = n > 0 ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    return t;
}

}  // namespace mrfusion
