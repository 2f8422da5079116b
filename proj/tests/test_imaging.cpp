#include <gtest/gtest.h>

#include <random>

#include "mrfusion/imaging.hpp"
#include "mrfusion/scene_sim.hpp"
#include "support.hpp"

using namespace mrfusion;
using testsupport::one_target_scene;

namespace {

// scipy.signal.windows.taylor(12, nbar=4, sll=35) and (7, nbar=3, sll=30)
const std::vector<double> kTaylor12 = {0.1855561022240759, 0.31407368572017874, 0.5142298442558181, 0.7209469007330956,
                                       0.8898320164946151, 0.9870785572165983, 0.9870785572165983, 0.8898320164946151,
                                       0.7209469007330956, 0.5142298442558181, 0.31407368572017874, 0.1855561022240759};
const std::vector<double> kTaylor7 = {0.30037013147760927, 0.5809416185351561, 0.8827969098363363, 1.0,
                                      0.8827969098363363,  0.5809416185351561, 0.3003701314776093};

RadarImage image_of(const SceneConfig& s, const ImageGrid& grid = {}) {
    const auto cube = synthesize_radar(s, 0);
    const auto w = taylor_window(static_cast<int>(cube.elements), -35.0, 4);
    return beamform(cube, grid, w);
}

Vec2 peak_of(const SceneConfig& s) {
    const auto cube = synthesize_radar(s, 0);
    return locate_peak(cube, ImageGrid{}, taylor_window(static_cast<int>(cube.elements), -35.0, 4));
}

// Peak sidelobe (dB) of a weighted array, from a dense direct evaluation.
double peak_sidelobe_db(const std::vector<double>& x, const std::vector<double>& w, double lambda) {
    // broadside beam over the visible region u = sin(theta) in [-1, 1]
    const int n = 20001;
    std::vector<double> mag(n);
    for (int i = 0; i < n; ++i) {
        const double u = -1.0 + 2.0 * i / (n - 1);
        std::complex<double> acc;
        for (std::size_t e = 0; e < x.size(); ++e) acc += w[e] * std::exp(std::complex<double>(0, 2 * M_PI / lambda * x[e] * u));
        mag[i] = std::abs(acc);
    }
    const int c = n / 2;
    int hi = c;
    while (hi + 1 < n && mag[hi + 1] < mag[hi]) ++hi;
    int lo = c;
    while (lo > 0 && mag[lo - 1] < mag[lo]) --lo;
    double side = 0;
    for (int i = 0; i < n; ++i)
        if (i < lo || i > hi) side = std::max(side, mag[i]);
    return 20 * std::log10(side / mag[c]);
}

}  // namespace

TEST(ImageGrid, PixelsAreForwardLooking) {
    ImageGrid g;
    g.validate();
    for (std::size_t p = 0; p < g.size(); ++p) {
        ASSERT_GT(g.rho(p), 0.0);
        ASSERT_GT(g.phi(p), -kPi / 2);
        ASSERT_LT(g.phi(p), kPi / 2);
    }
    EXPECT_EQ(g.locate({0.0, 10.0}), g.size());
    EXPECT_EQ(g.locate(g.center(17)), 17u);
    g.y_min = 0.0;
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(ClutterSuppression, ConstantCubeBecomesZero) {
    SlowTimeCube c(1, 20, 3, 4);
    for (std::size_t f = 0; f < c.frames; ++f)
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t e = 0; e < 4; ++e) c.at(f, r, e) = cplx(1.0 + r, -2.0 * e);
    const auto out = suppress_clutter(c);
    for (const auto& v : out.samples) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(ClutterSuppression, SinusoidSurvivesWithZeroMean) {
    SlowTimeCube c(1, 100, 1, 1);
    for (std::size_t f = 0; f < c.frames; ++f) c.at(f, 0, 0) = cplx(5.0, 3.0) + std::sin(2 * M_PI * 0.05 * double(f));
    const auto out = suppress_clutter(c);
    for (std::size_t f = 0; f < c.frames; ++f) EXPECT_NEAR(std::abs(out.at(f, 0, 0) - std::sin(2 * M_PI * 0.05 * double(f))), 0.0, 1e-12);
}

TEST(ClutterSuppression, RandomCubeHasZeroMean) {
    SlowTimeCube c(1, 64, 5, 6);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : c.samples) v = cplx(n(rng) + 4.0, n(rng) - 1.0);
    const auto out = suppress_clutter(c);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t e = 0; e < 6; ++e) {
            cplx m;
            for (std::size_t f = 0; f < 64; ++f) m += out.at(f, r, e);
            EXPECT_LT(std::abs(m / 64.0), 1e-12);
        }
    EXPECT_THROW(suppress_clutter(SlowTimeCube(1, 1, 1, 1)), std::invalid_argument);
}

TEST(Taylor, SingleElement) {
    const auto w = taylor_window(1, -35, 4);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_DOUBLE_EQ(w[0], 1.0);
}

TEST(Taylor, Symmetric) {
    for (int K = 1; K <= 33; ++K) {
        const auto w = taylor_window(K, -35, 4);
        for (int i = 0; i < K; ++i) EXPECT_NEAR(w[i], w[K - 1 - i], 1e-14) << K;
    }
}

TEST(Taylor, MatchesReferenceWeights) {
    const auto w12 = taylor_window(12, -35, 4);
    const double peak12 = *std::max_element(kTaylor12.begin(), kTaylor12.end());
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(w12[i], kTaylor12[i] / peak12, 1e-12);
    const auto w7 = taylor_window(7, 30, 3);
    for (int i = 0; i < 7; ++i) EXPECT_NEAR(w7[i], kTaylor7[i], 1e-12);
}

TEST(Taylor, SidelobesBelowThirtyDb) {
    RadarPlacement r;
    const auto x = virtual_array_positions(r);
    const auto w = taylor_window(12, -35, 4);
    EXPECT_LE(peak_sidelobe_db(x, w, r.wavelength), -30.0);
    // the library array factor agrees with the direct sum
    for (double th : {-0.7, -0.1, 0.0, 0.3, 1.2}) {
        std::complex<double> acc;
        for (std::size_t e = 0; e < x.size(); ++e)
            acc += w[e] * std::exp(std::complex<double>(0, 2 * M_PI / r.wavelength * x[e] * (std::sin(0.2) - std::sin(th))));
        EXPECT_NEAR(std::abs(array_factor(x, w, r.wavelength, th, 0.2) - acc), 0.0, 1e-12);
    }
}

TEST(Taylor, RejectsBadArguments) {
    EXPECT_THROW(taylor_window(0, -35, 4), std::invalid_argument);
    EXPECT_THROW(taylor_window(12, -35, 0), std::invalid_argument);
}

TEST(Beamform, BroadsideTargetPeak) {
    auto s = one_target_scene({0, 2});
    s.duration = 1.0;
    const Vec2 c = peak_of(s);
    EXPECT_LE(std::abs(c.x() - 0.0), 0.05 + 1e-9);
    EXPECT_LE(std::abs(c.y() - 2.0), 0.05 + 1e-9);
}

TEST(Beamform, TwentyDegreeTargetPeak) {
    const double a = 20.0 * kPi / 180;
    const Vec2 truth(2 * std::sin(a), 2 * std::cos(a));
    auto s = one_target_scene(truth);
    s.duration = 1.0;
    const Vec2 c = peak_of(s);
    EXPECT_LE(std::abs(c.x() - truth.x()), 0.05 + 1e-9);
    EXPECT_LE(std::abs(c.y() - truth.y()), 0.05 + 1e-9);
}

TEST(Beamform, PeakAngleErrorWithinHalfRayleigh) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(-kPi / 4, kPi / 4), rng_m(1.0, 4.5);
    RadarPlacement r;
    const double rayleigh = r.wavelength / (12 * r.wavelength / 2);
    for (int trial = 0; trial < 50; ++trial) {
        const double phi = ang(rng), rho = rng_m(rng);
        auto s = one_target_scene({rho * std::sin(phi), rho * std::cos(phi)});
        s.duration = 1.0;
        const Vec2 p = peak_of(s);
        EXPECT_LE(std::abs(std::atan2(p.x(), p.y()) - phi), rayleigh / 2) << "trial " << trial;
    }
}

TEST(Beamform, ZeroCubeGivesZeroImage) {
    SlowTimeCube c(1, 4, 200, 12);
    c.range_bin_size = RadarPlacement{}.range_resolution;
    c.element_x = virtual_array_positions(RadarPlacement{});
    const auto img = beamform(c, ImageGrid{}, taylor_window(12, -35, 4));
    EXPECT_EQ(img.frames, 4u);
    for (const auto& v : img.samples) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(Beamform, Linear) {
    auto s1 = one_target_scene({0.4, 2.1});
    auto s2 = one_target_scene({-1.0, 3.3});
    s1.duration = s2.duration = 1.0;
    s1.noise_power = s2.noise_power = 1e-3;
    s2.rng_seed = 99;
    const auto c1 = synthesize_radar(s1, 0), c2 = synthesize_radar(s2, 0);
    const cplx a(0.7, -1.3), b(-2.0, 0.25);
    SlowTimeCube mix = c1;
    for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] = a * c1.samples[i] + b * c2.samples[i];
    ImageGrid g;
    g.pixel_size = 0.1;
    const auto w = taylor_window(12, -35, 4);
    const auto i1 = beamform(c1, g, w), i2 = beamform(c2, g, w), im = beamform(mix, g, w);
    for (std::size_t k = 0; k < im.samples.size(); ++k) {
        const cplx want = a * i1.samples[k] + b * i2.samples[k];
        ASSERT_LE(std::abs(im.samples[k] - want), 1e-10 * std::max(1.0, std::abs(want)));
    }
}

TEST(Beamform, FrameRange) {
    auto s = one_target_scene({0.2, 2.0});
    s.duration = 3.0;
    const auto cube = synthesize_radar(s, 0);
    const auto w = taylor_window(12, -35, 4);
    ImageGrid g;
    g.pixel_size = 0.1;
    const auto all = beamform(cube, g, w);
    const auto part = beamform(cube, g, w, 10, 5);
    ASSERT_EQ(part.frames, 5u);
    EXPECT_DOUBLE_EQ(part.t0, 1.0);
    for (std::size_t f = 0; f < 5; ++f)
        for (std::size_t p = 0; p < g.size(); p += 13) EXPECT_EQ(part.at(f, p), all.at(f + 10, p));
}

TEST(Beamform, PhaseSwingMatchesDisplacement) {
    const double a = 0.002;
    auto s = one_target_scene({0.3, 2.4}, 15.0, a);
    const auto img = image_of(s);
    const auto ph = testsupport::unwrapped_phase(img.pixel_series(img.grid.locate({0.3, 2.4})));
    const double swing = *std::max_element(ph.begin(), ph.end()) - *std::min_element(ph.begin(), ph.end());
    const double want = 4 * kPi * (2 * a) / RadarPlacement{}.wavelength;
    EXPECT_NEAR(swing, want, 0.1 * want);
}
