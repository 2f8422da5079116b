#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mrfusion/scene_sim.hpp"
#include "support.hpp"

using namespace mrfusion;
using testsupport::one_target_scene;

namespace {

std::size_t nearest_bin(const SlowTimeCube& c, double range) {
    return static_cast<std::size_t>(std::lround(range / c.range_bin_size));
}

}  // namespace

TEST(VirtualArray, DefaultIsTwelveHalfWavelengthElements) {
    RadarPlacement r;
    auto x = virtual_array_positions(r);
    ASSERT_EQ(x.size(), 12u);
    std::sort(x.begin(), x.end());
    for (std::size_t i = 1; i < x.size(); ++i) EXPECT_NEAR(x[i] - x[i - 1], r.wavelength / 2, 1e-12);
    double mean = 0;
    for (double v : x) mean += v;
    EXPECT_NEAR(mean, 0.0, 1e-15);
}

TEST(VirtualArray, SingleElement) {
    RadarPlacement r;
    r.n_tx = 1;
    r.n_rx = 1;
    const auto x = virtual_array_positions(r);
    ASSERT_EQ(x.size(), 1u);
    EXPECT_EQ(x[0], 0.0);
}

TEST(VirtualArray, TwoByTwoEnumeratedByHand) {
    RadarPlacement r;
    const double l = r.wavelength;
    r.n_tx = 2;
    r.n_rx = 2;
    r.tx_spacing = l;
    r.rx_spacing = l / 2;
    auto x = virtual_array_positions(r);
    std::sort(x.begin(), x.end());
    // tx {0, l} + rx {0, l/2} = {0, l/2, l, 3l/2}, mean 3l/4
    const std::vector<double> want{-0.75 * l, -0.25 * l, 0.25 * l, 0.75 * l};
    ASSERT_EQ(x.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x[i], want[i], 1e-15);
}

TEST(LineOfSight, BlockerOnMidpoint) {
    RadarPlacement r;
    BreathingTarget t;
    t.id = 1;
    t.position = {0, 3};
    BreathingTarget b;
    b.id = 2;
    b.position = {0, 1.5};
    EXPECT_TRUE(los_blocked(t, r, std::span(&b, 1)));
}

TEST(LineOfSight, BlockerFarOff) {
    RadarPlacement r;
    BreathingTarget t;
    t.id = 1;
    t.position = {0, 3};
    BreathingTarget b;
    b.id = 2;
    b.position = {1.0, 1.5};
    EXPECT_FALSE(los_blocked(t, r, std::span(&b, 1)));
}

TEST(LineOfSight, RadiusBoundary) {
    RadarPlacement r;
    BreathingTarget t;
    t.id = 1;
    t.position = {0, 3};
    BreathingTarget b;
    b.id = 2;
    b.position = {0.249, 1.5};
    EXPECT_TRUE(los_blocked(t, r, std::span(&b, 1)));
    b.position = {0.251, 1.5};
    EXPECT_FALSE(los_blocked(t, r, std::span(&b, 1)));
}

TEST(LineOfSight, MatchesDistanceOracleOnRandomTriples) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        RadarPlacement r;
        r.position = {u(rng), u(rng)};
        BreathingTarget t;
        t.id = 1;
        t.position = {u(rng), u(rng)};
        BreathingTarget b;
        b.id = 2;
        b.position = {0.5 * u(rng), 0.5 * u(rng)};
        b.body_radius = 0.25 + 0.25 * std::abs(u(rng)) / 4.0;
        const double d = testsupport::segment_distance(b.position, r.position, t.position);
        if (std::abs(d - b.body_radius) < 1e-9) continue;
        EXPECT_EQ(los_blocked(t, r, std::span(&b, 1)), d < b.body_radius) << "trial " << trial;
        ++checked;
    }
    EXPECT_GE(checked, 990);
}

TEST(SceneValidation, RejectsOutOfRangeParameters) {
    auto s = one_target_scene({0, 2});
    s.targets[0].rate = 5.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.targets[0].rate = 41.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.targets[0].rate = 15.0;
    s.targets[0].amplitude = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.targets[0].amplitude = 0.002;
    s.targets[0].body_radius = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.targets[0].body_radius = 0.25;
    s.duration = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.duration = 30.0;
    s.radars.clear();
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Synthesize, FrameAndElementCounts) {
    auto s = one_target_scene({0, 2});
    s.duration = 120.0;
    const auto cube = synthesize_radar(s, 0);
    EXPECT_EQ(cube.frames, 1200u);
    EXPECT_EQ(cube.elements, 12u);
    EXPECT_EQ(cube.samples.size(), cube.frames * cube.range_bins * cube.elements);
}

TEST(Synthesize, StaticTargetGivesIdenticalFrames) {
    auto s = one_target_scene({0.3, 2});
    s.targets[0].amplitude = 1e-300;  // validate() needs > 0; displacement underflows to 0
    const auto cube = synthesize_radar(s, 0);
    const std::size_t per_frame = cube.range_bins * cube.elements;
    for (std::size_t f = 1; f < cube.frames; ++f)
        for (std::size_t i = 0; i < per_frame; ++i) ASSERT_EQ(cube.samples[f * per_frame + i], cube.samples[i]);
}

TEST(Synthesize, BreathingPhaseOscillatesAtRate) {
    auto s = one_target_scene({0, 2}, 15.0, 0.001);
    s.duration = 60.0;
    const auto cube = synthesize_radar(s, 0);
    const std::size_t bin = nearest_bin(cube, 2.0);
    std::vector<cplx> series;
    for (std::size_t f = 0; f < cube.frames; ++f) series.push_back(cube.at(f, bin, 0));
    auto ph = testsupport::unwrapped_phase(series);
    double mean = 0;
    for (double v : ph) mean += v;
    for (double& v : ph) v -= mean / double(ph.size());
    const auto mag = testsupport::dft_magnitude(ph);
    const auto k = static_cast<std::size_t>(std::max_element(mag.begin() + 1, mag.end()) - mag.begin());
    const double df = 1.0 / (double(cube.frames) * cube.slow_dt);
    EXPECT_NEAR(double(k) * df, 0.25, df);
}

TEST(Synthesize, DeterministicForSeed) {
    auto s = one_target_scene({0.5, 2.5});
    s.noise_power = 1e-3;
    s.clutter_ratio = 10;
    s.clutter_scatterers = 4;
    s.rng_seed = 7;
    const auto a = synthesize(s);
    const auto b = synthesize(s);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a[0].samples, b[0].samples);
    s.rng_seed = 8;
    EXPECT_NE(synthesize(s)[0].samples, a[0].samples);
}

TEST(Synthesize, OcclusionAttenuationIsMonotone) {
    auto s = one_target_scene({0, 3.0});
    BreathingTarget blocker;
    blocker.id = 2;
    blocker.position = {0, 1.5};
    s.targets.push_back(blocker);
    ASSERT_TRUE(occlusion_mask(s, s.radars[0])[0]);
    double last = std::numeric_limits<double>::infinity();
    for (double att : {0.0, -10.0, -20.0, -40.0, -60.0}) {
        s.occlusion_attenuation = att;
        const auto cube = synthesize_radar(s, 0);
        const std::size_t bin = nearest_bin(cube, 3.0);
        double p = 0;
        for (std::size_t f = 0; f < cube.frames; ++f)
            for (std::size_t e = 0; e < cube.elements; ++e) p += std::norm(cube.at(f, bin, e));
        EXPECT_LE(p, last) << att;
        last = p;
    }
}

TEST(Synthesize, MirroredSceneReversesTheArray) {
    auto s = one_target_scene({0.7, 2.2}, 17.0);
    BreathingTarget t2;
    t2.id = 2;
    t2.position = {-0.9, 3.1};
    t2.rate = 12.0;
    s.targets.push_back(t2);
    auto m = s;
    for (auto& t : m.targets) t.position.y() = -t.position.y();
    m.radars[0].orientation = -s.radars[0].orientation;

    const auto a = synthesize_radar(s, 0);
    const auto b = synthesize_radar(m, 0);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    const std::size_t K = a.elements;
    double max_err = 0, max_mag = 0;
    for (std::size_t f = 0; f < a.frames; f += 7)
        for (std::size_t r = 0; r < a.range_bins; ++r)
            for (std::size_t e = 0; e < K; ++e) {
                max_err = std::max(max_err, std::abs(a.at(f, r, e) - b.at(f, r, K - 1 - e)));
                max_mag = std::max(max_mag, std::abs(a.at(f, r, e)));
            }
    EXPECT_LE(max_err, 1e-9 * max_mag);
}

TEST(Synthesize, ScenarioOneShadowsTargetThreeForRadarOne) {
    const auto c = testsupport::bundled("scenario1.cfg");
    const auto& s = *c.scene;
    const auto m1 = occlusion_mask(s, s.radars[0]);
    const auto m2 = occlusion_mask(s, s.radars[1]);
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        EXPECT_EQ(m1[i], s.targets[i].id == 3) << "radar 1, target " << s.targets[i].id;
        EXPECT_FALSE(m2[i]) << "radar 2, target " << s.targets[i].id;
    }
}

TEST(Synthesize, ScenarioTwoHasComplementaryShadowing) {
    const auto c = testsupport::bundled("scenario2.cfg");
    const auto& s = *c.scene;
    const auto m1 = occlusion_mask(s, s.radars[0]);
    const auto m2 = occlusion_mask(s, s.radars[1]);
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        EXPECT_EQ(m1[i], s.targets[i].id == 5) << "radar 1, target " << s.targets[i].id;
        EXPECT_EQ(m2[i], s.targets[i].id == 1) << "radar 2, target " << s.targets[i].id;
    }
}

TEST(GroundTruth, ConstantRatePerWindow) {
    auto s = one_target_scene({0, 2});
    s.duration = 120.0;
    const auto gt = ground_truth(s, 30.0);
    ASSERT_EQ(gt.window_count, 4u);
    for (double r : gt.targets[0].window_rate) EXPECT_EQ(r, 15.0);
}

TEST(GroundTruth, DisplacementAtZero) {
    auto s = one_target_scene({0, 2});
    s.targets[0].phase0 = 0.7;
    const auto gt = ground_truth(s);
    EXPECT_DOUBLE_EQ(gt.targets[0].displacement[0], 0.002 * std::sin(0.7));
}

TEST(GroundTruth, LocalPositionsAndTransforms) {
    const auto c = testsupport::bundled("scenario1.cfg");
    const auto gt = ground_truth(*c.scene);
    const auto T = relative_transform(c.scene->radars[0], c.scene->radars[1]);
    EXPECT_NEAR(T.t.x(), -2.2, 1e-12);
    EXPECT_NEAR(T.t.y(), 2.5, 1e-12);
    EXPECT_NEAR(T.theta(), -kPi / 2, 1e-12);
    for (const auto& t : gt.targets) {
        EXPECT_LE((T.apply(t.local_position[1]) - t.local_position[0]).norm(), 1e-12);
        EXPECT_LE((gt.to_first_radar[1].apply(t.local_position[1]) - t.local_position[0]).norm(), 1e-12);
    }
    const auto again = ground_truth(*c.scene);
    for (std::size_t i = 0; i < gt.targets.size(); ++i) EXPECT_EQ(gt.targets[i].displacement, again.targets[i].displacement);
}
