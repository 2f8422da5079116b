#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mrfusion/pipeline.hpp"
#include "support.hpp"

using namespace mrfusion;
using testsupport::bundled;

namespace {

PipelineConfig short_scenario1() {
    auto c = bundled("scenario1.cfg");
    c.scene->duration = 60.0;
    return c;
}

}  // namespace

TEST(Pipeline, SmokeSingleTarget) {
    const auto r = run(bundled("smoke.cfg"));
    EXPECT_EQ(r.completed_stage, "evaluate");
    ASSERT_FALSE(r.windows.empty());
    for (const auto& w : r.windows) {
        ASSERT_EQ(w.clusters.size(), 1u);
        EXPECT_EQ(w.clusters[0].size(), 1u);
        ASSERT_EQ(w.fused.size(), 1u);
        EXPECT_TRUE(w.fused[0].rate.detected);
        EXPECT_NEAR(w.fused[0].rate.rpm, 15.0, 0.2);
    }
    EXPECT_FALSE(r.alignment);
    ASSERT_TRUE(r.detection);
    EXPECT_DOUBLE_EQ(r.detection->fused[0], 100.0);
}

TEST(Pipeline, DeterministicReport) {
    const auto c = short_scenario1();
    const auto a = report_to_json(run(c));
    const auto b = report_to_json(run(c));
    EXPECT_EQ(a.dump(), b.dump());
    EXPECT_TRUE(compare(a, b).empty());
}

TEST(Pipeline, SeedChangeShowsUpInCompare) {
    auto c = short_scenario1();
    const auto a = report_to_json(run(c));
    c.seed = 7;
    c.scene->rng_seed = 7;
    const auto b = report_to_json(run(c));
    EXPECT_FALSE(compare(a, b).empty());
}

TEST(Compare, Tolerances) {
    const nlohmann::json a = {{"x", 1.0}, {"v", {1.0, 2.0}}, {"s", "abc"}};
    auto b = a;
    b["x"] = 1.0 + 1e-9;
    EXPECT_EQ(compare(a, b).size(), 1u);
    EXPECT_TRUE(compare(a, b, {1e-6, 0.0}).empty());
    EXPECT_TRUE(compare(a, b, {0.0, 1e-6}).empty());
    b["s"] = "abd";
    const auto d = compare(a, b, {1e-6, 0.0});
    ASSERT_EQ(d.size(), 1u);
    EXPECT_NE(d[0].path.find("s"), std::string::npos);
    auto c = a;
    c["v"].push_back(3.0);
    EXPECT_FALSE(compare(a, c).empty());
}

TEST(Compare, SchemaMismatch) {
    const nlohmann::json a = {{"x", 1.0}};
    EXPECT_THROW(compare(a, nlohmann::json{{"x", "one"}}), SchemaMismatch);
    EXPECT_THROW(compare(a, nlohmann::json{{"y", 1.0}}), SchemaMismatch);
}

TEST(Config, RoundTrip) {
    for (const char* name : {"scenario1.cfg", "scenario2.cfg", "smoke.cfg"}) {
        const auto c = bundled(name);
        const auto j = to_json(c);
        EXPECT_EQ(j.at("format"), kConfigFormat);
        EXPECT_EQ(to_json(config_from_json(j)).dump(), j.dump()) << name;
    }
    const auto path = std::filesystem::temp_directory_path() / "mrfusion_config_roundtrip.cfg";
    const auto c = bundled("scenario2.cfg");
    save_config(path, c);
    EXPECT_EQ(to_json(load_config(path)).dump(), to_json(c).dump());
    std::filesystem::remove(path);
}

TEST(Config, RejectsForeignFormat) {
    auto j = to_json(bundled("smoke.cfg"));
    j["format"] = "something-else";
    EXPECT_ANY_THROW(config_from_json(j));
    j = to_json(bundled("smoke.cfg"));
    j["version"] = 99;
    EXPECT_ANY_THROW(config_from_json(j));
}

TEST(Pipeline, AblationLosesShadowedTarget) {
    auto c = short_scenario1();
    c.active_radars = {1};
    const auto r = run(c);
    ASSERT_TRUE(r.detection);
    const auto& ids = r.detection->target_ids;
    const auto it = std::find(ids.begin(), ids.end(), 3);
    ASSERT_NE(it, ids.end());
    EXPECT_DOUBLE_EQ(r.detection->fused[std::size_t(it - ids.begin())], 0.0);
    EXPECT_FALSE(r.alignment);
}

TEST(Pipeline, UntilStopsEarly) {
    const auto r = run(short_scenario1(), Stage::Cluster);
    EXPECT_EQ(r.completed_stage, "cluster");
    EXPECT_FALSE(r.alignment);
    EXPECT_FALSE(r.detection);
    ASSERT_FALSE(r.windows.empty());
    EXPECT_EQ(r.windows[0].clusters.size(), 2u);
}

TEST(Pipeline, ArtifactsWritten) {
    auto c = short_scenario1();
    const auto dir = std::filesystem::temp_directory_path() / "mrfusion_artifacts_test";
    std::filesystem::remove_all(dir);
    c.output_dir = dir.string();
    run(c);
    for (const char* f : {"report.json", "runtime.json", "config.json", "detection.csv", "rpm_error.csv", "windows.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    std::ifstream is(dir / "report.json");
    const auto j = nlohmann::json::parse(is);
    EXPECT_EQ(j.at("completed_stage"), "evaluate");
    EXPECT_FALSE(j.contains("runtime"));
    std::filesystem::remove_all(dir);
}

TEST(Pipeline, StageErrorCarriesHint) {
    PipelineConfig c;
    c.output_dir.clear();
    c.cube_paths = {"/nonexistent/radar1.cube"};
    try {
        run(c);
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_FALSE(e.hint().empty());
        EXPECT_FALSE(std::string(e.what()).empty());
    }
    EXPECT_EQ(parse_stage(stage_name(Stage::Align)), Stage::Align);
    EXPECT_ANY_THROW(parse_stage("nonsense"));
}

TEST(Pipeline, RenderedReportMentionsTables) {
    const auto text = render_report(report_to_json(run(short_scenario1())));
    EXPECT_NE(text.find("seed"), std::string::npos);
    EXPECT_NE(text.find("rpm"), std::string::npos);
}
