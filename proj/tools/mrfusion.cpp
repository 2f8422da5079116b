#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "mrfusion/pipeline.hpp"

using namespace mrfusion;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kStageFailed = 3 };

json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return json::parse(is);
}

PipelineConfig prepare(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out,
                       const std::vector<int>& disabled) {
    PipelineConfig c = load_config(config_path);
    if (seed) c.seed = *seed;
    if (!out.empty()) c.output_dir = out;
    if (!disabled.empty()) {
        std::vector<int> ids;
        if (c.scene)
            for (const auto& r : c.scene->radars) ids.push_back(r.id);
        if (!c.active_radars.empty()) ids = c.active_radars;
        std::erase_if(ids, [&](int id) { return std::find(disabled.begin(), disabled.end(), id) != disabled.end(); });
        if (ids.empty()) throw std::invalid_argument("--disable-radar leaves no active radar");
        c.active_radars = ids;
    }
    return c;
}

void write_ground_truth(const std::filesystem::path& path, const SceneConfig& scene, double window_length) {
    const GroundTruth gt = ground_truth(scene, window_length);
    std::ofstream os(path);
    os << std::setprecision(10) << "target,radar,x_local,y_local,occluded,window,rate_rpm\n";
    for (const auto& t : gt.targets)
        for (std::size_t m = 0; m < gt.radar_ids.size(); ++m)
            for (std::size_t w = 0; w < t.window_rate.size(); ++w)
                os << t.id << ',' << gt.radar_ids[m] << ',' << t.local_position[m].x() << ',' << t.local_position[m].y() << ','
                   << t.occluded[m] << ',' << w << ',' << t.window_rate[w] << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-radar respiration monitoring pipeline"};
    app.require_subcommand(1);

    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    std::vector<int> disabled;
    std::string until = "evaluate";

    auto* sim = app.add_subcommand("simulate", "Synthesize slow-time cubes and ground truth from a scene config");
    sim->add_option("-c,--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sim->add_option("--seed", seed, "Override the config seed");
    sim->add_option("-o,--out", out, "Output directory");
    sim->add_option("--disable-radar", disabled, "Radar id to leave out (repeatable)");

    auto* run_cmd = app.add_subcommand("run", "Run the pipeline end to end");
    run_cmd->add_option("-c,--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", seed, "Override the config seed");
    run_cmd->add_option("-o,--out", out, "Output directory");
    run_cmd->add_option("--until", until, "Last stage to run")
        ->check(CLI::IsMember({"simulate", "image", "cluster", "align", "select", "evaluate"}));
    run_cmd->add_option("--disable-radar", disabled, "Radar id to leave out (repeatable)");

    std::string report_path;
    std::optional<double> min_fused, max_rpm_error, max_translation, max_rotation;
    auto* eval = app.add_subcommand("evaluate", "Check a report against thresholds");
    eval->add_option("report", report_path, "report.json")->required()->check(CLI::ExistingFile);
    eval->add_option("--min-fused", min_fused, "Minimum fused detection rate per target (%)");
    eval->add_option("--max-rpm-error", max_rpm_error, "Maximum mean rpm error");
    eval->add_option("--max-translation", max_translation, "Maximum transform translation error (m)");
    eval->add_option("--max-rotation", max_rotation, "Maximum transform rotation error (rad)");

    std::string a_path, b_path;
    CompareTolerance tol;
    auto* cmp = app.add_subcommand("compare", "Field-wise diff of two reports");
    cmp->add_option("a", a_path)->required()->check(CLI::ExistingFile);
    cmp->add_option("b", b_path)->required()->check(CLI::ExistingFile);
    cmp->add_option("--abs", tol.abs, "Absolute tolerance");
    cmp->add_option("--rel", tol.rel, "Relative tolerance");

    auto* rep = app.add_subcommand("report", "Print the tables of a report");
    rep->add_option("report", report_path, "report.json")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            PipelineConfig c = prepare(config_path, seed, out, disabled);
            if (!c.scene) throw std::invalid_argument("simulate needs a \"scene\" block");
            run(c, Stage::Simulate);
            SceneConfig scene = *c.scene;
            scene.rng_seed = c.seed;
            write_ground_truth(std::filesystem::path(c.output_dir) / "ground_truth.csv", scene, c.fusion.window_length);
            std::cout << "wrote cubes and ground truth to " << c.output_dir << '\n';
            return kOk;
        }
        if (run_cmd->parsed()) {
            PipelineConfig c = prepare(config_path, seed, out, disabled);
            const RunReport r = run(c, parse_stage(until));
            std::cout << render_report(report_to_json(r));
            std::cout << "\nruntime " << std::fixed << std::setprecision(2) << r.runtime.total_s << " s, artifacts in "
                      << c.output_dir << '\n';
            return kOk;
        }
        if (eval->parsed()) {
            const json r = read_json(report_path);
            std::cout << render_report(r);
            bool ok = true;
            if (min_fused) {
                if (!r.contains("detection")) throw std::invalid_argument("report has no detection table");
                for (std::size_t j = 0; j < r["detection"]["fused"].size(); ++j)
                    if (r["detection"]["fused"][j].get<double>() < *min_fused) {
                        std::cout << "FAIL fused detection of target " << r["detection"]["target_ids"][j] << '\n';
                        ok = false;
                    }
            }
            if (max_rpm_error) {
                const auto& m = r.at("rpm_error").at("mean");
                if (m.is_null() || m.get<double>() > *max_rpm_error) {
                    std::cout << "FAIL mean rpm error\n";
                    ok = false;
                }
            }
            if (max_translation || max_rotation) {
                if (!r.contains("alignment") || !r.contains("true_transform"))
                    throw std::invalid_argument("report has no alignment or true transform");
                const auto& est = r["alignment"]["refined"];
                const auto& tru = r["true_transform"];
                const double dt = std::hypot(est["x"].get<double>() - tru["x"].get<double>(),
                                             est["y"].get<double>() - tru["y"].get<double>());
                const double dr = std::abs(std::remainder(est["theta"].get<double>() - tru["theta"].get<double>(), 2.0 * kPi));
                if (max_translation && dt > *max_translation) {
                    std::cout << "FAIL translation error " << dt << " m\n";
                    ok = false;
                }
                if (max_rotation && dr > *max_rotation) {
                    std::cout << "FAIL rotation error " << dr << " rad\n";
                    ok = false;
                }
            }
            std::cout << (ok ? "all checks passed\n" : "");
            return ok ? kOk : kCheckFailed;
        }
        if (cmp->parsed()) {
            const auto diffs = compare(read_json(a_path), read_json(b_path), tol);
            for (const auto& d : diffs) std::cout << d.path << ": " << d.a << " != " << d.b << '\n';
            std::cout << diffs.size() << " difference(s)\n";
            return diffs.empty() ? kOk : kCheckFailed;
        }
        if (rep->parsed()) {
            std::cout << render_report(read_json(report_path));
            return kOk;
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kStageFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kOk;
}
