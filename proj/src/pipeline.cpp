#include "mrfusion/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mrfusion/container_io.hpp"
#include "mrfusion/rng.hpp"

namespace mrfusion {

using nlohmann::json;

// ---------------------------------------------------------------- config I/O

namespace {

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec2 vec_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected a [x, y] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

const char* kappa_source_name(KappaSource s) { return s == KappaSource::Complex ? "complex" : "phase"; }
const char* estimator_name(RateEstimator e) { return e == RateEstimator::Spectral ? "spectral" : "intervals"; }

}  // namespace

json to_json(const SceneConfig& scene) {
    json targets = json::array();
    for (const auto& t : scene.targets)
        targets.push_back({{"id", t.id},
                           {"position", vec_json(t.position)},
                           {"rest_range_offset", t.rest_range_offset},
                           {"rate_rpm", t.rate},
                           {"amplitude", t.amplitude},
                           {"phase0", t.phase0},
                           {"body_radius", t.body_radius},
                           {"reflectivity", t.reflectivity},
                           {"harmonic_ratio", t.harmonic_ratio}});
    json radars = json::array();
    for (const auto& r : scene.radars)
        radars.push_back({{"id", r.id},
                          {"position", vec_json(r.position)},
                          {"orientation", r.orientation},
                          {"wavelength", r.wavelength},
                          {"n_tx", r.n_tx},
                          {"n_rx", r.n_rx},
                          {"tx_spacing", r.tx_spacing},
                          {"rx_spacing", r.rx_spacing},
                          {"range_resolution", r.range_resolution},
                          {"slow_dt", r.slow_dt},
                          {"max_range", r.max_range}});
    return {{"duration", scene.duration},
            {"noise_power", scene.noise_power},
            {"occlusion_attenuation_db", scene.occlusion_attenuation},
            {"clutter_ratio", scene.clutter_ratio},
            {"clutter_scatterers", scene.clutter_scatterers},
            {"targets", targets},
            {"radars", radars}};
}

SceneConfig scene_from_json(const json& j) {
    SceneConfig s;
    s.duration = j.value("duration", s.duration);
    s.noise_power = j.value("noise_power", s.noise_power);
    s.occlusion_attenuation = j.value("occlusion_attenuation_db", s.occlusion_attenuation);
    s.clutter_ratio = j.value("clutter_ratio", s.clutter_ratio);
    s.clutter_scatterers = j.value("clutter_scatterers", s.clutter_scatterers);
    for (const auto& tj : j.at("targets")) {
        BreathingTarget t;
        t.id = tj.at("id").get<int>();
        t.position = vec_from(tj.at("position"));
        t.rest_range_offset = tj.value("rest_range_offset", t.rest_range_offset);
        t.rate = tj.value("rate_rpm", t.rate);
        t.amplitude = tj.value("amplitude", t.amplitude);
        t.phase0 = tj.value("phase0", t.phase0);
        t.body_radius = tj.value("body_radius", t.body_radius);
        t.reflectivity = tj.value("reflectivity", t.reflectivity);
        t.harmonic_ratio = tj.value("harmonic_ratio", t.harmonic_ratio);
        s.targets.push_back(t);
    }
    for (const auto& rj : j.at("radars")) {
        RadarPlacement r;
        r.id = rj.at("id").get<int>();
        r.position = vec_from(rj.at("position"));
        r.orientation = rj.value("orientation", r.orientation);
        r.wavelength = rj.value("wavelength", r.wavelength);
        r.n_tx = rj.value("n_tx", r.n_tx);
        r.n_rx = rj.value("n_rx", r.n_rx);
        r.tx_spacing = rj.value("tx_spacing", r.tx_spacing);
        r.rx_spacing = rj.value("rx_spacing", r.rx_spacing);
        r.range_resolution = rj.value("range_resolution", r.range_resolution);
        r.slow_dt = rj.value("slow_dt", r.slow_dt);
        r.max_range = rj.value("max_range", r.max_range);
        s.radars.push_back(r);
    }
    return s;
}

json to_json(const PipelineConfig& c) {
    const auto& g = c.imaging.grid;
    json j{{"format", kConfigFormat},
           {"version", kConfigVersion},
           {"seed", c.seed},
           {"output_dir", c.output_dir},
           {"active_radars", c.active_radars},
           {"imaging",
            {{"grid", {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max}, {"pixel_size", g.pixel_size}}},
             {"taylor_sll_db", c.imaging.taylor_sll_db},
             {"taylor_nbar", c.imaging.taylor_nbar}}},
           {"clustering",
            {{"n_points", c.clustering.n_points},
             {"k_max", c.clustering.k_max},
             {"noise_floor_db", c.clustering.noise_floor_db},
             {"min_cluster_fraction", c.clustering.min_cluster_fraction},
             {"merge_distance", c.clustering.merge_distance},
             {"merge_correlation", c.clustering.merge_correlation}}},
           {"fusion", {{"d_th", c.fusion.d_th}, {"window_length", c.fusion.window_length}}},
           {"selection",
            {{"kappa_source", kappa_source_name(c.selection.kappa_source)},
             {"rate_estimator", estimator_name(c.selection.rate_estimator)},
             {"band_hz", {c.selection.band.low_hz, c.selection.band.high_hz}}}},
           {"evaluation", {{"enabled", c.evaluation.enabled}, {"detection_radius", c.evaluation.detection_radius}}}};
    if (c.scene) j["scene"] = to_json(*c.scene);
    if (!c.cube_paths.empty()) j["cubes"] = c.cube_paths;
    return j;
}

PipelineConfig config_from_json(const json& j) {
    if (j.value("format", std::string()) != kConfigFormat)
        throw std::invalid_argument(std::string("config: missing or wrong \"format\" (expected ") + kConfigFormat + ")");
    if (j.value("version", 0) != kConfigVersion)
        throw std::invalid_argument("config: unsupported version " + std::to_string(j.value("version", 0)));
    PipelineConfig c;
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.active_radars = j.value("active_radars", c.active_radars);
    if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));
    if (j.contains("cubes")) c.cube_paths = j.at("cubes").get<std::vector<std::string>>();
    if (!c.scene && c.cube_paths.empty()) throw std::invalid_argument("config: need either \"scene\" or \"cubes\"");
    if (j.contains("imaging")) {
        const auto& im = j.at("imaging");
        if (im.contains("grid")) {
            const auto& g = im.at("grid");
            auto& grid = c.imaging.grid;
            grid.x_min = g.value("x_min", grid.x_min);
            grid.x_max = g.value("x_max", grid.x_max);
            grid.y_min = g.value("y_min", grid.y_min);
            grid.y_max = g.value("y_max", grid.y_max);
            grid.pixel_size = g.value("pixel_size", grid.pixel_size);
        }
        c.imaging.taylor_sll_db = im.value("taylor_sll_db", c.imaging.taylor_sll_db);
        c.imaging.taylor_nbar = im.value("taylor_nbar", c.imaging.taylor_nbar);
    }
    if (j.contains("clustering")) {
        const auto& cl = j.at("clustering");
        c.clustering.n_points = cl.value("n_points", c.clustering.n_points);
        c.clustering.k_max = cl.value("k_max", c.clustering.k_max);
        c.clustering.noise_floor_db = cl.value("noise_floor_db", c.clustering.noise_floor_db);
        c.clustering.min_cluster_fraction = cl.value("min_cluster_fraction", c.clustering.min_cluster_fraction);
        c.clustering.merge_distance = cl.value("merge_distance", c.clustering.merge_distance);
        c.clustering.merge_correlation = cl.value("merge_correlation", c.clustering.merge_correlation);
    }
    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        c.fusion.d_th = f.value("d_th", c.fusion.d_th);
        c.fusion.window_length = f.value("window_length", c.fusion.window_length);
    }
    if (j.contains("selection")) {
        const auto& s = j.at("selection");
        const auto src = s.value("kappa_source", std::string("complex"));
        if (src == "complex") c.selection.kappa_source = KappaSource::Complex;
        else if (src == "phase") c.selection.kappa_source = KappaSource::Phase;
        else throw std::invalid_argument("config: kappa_source must be \"complex\" or \"phase\"");
        const auto est = s.value("rate_estimator", std::string("spectral"));
        if (est == "spectral") c.selection.rate_estimator = RateEstimator::Spectral;
        else if (est == "intervals") c.selection.rate_estimator = RateEstimator::Intervals;
        else throw std::invalid_argument("config: rate_estimator must be \"spectral\" or \"intervals\"");
        if (s.contains("band_hz")) {
            c.selection.band.low_hz = s.at("band_hz").at(0).get<double>();
            c.selection.band.high_hz = s.at("band_hz").at(1).get<double>();
        }
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        c.evaluation.enabled = e.value("enabled", c.evaluation.enabled);
        c.evaluation.detection_radius = e.value("detection_radius", c.evaluation.detection_radius);
    }
    if (!(c.fusion.window_length > 0.0) || !(c.fusion.d_th > 0.0))
        throw std::invalid_argument("config: fusion.window_length and fusion.d_th must be > 0");
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path.string());
    PipelineConfig c = config_from_json(json::parse(is, nullptr, true, /*ignore_comments=*/true));
    // Relative cube paths are resolved against the config file's directory.
    for (auto& p : c.cube_paths)
        if (std::filesystem::path(p).is_relative()) p = (path.parent_path() / p).string();
    return c;
}

void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config " + path.string());
    os << std::setw(2) << to_json(config) << '\n';
}

// ---------------------------------------------------------------- stages

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Simulate: return "simulate";
        case Stage::Image: return "image";
        case Stage::Cluster: return "cluster";
        case Stage::Align: return "align";
        case Stage::Select: return "select";
        case Stage::Evaluate: return "evaluate";
    }
    return "?";
}

Stage parse_stage(const std::string& name) {
    for (Stage s : {Stage::Simulate, Stage::Image, Stage::Cluster, Stage::Align, Stage::Select, Stage::Evaluate})
        if (name == stage_name(s)) return s;
    throw std::invalid_argument("unknown stage \"" + name + "\"");
}

StageError::StageError(Stage stage, const std::string& what, std::string hint)
    : std::runtime_error(std::string("stage '") + stage_name(stage) + "' failed: " + what + " (hint: " + hint + ")"),
      stage_(stage), hint_(std::move(hint)) {}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const char* hint_for(Stage s) {
    switch (s) {
        case Stage::Simulate: return "check the scene block: targets, radars, duration and parameter ranges";
        case Stage::Image: return "check imaging.grid (y_min > 0) and that cubes hold at least two frames";
        case Stage::Cluster: return "the image may be empty in a window; check noise_power, grid extent and clustering.n_points";
        case Stage::Align: return "alignment needs two or more co-visible targets per radar; inspect the cluster CSVs";
        case Stage::Select: return "check fusion.window_length (>= 3.2 s) and selection.band_hz";
        case Stage::Evaluate: return "evaluation requires a simulated scene; disable evaluation for recorded cubes";
    }
    return "";
}

// Per-window observation of one radar: clusters plus the slow-time series
// at every representative position.
struct RadarWindow {
    std::vector<TargetCluster> clusters;
    std::vector<RespWaveform> phase;
    std::vector<std::vector<cplx>> series;
};

std::size_t cluster_index(const std::vector<TargetCluster>& cs, int label) {
    for (std::size_t i = 0; i < cs.size(); ++i)
        if (cs[i].label == label) return i;
    throw std::out_of_range("cluster label not found");
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << std::setprecision(10);
    body(os);
}

json transform_json(const RigidTransform2D& T) { return {{"x", T.t.x()}, {"y", T.t.y()}, {"theta", T.theta()}}; }

json alignment_json(const AlignmentResult& a) {
    json pairs = json::array();
    for (const auto& [l1, l2] : a.associations.pairs) pairs.push_back(json::array({label_name(l1), label_name(l2)}));
    json un1 = json::array(), un2 = json::array();
    for (int l : a.associations.unpaired_1) un1.push_back(label_name(l));
    for (int l : a.associations.unpaired_2) un2.push_back(label_name(l));
    json rows = json::array(), cols = json::array(), values = json::array();
    for (int l : a.correlation.row_labels) rows.push_back(label_name(l));
    for (int l : a.correlation.col_labels) cols.push_back(label_name(l));
    for (std::size_t r = 0; r < a.correlation.rows(); ++r) {
        json row = json::array();
        for (std::size_t k = 0; k < a.correlation.cols(); ++k) row.push_back(a.correlation.at(r, k));
        values.push_back(row);
    }
    const auto& c = a.correlation;
    // Built explicitly: a brace list of string pairs would become an object.
    json seeds = json::array();
    for (const auto& [r, k] : {a.seed_pairs.first, a.seed_pairs.second})
        seeds.push_back(json::array({label_name(c.row_labels[r]), label_name(c.col_labels[k])}));
    return {{"seed", transform_json(a.seed)},
            {"refined", transform_json(a.refined)},
            {"seed_pairs", seeds},
            {"seed_residual", a.seed_residual},
            {"refined_residual", a.refined_residual},
            {"low_confidence", a.low_confidence},
            {"pairs", pairs},
            {"unpaired_1", un1},
            {"unpaired_2", un2},
            {"correlation", {{"rows", rows}, {"cols", cols}, {"values", values}}}};
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

RunReport run(const PipelineConfig& config, Stage until) {
    const auto t_total = Clock::now();
    RunReport report;
    report.seed = config.seed;
    const bool write = !config.output_dir.empty();
    const std::filesystem::path out(config.output_dir);
    if (write) std::filesystem::create_directories(out);

    auto flush_partial = [&](Stage failed, const std::string& msg) {
        if (!write) return;
        json j = report_to_json(report);
        j["failed_stage"] = stage_name(failed);
        j["error"] = msg;
        std::ofstream(out / "report.json") << std::setw(2) << j << '\n';
    };
    auto guarded = [&](Stage stage, auto&& body) {
        try {
            body();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            flush_partial(stage, e.what());
            throw StageError(stage, e.what(), hint_for(stage));
        }
    };

    // ---- simulate (or load)
    std::vector<SlowTimeCube> cubes;
    std::optional<SceneConfig> scene;
    std::vector<std::size_t> scene_index;  // active radar -> index in scene.radars
    auto t0 = Clock::now();
    guarded(Stage::Simulate, [&] {
        if (config.scene) {
            scene = *config.scene;
            scene->rng_seed = config.seed;
            scene->validate();
            for (std::size_t m = 0; m < scene->radars.size(); ++m) {
                const int id = scene->radars[m].id;
                if (!config.active_radars.empty() &&
                    std::find(config.active_radars.begin(), config.active_radars.end(), id) == config.active_radars.end())
                    continue;
                scene_index.push_back(m);
                cubes.push_back(synthesize_radar(*scene, m));
            }
        } else {
            for (const auto& p : config.cube_paths) {
                auto c = load_cube(p);
                if (!config.active_radars.empty() &&
                    std::find(config.active_radars.begin(), config.active_radars.end(), c.radar_id) == config.active_radars.end())
                    continue;
                cubes.push_back(std::move(c));
            }
        }
        if (cubes.empty()) throw std::invalid_argument("no active radars");
        for (const auto& c : cubes) report.radar_ids.push_back(c.radar_id);
        if (scene && scene_index.size() >= 2)
            report.true_transform = relative_transform(scene->radars[scene_index[0]], scene->radars[scene_index[1]]);
    });
    report.runtime.simulate_s = seconds_since(t0);
    report.completed_stage = stage_name(Stage::Simulate);
    auto finish = [&] {
        report.runtime.total_s = seconds_since(t_total);
        if (!write) return;
        std::ofstream(out / "report.json") << std::setw(2) << report_to_json(report) << '\n';
        const auto& r = report.runtime;
        std::ofstream(out / "runtime.json") << std::setw(2)
            << json{{"simulate_s", r.simulate_s}, {"image_s", r.image_s}, {"cluster_s", r.cluster_s}, {"align_s", r.align_s},
                    {"select_s", r.select_s}, {"evaluate_s", r.evaluate_s}, {"total_s", r.total_s}}
            << '\n';
    };
    if (write) save_config(out / "config.json", config);
    if (until == Stage::Simulate) {
        if (write)
            for (const auto& c : cubes) save_cube(out / ("radar" + std::to_string(c.radar_id) + ".cube"), c);
        finish();
        return report;
    }

    // ---- image + cluster, window by window
    const std::size_t n_radars = cubes.size();
    const double slow_dt = cubes.front().slow_dt;
    const auto window_frames = static_cast<std::size_t>(std::llround(config.fusion.window_length / slow_dt));
    std::size_t n_windows = 0;
    std::vector<std::vector<RadarWindow>> obs;  // [window][radar]
    std::vector<double> taper;

    guarded(Stage::Image, [&] {
        for (auto& c : cubes) c = suppress_clutter(c);
        std::size_t min_frames = std::numeric_limits<std::size_t>::max();
        for (const auto& c : cubes) min_frames = std::min(min_frames, c.frames);
        if (window_frames < 32 || window_frames > min_frames)
            throw std::invalid_argument("window of " + std::to_string(window_frames) + " frames does not fit the cubes");
        n_windows = min_frames / window_frames;
        taper = taylor_window(static_cast<int>(cubes.front().elements), config.imaging.taylor_sll_db, config.imaging.taylor_nbar);
        config.imaging.grid.validate();
    });

    for (std::size_t w = 0; w < n_windows; ++w) {
        WindowReport wr;
        wr.index = w;
        wr.t_start = cubes.front().t0 + static_cast<double>(w * window_frames) * slow_dt;
        wr.t_end = wr.t_start + static_cast<double>(window_frames) * slow_dt;
        std::vector<RadarWindow> radar_obs(n_radars);
        const std::uint64_t window_seed = substream(config.seed, "pipeline.window", w)();
        for (std::size_t m = 0; m < n_radars; ++m) {
            RadarImage image;
            auto ti = Clock::now();
            guarded(Stage::Image, [&] { image = beamform(cubes[m], config.imaging.grid, taper, w * window_frames, window_frames); });
            report.runtime.image_s += seconds_since(ti);
            if (until == Stage::Image) {
                if (write) {
                    save_image(out / ("image_r" + std::to_string(image.radar_id) + "_w" + std::to_string(w) + ".img"), image);
                    write_file(out / ("power_r" + std::to_string(image.radar_id) + "_w" + std::to_string(w) + ".csv"),
                               [&](std::ostream& os) { write_power_csv(os, image); });
                }
                continue;
            }
            auto tc = Clock::now();
            guarded(Stage::Cluster, [&] {
                const auto cloud = sample_point_cloud(image, image.t0, image.t0 + static_cast<double>(image.frames) * image.slow_dt,
                                                      config.clustering.n_points, window_seed, config.clustering.noise_floor_db);
                XMeansParams xp;
                xp.k_max = config.clustering.k_max;
                xp.min_cluster_fraction = config.clustering.min_cluster_fraction;
                xp.seed = window_seed;
                RadarWindow& ro = radar_obs[m];
                ro.clusters = xmeans(cloud, xp);
                auto waveforms = [&] {
                    ro.phase.clear();
                    ro.series.clear();
                    for (const auto& c : ro.clusters) {
                        ro.phase.push_back(extract_waveform(image, c.representative, c.label));
                        ro.series.push_back(image.pixel_series(image.grid.locate(c.representative)));
                    }
                };
                waveforms();
                if (config.clustering.merge_distance > 0.0 && ro.clusters.size() > 1) {
                    const std::size_t before = ro.clusters.size();
                    ro.clusters = merge_coherent_clusters(ro.clusters, ro.phase, config.clustering.merge_distance,
                                                          config.clustering.merge_correlation);
                    if (ro.clusters.size() != before) waveforms();
                }
                if (write) {
                    const std::string tag = "r" + std::to_string(image.radar_id) + "_w" + std::to_string(w);
                    write_file(out / ("clusters_" + tag + ".csv"), [&](std::ostream& os) { write_clusters_csv(os, ro.clusters); });
                    write_file(out / ("cluster_image_" + tag + ".csv"),
                               [&](std::ostream& os) { write_cluster_image_csv(os, cluster_image(ro.clusters, image.grid)); });
                }
            });
            report.runtime.cluster_s += seconds_since(tc);
            wr.clusters.push_back(radar_obs[m].clusters);
        }
        obs.push_back(std::move(radar_obs));
        report.windows.push_back(std::move(wr));
    }
    report.completed_stage = stage_name(until == Stage::Image ? Stage::Image : Stage::Cluster);
    if (until == Stage::Image || until == Stage::Cluster) {
        finish();
        return report;
    }

    // ---- align: every window is aligned on its own; the window with the most
    // associated pairs (then lowest refined residual) supplies the transform.
    auto ta = Clock::now();
    std::vector<std::optional<RigidTransform2D>> to_first(n_radars);
    to_first[0] = RigidTransform2D{};
    guarded(Stage::Align, [&] {
        for (std::size_t m = 1; m < n_radars; ++m) {
            std::optional<AlignmentResult> best;
            std::size_t best_w = 0;
            for (std::size_t w = 0; w < n_windows; ++w) {
                try {
                    auto a = align_from_waveforms(obs[w][0].clusters, obs[w][m].clusters, obs[w][0].phase, obs[w][m].phase,
                                                  config.fusion.d_th);
                    if (m == 1) report.windows[w].alignment = a;
                    const bool better = !best || a.associations.pairs.size() > best->associations.pairs.size() ||
                                        (a.associations.pairs.size() == best->associations.pairs.size() &&
                                         a.refined_residual < best->refined_residual);
                    if (better) {
                        best = std::move(a);
                        best_w = w;
                    }
                } catch (const AlignmentError& e) {
                    report.warnings.push_back("window " + std::to_string(w) + ", radar " + std::to_string(report.radar_ids[m]) +
                                              ": " + e.what());
                } catch (const DegenerateError& e) {
                    report.warnings.push_back("window " + std::to_string(w) + ", radar " + std::to_string(report.radar_ids[m]) +
                                              ": " + e.what());
                }
            }
            if (!best) {
                report.warnings.push_back("radar " + std::to_string(report.radar_ids[m]) +
                                          " could not be aligned; its data is left out of the fusion");
                continue;
            }
            if (best->low_confidence)
                report.warnings.push_back("radar " + std::to_string(report.radar_ids[m]) +
                                          ": low-confidence alignment (no associations beyond the seed pairs)");
            to_first[m] = best->refined;
            if (m == 1) {
                report.alignment = best;
                report.alignment_window = best_w;
            }
        }
    });
    report.runtime.align_s = seconds_since(ta);
    if (write && report.alignment) {
        write_file(out / "correlation.csv", [&](std::ostream& os) { write_correlation_csv(os, report.alignment->correlation); });
        write_file(out / "transform.csv", [&](std::ostream& os) { write_transform_csv(os, *report.alignment); });
        write_file(out / "associations.csv", [&](std::ostream& os) { write_associations_csv(os, report.alignment->associations); });
    }
    report.completed_stage = stage_name(Stage::Align);
    if (until == Stage::Align) {
        finish();
        return report;
    }

    // ---- select: fuse per window, pick the most sinusoid-like radar per target
    auto ts = Clock::now();
    guarded(Stage::Select, [&] {
        RateParams rp;
        rp.band = config.selection.band;
        rp.method = config.selection.rate_estimator;
        for (std::size_t w = 0; w < n_windows; ++w) {
            auto& wr = report.windows[w];
            std::vector<FusedTarget> fused;
            for (const auto& c : obs[w][0].clusters) {
                FusedTarget f;
                f.position = c.representative;
                f.members.emplace_back(report.radar_ids[0], c.label);
                fused.push_back(f);
            }
            for (std::size_t m = 1; m < n_radars; ++m) {
                if (!to_first[m]) continue;
                // Radar m is associated against radar 1's clusters only (star topology).
                std::vector<LabeledPoint> reps1, repsm;
                for (std::size_t i = 0; i < obs[w][0].clusters.size(); ++i)
                    reps1.push_back({static_cast<int>(i), fused[i].position});
                for (const auto& c : obs[w][m].clusters) repsm.push_back({c.label, c.representative});
                auto assoc = associate(reps1, repsm, *to_first[m], config.fusion.d_th);
                AssociationSet labeled_assoc;
                for (const auto& [fi, lm] : assoc.pairs) {
                    fused[static_cast<std::size_t>(fi)].members.emplace_back(report.radar_ids[m], lm);
                    labeled_assoc.pairs.emplace_back(obs[w][0].clusters[static_cast<std::size_t>(fi)].label, lm);
                }
                for (int fi : assoc.unpaired_1) labeled_assoc.unpaired_1.push_back(obs[w][0].clusters[static_cast<std::size_t>(fi)].label);
                for (int lm : assoc.unpaired_2) {
                    labeled_assoc.unpaired_2.push_back(lm);
                    FusedTarget f;
                    f.position = to_first[m]->apply(obs[w][m].clusters[cluster_index(obs[w][m].clusters, lm)].representative);
                    f.members.emplace_back(report.radar_ids[m], lm);
                    fused.push_back(f);
                }
                wr.associations.push_back(std::move(labeled_assoc));
            }
            int next_id = 1;
            for (auto& f : fused) {
                f.id = next_id++;
                f.kappa.assign(n_radars, std::nullopt);
                std::vector<std::size_t> member_cluster(n_radars, std::numeric_limits<std::size_t>::max());
                for (const auto& [rid, label] : f.members) {
                    const auto m = static_cast<std::size_t>(std::find(report.radar_ids.begin(), report.radar_ids.end(), rid) -
                                                            report.radar_ids.begin());
                    const std::size_t ci = cluster_index(obs[w][m].clusters, label);
                    member_cluster[m] = ci;
                    f.kappa[m] = config.selection.kappa_source == KappaSource::Complex
                                     ? kappa(std::span<const cplx>(obs[w][m].series[ci]), slow_dt, config.selection.band)
                                     : kappa(std::span<const double>(obs[w][m].phase[ci].samples), slow_dt, config.selection.band);
                }
                const auto chosen = select_radar(std::span<const std::optional<double>>(f.kappa));
                const std::size_t m = *chosen;
                f.chosen_radar = report.radar_ids[m];
                f.rate = estimate_rpm(obs[w][m].phase[member_cluster[m]].samples, slow_dt, rp);
            }
            wr.fused = std::move(fused);
        }
    });
    report.runtime.select_s = seconds_since(ts);
    report.completed_stage = stage_name(Stage::Select);

    if (until == Stage::Select || !config.evaluation.enabled || !scene) {
        if (write) {
            write_file(out / "windows.csv", [&](std::ostream& os) {
                os << "window,fused_target,x,y,chosen_radar,rpm,detected\n";
                for (const auto& wr : report.windows)
                    for (const auto& f : wr.fused)
                        os << wr.index << ',' << f.id << ',' << f.position.x() << ',' << f.position.y() << ',' << f.chosen_radar
                           << ',' << f.rate.rpm << ',' << f.rate.detected << '\n';
            });
        }
        finish();
        return report;
    }

    // ---- evaluate against simulator ground truth
    auto te = Clock::now();
    guarded(Stage::Evaluate, [&] {
        const GroundTruth gt = ground_truth(*scene, config.fusion.window_length);
        const double radius = config.evaluation.detection_radius;
        std::vector<WindowDetection> records;
        std::vector<int> target_ids;
        for (const auto& t : gt.targets) target_ids.push_back(t.id);
        for (std::size_t w = 0; w < n_windows; ++w) {
            const auto& wr = report.windows[w];
            for (const auto& t : gt.targets) {
                WindowDetection d;
                d.target_id = t.id;
                d.window = w;
                for (std::size_t m = 0; m < n_radars; ++m) {
                    std::vector<Vec2> reps;
                    for (const auto& c : obs[w][m].clusters) reps.push_back(c.representative);
                    d.per_radar.push_back(covers(reps, t.local_position[scene_index[m]], radius));
                }
                const Vec2 truth = t.local_position[scene_index[0]];
                const FusedTarget* hit = nullptr;
                double best = std::numeric_limits<double>::infinity();
                for (const auto& f : wr.fused) {
                    const double dist = (f.position - truth).norm();
                    if (dist <= radius && dist < best) {
                        best = dist;
                        hit = &f;
                    }
                }
                d.fused = hit != nullptr;
                records.push_back(d);
                RespEstimate e;
                e.target_id = t.id;
                e.window = w;
                e.true_rpm = w < t.window_rate.size() ? t.window_rate[w] : t.window_rate.back();
                if (hit) {
                    e.radar_id = hit->chosen_radar;
                    e.detected = hit->rate.detected;
                    e.rpm = hit->rate.rpm;
                }
                report.estimates.push_back(e);
            }
        }
        report.detection = detection_rate(records, target_ids, report.radar_ids);
        report.rpm_errors = rpm_error(report.estimates);

        if (write) {
            write_file(out / "windows.csv", [&](std::ostream& os) {
                os << "target,window,chosen_radar";
                for (int id : report.radar_ids) os << ",kappa_r" << id;
                os << ",rpm,true_rpm,error\n";
                for (const auto& e : report.estimates) {
                    os << e.target_id << ',' << e.window << ',' << (e.detected ? std::to_string(e.radar_id) : std::string());
                    const FusedTarget* hit = nullptr;
                    const Vec2 truth = gt.targets[static_cast<std::size_t>(
                        std::find(target_ids.begin(), target_ids.end(), e.target_id) - target_ids.begin())].local_position[scene_index[0]];
                    double best = std::numeric_limits<double>::infinity();
                    for (const auto& f : report.windows[e.window].fused)
                        if (double d = (f.position - truth).norm(); d <= radius && d < best) {
                            best = d;
                            hit = &f;
                        }
                    for (std::size_t m = 0; m < n_radars; ++m) {
                        os << ',';
                        if (hit && hit->kappa[m]) os << *hit->kappa[m];
                    }
                    os << ',';
                    if (e.detected) os << e.rpm;
                    os << ',' << e.true_rpm << ',';
                    if (e.detected) os << std::abs(e.rpm - e.true_rpm);
                    os << '\n';
                }
            });
            write_file(out / "detection.csv", [&](std::ostream& os) {
                const auto& dt = *report.detection;
                os << "row";
                for (int id : dt.target_ids) os << ",target" << id;
                os << '\n';
                for (std::size_t m = 0; m < dt.radar_ids.size(); ++m) {
                    os << "radar" << dt.radar_ids[m];
                    for (double v : dt.per_radar[m]) os << ',' << v;
                    os << '\n';
                }
                os << "fused";
                for (double v : dt.fused) os << ',' << v;
                os << '\n';
            });
            write_file(out / "rpm_error.csv", [&](std::ostream& os) {
                os << "target,mean_abs_error_rpm\n";
                for (const auto& [id, e] : report.rpm_errors->per_target) os << id << ',' << e << '\n';
                os << "mean," << report.rpm_errors->mean << '\n';
            });
        }
    });
    report.runtime.evaluate_s = seconds_since(te);
    report.completed_stage = stage_name(Stage::Evaluate);
    finish();
    return report;
}

json report_to_json(const RunReport& r) {
    json j{{"format", "mrfusion-report"}, {"version", 1}, {"seed", r.seed}, {"radar_ids", r.radar_ids},
           {"completed_stage", r.completed_stage}, {"warnings", r.warnings}};
    json windows = json::array();
    for (const auto& w : r.windows) {
        json wj{{"index", w.index}, {"t_start", w.t_start}, {"t_end", w.t_end}};
        json per_radar = json::array();
        for (const auto& cs : w.clusters) {
            json arr = json::array();
            for (const auto& c : cs)
                arr.push_back({{"label", c.name()},
                               {"x", c.representative.x()},
                               {"y", c.representative.y()},
                               {"n_members", c.members.size()},
                               {"mean_power", c.mean_power}});
            per_radar.push_back(arr);
        }
        wj["clusters"] = per_radar;
        if (w.alignment) wj["alignment"] = alignment_json(*w.alignment);
        json fused = json::array();
        for (const auto& f : w.fused) {
            json members = json::array();
            for (const auto& [rid, l] : f.members) members.push_back({rid, label_name(l)});
            json kap = json::array();
            for (const auto& k : f.kappa) kap.push_back(k ? json(*k) : json(nullptr));
            fused.push_back({{"id", f.id},
                             {"x", f.position.x()},
                             {"y", f.position.y()},
                             {"members", members},
                             {"kappa", kap},
                             {"chosen_radar", f.chosen_radar},
                             {"rpm", f.rate.rpm},
                             {"detected", f.rate.detected},
                             {"peak_ratio", number_or_null(f.rate.peak_ratio)}});
        }
        wj["fused"] = fused;
        windows.push_back(wj);
    }
    j["windows"] = windows;
    if (r.alignment) {
        j["alignment"] = alignment_json(*r.alignment);
        j["alignment"]["window"] = r.alignment_window;
    }
    if (r.true_transform) j["true_transform"] = transform_json(*r.true_transform);
    if (r.detection) {
        const auto& d = *r.detection;
        j["detection"] = {{"target_ids", d.target_ids}, {"radar_ids", d.radar_ids}, {"per_radar", d.per_radar}, {"fused", d.fused}};
    }
    if (!r.estimates.empty()) {
        json est = json::array();
        for (const auto& e : r.estimates)
            est.push_back({{"target", e.target_id}, {"window", e.window}, {"radar", e.radar_id}, {"detected", e.detected},
                           {"rpm", e.rpm}, {"true_rpm", e.true_rpm}});
        j["estimates"] = est;
    }
    if (r.rpm_errors) {
        json per = json::object();
        for (const auto& [id, e] : r.rpm_errors->per_target) per[std::to_string(id)] = number_or_null(e);
        j["rpm_error"] = {{"per_target", per}, {"mean", number_or_null(r.rpm_errors->mean)}};
    }
    return j;
}

std::string render_report(const json& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "seed " << r.value("seed", 0ULL) << ", radars";
    for (const auto& id : r.at("radar_ids")) os << ' ' << id.get<int>();
    os << ", completed stage: " << r.value("completed_stage", std::string("?")) << "\n";

    if (r.contains("alignment")) {
        const auto& a = r.at("alignment");
        const auto& c = a.at("correlation");
        os << "\nCorrelation coefficients (window " << a.value("window", 0) << ")\n        ";
        for (const auto& l : c.at("cols")) os << std::setw(6) << l.get<std::string>();
        os << '\n';
        for (std::size_t i = 0; i < c.at("rows").size(); ++i) {
            os << std::setw(8) << c.at("rows")[i].get<std::string>();
            for (const auto& v : c.at("values")[i]) os << std::setw(6) << v.get<double>();
            os << '\n';
        }
        auto tf = [&](const char* name, const json& t) {
            os << name << ": x = " << t.at("x").get<double>() << " m, y = " << t.at("y").get<double>()
               << " m, theta = " << t.at("theta").get<double>() << " rad\n";
        };
        os << '\n';
        tf("seed transform   ", a.at("seed"));
        tf("refined transform", a.at("refined"));
        if (r.contains("true_transform")) tf("true transform   ", r.at("true_transform"));
        os << "associated pairs:";
        for (const auto& p : a.at("pairs")) os << " (" << p[0].get<std::string>() << "," << p[1].get<std::string>() << ")";
        os << "\nunpaired radar-1:";
        for (const auto& l : a.at("unpaired_1")) os << ' ' << l.get<std::string>();
        os << "\nunpaired radar-2:";
        for (const auto& l : a.at("unpaired_2")) os << ' ' << l.get<std::string>();
        os << '\n';
    }
    if (r.contains("detection")) {
        const auto& d = r.at("detection");
        os << "\nTarget detection rates (%)\n          ";
        for (const auto& id : d.at("target_ids")) os << std::setw(7) << id.get<int>();
        os << '\n';
        os << std::setprecision(0);
        for (std::size_t m = 0; m < d.at("radar_ids").size(); ++m) {
            os << "Radar " << std::setw(3) << d.at("radar_ids")[m].get<int>() << ' ';
            for (const auto& v : d.at("per_radar")[m]) os << std::setw(7) << v.get<double>();
            os << '\n';
        }
        os << "Fused     ";
        for (const auto& v : d.at("fused")) os << std::setw(7) << v.get<double>();
        os << '\n' << std::setprecision(2);
    }
    if (r.contains("rpm_error")) {
        const auto& e = r.at("rpm_error");
        os << "\nErrors in rpm estimation\n";
        for (const auto& [id, v] : e.at("per_target").items())
            os << "  target " << id << ": " << (v.is_null() ? std::string("n/a") : std::to_string(v.get<double>())) << '\n';
        os << "  mean: " << (e.at("mean").is_null() ? std::string("n/a") : std::to_string(e.at("mean").get<double>())) << '\n';
    }
    if (!r.at("warnings").empty()) {
        os << "\nWarnings\n";
        for (const auto& w : r.at("warnings")) os << "  " << w.get<std::string>() << '\n';
    }
    return os.str();
}

namespace {

void diff_walk(const json& a, const json& b, const std::string& path, CompareTolerance tol, std::vector<DiffEntry>& out) {
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>(), y = b.get<double>();
        if (std::abs(x - y) > tol.abs + tol.rel * std::max(std::abs(x), std::abs(y))) out.push_back({path, a.dump(), b.dump()});
        return;
    }
    if (a.type() != b.type()) throw SchemaMismatch("type mismatch at " + (path.empty() ? "/" : path));
    if (a.is_object()) {
        for (const auto& [k, v] : a.items())
            if (!b.contains(k)) throw SchemaMismatch("key " + path + "/" + k + " missing from second report");
        for (const auto& [k, v] : b.items())
            if (!a.contains(k)) throw SchemaMismatch("key " + path + "/" + k + " missing from first report");
        for (const auto& [k, v] : a.items()) diff_walk(v, b.at(k), path + "/" + k, tol, out);
    } else if (a.is_array()) {
        if (a.size() != b.size()) {
            out.push_back({path + "#size", std::to_string(a.size()), std::to_string(b.size())});
            return;
        }
        for (std::size_t i = 0; i < a.size(); ++i) diff_walk(a[i], b[i], path + "/" + std::to_string(i), tol, out);
    } else if (a != b) {
        out.push_back({path, a.dump(), b.dump()});
    }
}

}  // namespace

std::vector<DiffEntry> compare(const json& a, const json& b, CompareTolerance tol) {
    if (a.value("format", std::string()) != b.value("format", std::string()) || a.value("version", 0) != b.value("version", 0))
        throw SchemaMismatch("reports have different format or version");
    std::vector<DiffEntry> out;
    diff_walk(a, b, "", tol, out);
    return out;
}

}  // namespace mrfusion
