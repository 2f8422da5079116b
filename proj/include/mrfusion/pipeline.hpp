#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrfusion/cluster_engine.hpp"
#include "mrfusion/fusion_align.hpp"
#include "mrfusion/imaging.hpp"
#include "mrfusion/resp_select.hpp"
#include "mrfusion/scene_sim.hpp"

namespace mrfusion {

inline constexpr const char* kConfigFormat = "mrfusion-pipeline";
inline constexpr int kConfigVersion = 1;

enum class KappaSource { Complex, Phase };

struct ImagingParams {
    ImageGrid grid;
    double taylor_sll_db = -35.0;
    int taylor_nbar = 4;
};

struct ClusteringParams {
    std::size_t n_points = 2000;
    std::size_t k_max = 12;
    double noise_floor_db = -20.0;
    double min_cluster_fraction = 0.01;
    double merge_distance = 0.6;     // m; 0 disables the coherent merge
    double merge_correlation = 0.8;
};

struct FusionParams {
    double d_th = 0.5;
    double window_length = 30.0;
};

struct SelectionParams {
    KappaSource kappa_source = KappaSource::Complex;
    RateEstimator rate_estimator = RateEstimator::Spectral;
    RespBand band;
};

struct EvaluationParams {
    bool enabled = true;
    double detection_radius = 0.5;
};

struct PipelineConfig {
    std::optional<SceneConfig> scene;
    std::vector<std::string> cube_paths;  // recorded cubes, used when no scene is given
    ImagingParams imaging;
    ClusteringParams clustering;
    FusionParams fusion;
    SelectionParams selection;
    EvaluationParams evaluation;
    std::vector<int> active_radars;  // radar ids; empty = all
    std::string output_dir = "out";
    std::uint64_t seed = 1;
};

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);

nlohmann::json to_json(const SceneConfig& scene);
SceneConfig scene_from_json(const nlohmann::json& j);

enum class Stage { Simulate, Image, Cluster, Align, Select, Evaluate };
const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);

/// A pipeline stage failed; carries the stage and a remediation hint.
class StageError : public std::runtime_error {
public:
    StageError(Stage stage, const std::string& what, std::string hint);
    Stage stage() const { return stage_; }
    const std::string& hint() const { return hint_; }

private:
    Stage stage_;
    std::string hint_;
};

struct FusedTarget {
    int id = 0;
    Vec2 position = Vec2::Zero();  // first radar's frame
    std::vector<std::pair<int, int>> members;  // (radar id, cluster label)
    std::vector<std::optional<double>> kappa;   // per active radar
    int chosen_radar = 0;
    RateEstimate rate;
};

struct WindowReport {
    std::size_t index = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<std::vector<TargetCluster>> clusters;  // per active radar
    std::optional<AlignmentResult> alignment;        // this window's own alignment
    std::vector<AssociationSet> associations;        // per radar m >= 1, under the adopted transform
    std::vector<FusedTarget> fused;
};

struct RuntimeMetrics {
    double simulate_s = 0.0;
    double image_s = 0.0;
    double cluster_s = 0.0;
    double align_s = 0.0;
    double select_s = 0.0;
    double evaluate_s = 0.0;
    double total_s = 0.0;
};

struct RunReport {
    std::uint64_t seed = 0;
    std::vector<int> radar_ids;
    std::vector<WindowReport> windows;
    std::optional<AlignmentResult> alignment;  // adopted transform (radar 2 -> radar 1)
    std::size_t alignment_window = 0;
    std::optional<RigidTransform2D> true_transform;
    std::vector<std::string> warnings;
    std::optional<DetectionTable> detection;
    std::vector<RespEstimate> estimates;
    std::optional<RpmErrorTable> rpm_errors;
    std::string completed_stage;
    RuntimeMetrics runtime;  // excluded from the deterministic report
};

/// Runs the pipeline up to and including `until`, writing artifacts into
/// config.output_dir (skipped when output_dir is empty).
RunReport run(const PipelineConfig& config, Stage until = Stage::Evaluate);

/// Deterministic report content (no runtime metrics).
nlohmann::json report_to_json(const RunReport& report);

/// Human-readable tables mirroring the correlation, transform, detection and
/// rpm-error summaries.
std::string render_report(const nlohmann::json& report);

struct DiffEntry {
    std::string path;
    std::string a;
    std::string b;
};

class SchemaMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CompareTolerance {
    double abs = 0.0;
    double rel = 0.0;
};

/// Field-wise comparison of two report documents. Numbers are equal when
/// |a - b| <= abs + rel * max(|a|, |b|). Structural differences throw
/// SchemaMismatch.
std::vector<DiffEntry> compare(const nlohmann::json& a, const nlohmann::json& b, CompareTolerance tol = {});

}  // namespace mrfusion
