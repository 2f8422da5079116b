#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mrfusion/common.hpp"
#include "mrfusion/imaging.hpp"

namespace mrfusion {

struct PointCloud {
    int radar_id = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<Vec2> points;
    std::vector<double> power;  // mean |I|^2 of the pixel each point was drawn from
};

struct TargetCluster {
    int label = 0;  // 1-based; rendered as A, B, ...
    std::vector<Vec2> members;
    std::vector<std::size_t> member_index;  // indices into the source cloud
    Vec2 representative = Vec2::Zero();
    double mean_power = 0.0;

    std::string name() const;
};

/// Letter label for a 1-based cluster index (1 -> "A", 27 -> "AA").
std::string label_name(int label);

struct ClusterImage {
    ImageGrid grid;
    std::vector<int> labels;  // per pixel, 0 = no cluster
};

/// Draws n_points with density proportional to rho * mean |I|^2 over frames
/// of [t_start, t_end) (seconds, same clock as image.t0). Pixels below the
/// peak weight by more than |noise_floor_db| are excluded.
PointCloud sample_point_cloud(const RadarImage& image, double t_start, double t_end, std::size_t n_points,
                              std::uint64_t seed, double noise_floor_db = -20.0);

struct XMeansParams {
    std::size_t k_max = 12;
    double min_cluster_fraction = 0.01;
    std::size_t max_iterations = 100;
    int split_restarts = 3;
    std::uint64_t seed = 0;
};

/// X-means: recursive BIC-scored 2-means splitting with k-means++ seeding.
/// Clusters are labeled left to right in x. Every cluster's representative
/// is its power-weighted centroid (plain centroid when the cloud carries no
/// power values).
std::vector<TargetCluster> xmeans(const PointCloud& cloud, const XMeansParams& params = {});

/// Bayesian information criterion of a full-covariance Gaussian mixture with
/// the given hard partition of `points` (higher is better).
double partition_bic(const std::vector<Vec2>& points, const std::vector<int>& assignment, int k);

/// Joins clusters sharing a group id (one id per cluster) into one cluster
/// each. Representatives combine as power-weighted centroids; the result is
/// relabeled left to right.
std::vector<TargetCluster> merge_clusters(const std::vector<TargetCluster>& clusters, const std::vector<int>& group);

ClusterImage cluster_image(const std::vector<TargetCluster>& clusters, const ImageGrid& grid);

/// label,x,y,n_members,mean_power
void write_clusters_csv(std::ostream& os, const std::vector<TargetCluster>& clusters);
void write_cluster_image_csv(std::ostream& os, const ClusterImage& image);

}  // namespace mrfusion
