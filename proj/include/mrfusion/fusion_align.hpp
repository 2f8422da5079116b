#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mrfusion/cluster_engine.hpp"
#include "mrfusion/common.hpp"
#include "mrfusion/geometry.hpp"
#include "mrfusion/imaging.hpp"

namespace mrfusion {

/// Unwrapped, mean-removed phase of one image pixel over slow time.
struct RespWaveform {
    int radar_id = 0;
    int label = 0;
    double slow_dt = 0.1;
    std::vector<double> samples;  // rad
};

struct CorrelationMatrix {
    std::vector<int> row_labels;  // radar-1 clusters
    std::vector<int> col_labels;  // radar-2 clusters
    std::vector<double> values;   // row-major, entries in [0, 1]

    std::size_t rows() const { return row_labels.size(); }
    std::size_t cols() const { return col_labels.size(); }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
};

struct AssociationSet {
    std::vector<std::pair<int, int>> pairs;  // (radar-1 label, radar-2 label)
    std::vector<int> unpaired_1;
    std::vector<int> unpaired_2;
};

struct LabeledPoint {
    int label = 0;
    Vec2 position = Vec2::Zero();
};

/// Phase of the pixel containing `position` over frames
/// [first_frame, first_frame + frame_count) (0 = to the end), unwrapped and
/// mean-removed.
RespWaveform extract_waveform(const RadarImage& image, const Vec2& position, int label = 0,
                              std::size_t first_frame = 0, std::size_t frame_count = 0);

/// Removes 2*pi jumps between consecutive samples.
std::vector<double> unwrap_phase(std::vector<double> phase);

/// |Pearson correlation| of two equal-length series; 0 if either is constant.
double resp_correlation(const RespWaveform& w1, const RespWaveform& w2);

CorrelationMatrix correlation_matrix(const std::vector<RespWaveform>& radar1, const std::vector<RespWaveform>& radar2);

/// Merges clusters of one radar that are pieces of the same breathing
/// target: single-linkage over pairs closer than max_distance whose
/// waveforms correlate at least min_correlation. waveforms[i] belongs to
/// clusters[i].
std::vector<TargetCluster> merge_coherent_clusters(const std::vector<TargetCluster>& clusters,
                                                   const std::vector<RespWaveform>& waveforms, double max_distance,
                                                   double min_correlation);

struct PairSelection {
    std::pair<std::size_t, std::size_t> first;   // (row, col), zero-based
    std::pair<std::size_t, std::size_t> second;
};

/// Global argmax, then the argmax over entries sharing neither its row nor
/// its column. Ties go to the lexicographically smallest (row, col).
/// Throws AlignmentError for fewer than two rows or columns.
PairSelection top_two_pairs(const CorrelationMatrix& c);

/// Least-squares rotation + translation with S1 ~ R S2 + t (columns are
/// corresponding points), constrained to det R = +1.
RigidTransform2D procrustes(const Eigen::Matrix2Xd& S1, const Eigen::Matrix2Xd& S2);

/// Root-mean-square of |r1 - T r2| over the columns.
double rms_residual(const Eigen::Matrix2Xd& S1, const Eigen::Matrix2Xd& S2, const RigidTransform2D& T);

/// Gated association: a pair is kept when the transformed radar-2 point lies
/// within d_th of the radar-1 point and the two are mutual nearest neighbors
/// among the gated candidates.
AssociationSet associate(const std::vector<LabeledPoint>& reps1, const std::vector<LabeledPoint>& reps2,
                         const RigidTransform2D& T, double d_th);

struct AlignmentResult {
    RigidTransform2D seed;
    RigidTransform2D refined;
    PairSelection seed_pairs;
    AssociationSet associations;
    CorrelationMatrix correlation;
    double seed_residual = 0.0;     // RMS over the final associated pairs
    double refined_residual = 0.0;
    bool low_confidence = false;    // refinement fell back to the seed transform
};

/// Correlation -> top two pairs -> two-point Procrustes -> gated association
/// -> Procrustes refinement on every associated pair. Waveforms are taken from
/// frames [first_frame, first_frame + frame_count) of each image.
AlignmentResult align_two_radars(const std::vector<TargetCluster>& clusters1, const std::vector<TargetCluster>& clusters2,
                                 const RadarImage& image1, const RadarImage& image2, double d_th,
                                 std::size_t first_frame = 0, std::size_t frame_count = 0);

/// Same as align_two_radars with the waveforms already extracted, one per
/// cluster and in cluster order.
AlignmentResult align_from_waveforms(const std::vector<TargetCluster>& clusters1,
                                     const std::vector<TargetCluster>& clusters2,
                                     const std::vector<RespWaveform>& w1, const std::vector<RespWaveform>& w2,
                                     double d_th);

/// Multi-radar extension: every radar is aligned pairwise against the first
/// one. Entry 0 is the identity; entries that cannot be aligned are empty.
std::vector<std::optional<AlignmentResult>> align_star(const std::vector<std::vector<TargetCluster>>& clusters,
                                                       const std::vector<const RadarImage*>& images, double d_th,
                                                       std::size_t first_frame = 0, std::size_t frame_count = 0);

void write_correlation_csv(std::ostream& os, const CorrelationMatrix& c);
void write_transform_csv(std::ostream& os, const AlignmentResult& r);
void write_associations_csv(std::ostream& os, const AssociationSet& a);

}  // namespace mrfusion
