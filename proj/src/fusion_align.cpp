#include "mrfusion/fusion_align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace mrfusion {

std::vector<double> unwrap_phase(std::vector<double> phase) {
    double prev_raw = phase.empty() ? 0.0 : phase[0];
    for (std::size_t i = 1; i < phase.size(); ++i) {
        const double raw = phase[i];
        phase[i] = phase[i - 1] + std::remainder(raw - prev_raw, 2.0 * kPi);
        prev_raw = raw;
    }
    return phase;
}

RespWaveform extract_waveform(const RadarImage& image, const Vec2& position, int label, std::size_t first_frame,
                              std::size_t frame_count) {
    const std::size_t px = image.grid.locate(position);
    if (px >= image.grid.size()) throw std::out_of_range("extract_waveform: position outside image grid");
    if (frame_count == 0) frame_count = image.frames - std::min(first_frame, image.frames);
    if (first_frame + frame_count > image.frames) throw std::out_of_range("extract_waveform: frame range exceeds image");

    std::vector<double> ph(frame_count);
    for (std::size_t f = 0; f < frame_count; ++f) ph[f] = std::arg(image.at(first_frame + f, px));
    ph = unwrap_phase(std::move(ph));
    double mean = 0.0;
    for (double v : ph) mean += v;
    mean /= static_cast<double>(std::max<std::size_t>(1, ph.size()));
    for (double& v : ph) v -= mean;
    return {image.radar_id, label, image.slow_dt, std::move(ph)};
}

double resp_correlation(const RespWaveform& w1, const RespWaveform& w2) {
    if (w1.samples.size() != w2.samples.size()) throw std::invalid_argument("resp_correlation: length mismatch");
    const std::size_t n = w1.samples.size();
    if (n == 0) return 0.0;
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m1 += w1.samples[i];
        m2 += w2.samples[i];
    }
    m1 /= static_cast<double>(n);
    m2 /= static_cast<double>(n);
    double num = 0.0, e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = w1.samples[i] - m1;
        const double b = w2.samples[i] - m2;
        num += a * b;
        e1 += a * a;
        e2 += b * b;
    }
    if (!(e1 > 0.0) || !(e2 > 0.0)) return 0.0;
    return std::min(1.0, std::abs(num) / std::sqrt(e1 * e2));
}

CorrelationMatrix correlation_matrix(const std::vector<RespWaveform>& radar1, const std::vector<RespWaveform>& radar2) {
    CorrelationMatrix c;
    for (const auto& w : radar1) c.row_labels.push_back(w.label);
    for (const auto& w : radar2) c.col_labels.push_back(w.label);
    c.values.assign(c.rows() * c.cols(), 0.0);
    for (std::size_t r = 0; r < c.rows(); ++r)
        for (std::size_t k = 0; k < c.cols(); ++k) c.at(r, k) = resp_correlation(radar1[r], radar2[k]);
    return c;
}

std::vector<TargetCluster> merge_coherent_clusters(const std::vector<TargetCluster>& clusters,
                                                   const std::vector<RespWaveform>& waveforms, double max_distance,
                                                   double min_correlation) {
    if (waveforms.size() != clusters.size()) throw std::invalid_argument("merge_coherent_clusters: one waveform per cluster");
    std::vector<int> group(clusters.size());
    std::iota(group.begin(), group.end(), 0);
    auto find = [&](int i) {
        while (group[static_cast<std::size_t>(i)] != i) i = group[static_cast<std::size_t>(i)];
        return i;
    };
    for (std::size_t i = 0; i < clusters.size(); ++i)
        for (std::size_t j = i + 1; j < clusters.size(); ++j) {
            if ((clusters[i].representative - clusters[j].representative).norm() > max_distance) continue;
            if (resp_correlation(waveforms[i], waveforms[j]) < min_correlation) continue;
            const int a = find(static_cast<int>(i)), b = find(static_cast<int>(j));
            group[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
        }
    for (std::size_t i = 0; i < group.size(); ++i) group[i] = find(static_cast<int>(i));
    return merge_clusters(clusters, group);
}

PairSelection top_two_pairs(const CorrelationMatrix& c) {
    if (c.rows() < 2 || c.cols() < 2)
        throw AlignmentError("top_two_pairs: need at least two clusters per radar (got " + std::to_string(c.rows()) +
                             " x " + std::to_string(c.cols()) + ")");
    auto argmax = [&](auto allowed) {
        std::pair<std::size_t, std::size_t> best{0, 0};
        double bv = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < c.rows(); ++r)
            for (std::size_t k = 0; k < c.cols(); ++k)
                if (allowed(r, k) && c.at(r, k) > bv) {  // strict: first hit wins ties
                    bv = c.at(r, k);
                    best = {r, k};
                }
        return best;
    };
    PairSelection sel;
    sel.first = argmax([](std::size_t, std::size_t) { return true; });
    sel.second = argmax([&](std::size_t r, std::size_t k) { return r != sel.first.first && k != sel.first.second; });
    return sel;
}

RigidTransform2D procrustes(const Eigen::Matrix2Xd& S1, const Eigen::Matrix2Xd& S2) {
    if (S1.cols() != S2.cols()) throw std::invalid_argument("procrustes: point sets differ in size");
    if (S1.cols() < 2) throw std::invalid_argument("procrustes: need at least two correspondences");
    const Vec2 mean1 = S1.rowwise().mean();
    const Vec2 mean2 = S2.rowwise().mean();
    const Eigen::Matrix2Xd C1 = S1.colwise() - mean1;
    const Eigen::Matrix2Xd C2 = S2.colwise() - mean2;
    const double scale = std::max({1.0, mean1.norm(), mean2.norm()});
    if (C1.norm() <= 1e-12 * scale || C2.norm() <= 1e-12 * scale)
        throw DegenerateError("procrustes: points coincide, rotation is unobservable");

    const Mat2 H = C1 * C2.transpose();
    Eigen::JacobiSVD<Mat2> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat2 U = svd.matrixU();
    const Mat2 V = svd.matrixV();
    Mat2 D = Mat2::Identity();
    D(1, 1) = (U * V.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    RigidTransform2D T;
    T.R = U * D * V.transpose();
    T.t = mean1 - T.R * mean2;
    return T;
}

double rms_residual(const Eigen::Matrix2Xd& S1, const Eigen::Matrix2Xd& S2, const RigidTransform2D& T) {
    if (S1.cols() == 0) return 0.0;
    const Eigen::Matrix2Xd r = S1 - ((T.R * S2).colwise() + T.t);
    return std::sqrt(r.squaredNorm() / static_cast<double>(S1.cols()));
}

AssociationSet associate(const std::vector<LabeledPoint>& reps1, const std::vector<LabeledPoint>& reps2,
                         const RigidTransform2D& T, double d_th) {
    const std::size_t n1 = reps1.size();
    const std::size_t n2 = reps2.size();
    std::vector<Vec2> moved;
    moved.reserve(n2);
    for (const auto& p : reps2) moved.push_back(T.apply(p.position));

    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> best1(n1, none), best2(n2, none);
    std::vector<double> d1(n1, std::numeric_limits<double>::infinity()), d2(n2, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) {
            const double d = (reps1[i].position - moved[j]).norm();
            if (d > d_th) continue;
            if (d < d1[i]) {
                d1[i] = d;
                best1[i] = j;
            }
            if (d < d2[j]) {
                d2[j] = d;
                best2[j] = i;
            }
        }

    AssociationSet a;
    std::vector<bool> used2(n2, false);
    for (std::size_t i = 0; i < n1; ++i) {
        const std::size_t j = best1[i];
        if (j != none && best2[j] == i) {
            a.pairs.emplace_back(reps1[i].label, reps2[j].label);
            used2[j] = true;
        } else {
            a.unpaired_1.push_back(reps1[i].label);
        }
    }
    for (std::size_t j = 0; j < n2; ++j)
        if (!used2[j]) a.unpaired_2.push_back(reps2[j].label);
    return a;
}

namespace {

const TargetCluster& find_label(const std::vector<TargetCluster>& cs, int label) {
    for (const auto& c : cs)
        if (c.label == label) return c;
    throw std::out_of_range("unknown cluster label " + std::to_string(label));
}

std::pair<Eigen::Matrix2Xd, Eigen::Matrix2Xd> stack_pairs(const std::vector<TargetCluster>& c1,
                                                          const std::vector<TargetCluster>& c2,
                                                          const std::vector<std::pair<int, int>>& pairs) {
    Eigen::Matrix2Xd S1(2, static_cast<Eigen::Index>(pairs.size()));
    Eigen::Matrix2Xd S2(2, static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        S1.col(static_cast<Eigen::Index>(k)) = find_label(c1, pairs[k].first).representative;
        S2.col(static_cast<Eigen::Index>(k)) = find_label(c2, pairs[k].second).representative;
    }
    return {S1, S2};
}

std::vector<LabeledPoint> labeled(const std::vector<TargetCluster>& cs) {
    std::vector<LabeledPoint> out;
    for (const auto& c : cs) out.push_back({c.label, c.representative});
    return out;
}

}  // namespace

AlignmentResult align_two_radars(const std::vector<TargetCluster>& clusters1, const std::vector<TargetCluster>& clusters2,
                                 const RadarImage& image1, const RadarImage& image2, double d_th,
                                 std::size_t first_frame, std::size_t frame_count) {
    if (clusters1.size() < 2 || clusters2.size() < 2)
        throw AlignmentError("align_two_radars: need at least two clusters per radar");
    std::vector<RespWaveform> w1, w2;
    for (const auto& c : clusters1) w1.push_back(extract_waveform(image1, c.representative, c.label, first_frame, frame_count));
    for (const auto& c : clusters2) w2.push_back(extract_waveform(image2, c.representative, c.label, first_frame, frame_count));
    return align_from_waveforms(clusters1, clusters2, w1, w2, d_th);
}

AlignmentResult align_from_waveforms(const std::vector<TargetCluster>& clusters1,
                                     const std::vector<TargetCluster>& clusters2,
                                     const std::vector<RespWaveform>& w1, const std::vector<RespWaveform>& w2,
                                     double d_th) {
    if (clusters1.size() < 2 || clusters2.size() < 2)
        throw AlignmentError("align_two_radars: need at least two clusters per radar");
    if (w1.size() != clusters1.size() || w2.size() != clusters2.size())
        throw std::invalid_argument("align_from_waveforms: one waveform per cluster required");
    AlignmentResult r;
    r.correlation = correlation_matrix(w1, w2);
    r.seed_pairs = top_two_pairs(r.correlation);
    const std::vector<std::pair<int, int>> seeds{
        {clusters1[r.seed_pairs.first.first].label, clusters2[r.seed_pairs.first.second].label},
        {clusters1[r.seed_pairs.second.first].label, clusters2[r.seed_pairs.second.second].label}};
    {
        auto [S1, S2] = stack_pairs(clusters1, clusters2, seeds);
        r.seed = procrustes(S1, S2);
    }
    r.associations = associate(labeled(clusters1), labeled(clusters2), r.seed, d_th);
    if (r.associations.pairs.size() >= 2) {
        auto [S1, S2] = stack_pairs(clusters1, clusters2, r.associations.pairs);
        try {
            r.refined = procrustes(S1, S2);
        } catch (const DegenerateError&) {
            r.refined = r.seed;
            r.low_confidence = true;
        }
    } else {
        r.refined = r.seed;
        r.low_confidence = true;
    }
    // Only the seed pairs survived the gate: nothing new was learned.
    if (r.associations.pairs.size() <= 2) r.low_confidence = true;

    const auto& eval_pairs = r.associations.pairs.empty() ? seeds : r.associations.pairs;
    auto [S1, S2] = stack_pairs(clusters1, clusters2, eval_pairs);
    r.seed_residual = rms_residual(S1, S2, r.seed);
    r.refined_residual = rms_residual(S1, S2, r.refined);
    return r;
}

std::vector<std::optional<AlignmentResult>> align_star(const std::vector<std::vector<TargetCluster>>& clusters,
                                                       const std::vector<const RadarImage*>& images, double d_th,
                                                       std::size_t first_frame, std::size_t frame_count) {
    if (clusters.size() != images.size()) throw std::invalid_argument("align_star: clusters/images size mismatch");
    std::vector<std::optional<AlignmentResult>> out(clusters.size());
    if (clusters.empty()) return out;
    AlignmentResult self;
    self.associations.pairs.clear();
    out[0] = self;
    for (std::size_t m = 1; m < clusters.size(); ++m) {
        try {
            out[m] = align_two_radars(clusters[0], clusters[m], *images[0], *images[m], d_th, first_frame, frame_count);
        } catch (const AlignmentError&) {
            out[m].reset();
        } catch (const DegenerateError&) {
            out[m].reset();
        }
    }
    return out;
}

void write_correlation_csv(std::ostream& os, const CorrelationMatrix& c) {
    os << "radar1\\radar2";
    for (int l : c.col_labels) os << ',' << label_name(l);
    os << '\n';
    for (std::size_t r = 0; r < c.rows(); ++r) {
        os << label_name(c.row_labels[r]);
        for (std::size_t k = 0; k < c.cols(); ++k) os << ',' << c.at(r, k);
        os << '\n';
    }
}

void write_transform_csv(std::ostream& os, const AlignmentResult& r) {
    os << "stage,x,y,theta,rms_residual\n";
    os << "seed," << r.seed.t.x() << ',' << r.seed.t.y() << ',' << r.seed.theta() << ',' << r.seed_residual << '\n';
    os << "refined," << r.refined.t.x() << ',' << r.refined.t.y() << ',' << r.refined.theta() << ','
       << r.refined_residual << '\n';
}

void write_associations_csv(std::ostream& os, const AssociationSet& a) {
    os << "radar1,radar2\n";
    for (const auto& [l1, l2] : a.pairs) os << label_name(l1) << ',' << label_name(l2) << '\n';
    for (int l : a.unpaired_1) os << label_name(l) << ",\n";
    for (int l : a.unpaired_2) os << ',' << label_name(l) << '\n';
}

}  // namespace mrfusion
