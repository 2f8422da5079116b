#include "mrfusion/cluster_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/LU>

#include "mrfusion/rng.hpp"

namespace mrfusion {

namespace {

void relabel(std::vector<TargetCluster>& clusters) {
    std::sort(clusters.begin(), clusters.end(), [](const TargetCluster& a, const TargetCluster& b) {
        return a.representative.x() != b.representative.x() ? a.representative.x() < b.representative.x()
                                                             : a.representative.y() < b.representative.y();
    });
    for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].label = static_cast<int>(i + 1);
}

}  // namespace

std::string label_name(int label) {
    if (label < 1) return "-";
    std::string s;
    int n = label;
    while (n > 0) {
        --n;
        s.insert(s.begin(), static_cast<char>('A' + n % 26));
        n /= 26;
    }
    return s;
}

std::string TargetCluster::name() const { return label_name(label); }

PointCloud sample_point_cloud(const RadarImage& image, double t_start, double t_end, std::size_t n_points,
                              std::uint64_t seed, double noise_floor_db) {
    const double rel0 = (t_start - image.t0) / image.slow_dt;
    const double rel1 = (t_end - image.t0) / image.slow_dt;
    if (!(rel1 > rel0) || rel0 < -1e-6 || rel1 > static_cast<double>(image.frames) + 1e-6)
        throw std::out_of_range("sample_point_cloud: window outside image duration");
    const auto first = static_cast<std::size_t>(std::max(0.0, std::round(rel0)));
    const auto last = std::min(image.frames, static_cast<std::size_t>(std::round(rel1)));

    const auto power = image.mean_power(first, last);
    std::vector<double> weight(power.size());
    for (std::size_t p = 0; p < power.size(); ++p) weight[p] = image.grid.rho(p) * power[p];
    const double peak = *std::max_element(weight.begin(), weight.end());
    if (!(peak > 0.0)) throw std::invalid_argument("sample_point_cloud: image has no energy in the window");
    const double floor = peak * std::pow(10.0, -std::abs(noise_floor_db) / 10.0);
    for (double& w : weight)
        if (w < floor) w = 0.0;

    PointCloud cloud;
    cloud.radar_id = image.radar_id;
    cloud.t_start = t_start;
    cloud.t_end = t_end;
    cloud.points.reserve(n_points);
    cloud.power.reserve(n_points);

    auto gen = substream(seed, "cluster.sample", static_cast<std::uint64_t>(image.radar_id));
    std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    const double ps = image.grid.pixel_size;
    for (std::size_t i = 0; i < n_points; ++i) {
        const std::size_t p = pick(gen);
        const double jx = jitter(gen);
        const double jy = jitter(gen);
        cloud.points.push_back(image.grid.center(p) + Vec2(jx * ps, jy * ps));
        cloud.power.push_back(power[p]);
    }
    return cloud;
}

namespace {

constexpr double kCovarianceFloor = 1e-8;

double gaussian_loglik(const std::vector<Vec2>& pts) {
    const auto n = static_cast<double>(pts.size());
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= n;
    Mat2 cov = Mat2::Zero();
    for (const auto& p : pts) {
        const Vec2 d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    cov += kCovarianceFloor * Mat2::Identity();
    return -0.5 * n * (2.0 * std::log(2.0 * kPi) + std::log(cov.determinant()) + 2.0);
}

std::size_t nearest(const Vec2& p, const std::vector<Vec2>& centers) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = (p - centers[c]).squaredNorm();
        if (d < bd) {
            bd = d;
            best = c;
        }
    }
    return best;
}

// Lloyd iterations; returns the within-cluster sum of squares.
double lloyd(const std::vector<Vec2>& pts, std::vector<Vec2>& centers, std::vector<int>& assign,
             std::size_t max_iterations) {
    assign.assign(pts.size(), -1);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const int c = static_cast<int>(nearest(pts[i], centers));
            if (c != assign[i]) {
                assign[i] = c;
                changed = true;
            }
        }
        std::vector<Vec2> sum(centers.size(), Vec2::Zero());
        std::vector<std::size_t> count(centers.size(), 0);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            sum[static_cast<std::size_t>(assign[i])] += pts[i];
            ++count[static_cast<std::size_t>(assign[i])];
        }
        for (std::size_t c = 0; c < centers.size(); ++c)
            if (count[c] > 0) centers[c] = sum[c] / static_cast<double>(count[c]);
        if (!changed) break;
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) sse += (pts[i] - centers[static_cast<std::size_t>(assign[i])]).squaredNorm();
    return sse;
}

std::vector<Vec2> kmeanspp(const std::vector<Vec2>& pts, std::size_t k, std::mt19937_64& gen) {
    std::vector<Vec2> centers;
    std::uniform_int_distribution<std::size_t> first(0, pts.size() - 1);
    centers.push_back(pts[first(gen)]);
    std::vector<double> d2(pts.size());
    while (centers.size() < k) {
        for (std::size_t i = 0; i < pts.size(); ++i) d2[i] = (pts[i] - centers[nearest(pts[i], centers)]).squaredNorm();
        if (std::accumulate(d2.begin(), d2.end(), 0.0) <= 0.0) break;
        std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
        centers.push_back(pts[pick(gen)]);
    }
    return centers;
}

}  // namespace

double partition_bic(const std::vector<Vec2>& points, const std::vector<int>& assignment, int k) {
    const auto n = static_cast<double>(points.size());
    double ll = 0.0;
    int used = 0;
    for (int c = 0; c < k; ++c) {
        std::vector<Vec2> sub;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (assignment[i] == c) sub.push_back(points[i]);
        if (sub.empty()) continue;
        ++used;
        const auto nj = static_cast<double>(sub.size());
        ll += nj * std::log(nj / n) + gaussian_loglik(sub);
    }
    // mean (2) + covariance (3) per component, plus mixing weights
    const double params = 5.0 * used + (used - 1);
    return ll - 0.5 * params * std::log(n);
}

std::vector<TargetCluster> xmeans(const PointCloud& cloud, const XMeansParams& params) {
    if (cloud.points.empty()) throw std::invalid_argument("xmeans: empty point cloud");
    if (params.k_max < 1) throw std::invalid_argument("xmeans: k_max must be >= 1");

    // Canonical point order makes the partition independent of input order.
    std::vector<std::size_t> order(cloud.points.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Vec2& pa = cloud.points[a];
        const Vec2& pb = cloud.points[b];
        return pa.x() != pb.x() ? pa.x() < pb.x() : pa.y() < pb.y();
    });
    std::vector<Vec2> pts;
    pts.reserve(order.size());
    for (std::size_t i : order) pts.push_back(cloud.points[i]);

    auto gen = substream(params.seed, "cluster.xmeans", static_cast<std::uint64_t>(cloud.radar_id));
    std::vector<Vec2> centers{std::accumulate(pts.begin(), pts.end(), Vec2(Vec2::Zero())) / static_cast<double>(pts.size())};
    std::vector<int> assign;
    std::vector<Vec2> best_centers;
    double best_bic = -std::numeric_limits<double>::infinity();

    // Splits are decided locally, but the output is the configuration with the
    // best global BIC seen on the way to k_max. When no split is accepted the
    // most promising one is forced, so a layout whose first 2-split looks bad
    // (several blobs that together resemble one broad Gaussian) is still found.
    while (true) {
        lloyd(pts, centers, assign, params.max_iterations);
        const double bic = partition_bic(pts, assign, static_cast<int>(centers.size()));
        if (bic > best_bic) {
            best_bic = bic;
            best_centers = centers;
        }
        if (centers.size() >= params.k_max) break;

        struct Candidate {
            std::size_t parent;
            std::vector<Vec2> children;
            double gain;
        };
        std::vector<Candidate> candidates;
        for (std::size_t c = 0; c < centers.size(); ++c) {
            std::vector<Vec2> sub;
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (assign[i] == static_cast<int>(c)) sub.push_back(pts[i]);
            if (sub.size() < 8) continue;
            std::vector<Vec2> best_children;
            std::vector<int> best_assign;
            double best_sse = std::numeric_limits<double>::infinity();
            for (int r = 0; r < params.split_restarts; ++r) {
                auto children = kmeanspp(sub, 2, gen);
                if (children.size() < 2) break;
                std::vector<int> a;
                const double sse = lloyd(sub, children, a, params.max_iterations);
                if (sse < best_sse) {
                    best_sse = sse;
                    best_children = children;
                    best_assign = a;
                }
            }
            if (best_children.size() != 2) continue;
            const std::vector<int> whole(sub.size(), 0);
            candidates.push_back({c, best_children, partition_bic(sub, best_assign, 2) - partition_bic(sub, whole, 1)});
        }
        if (candidates.empty()) break;
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) { return a.gain > b.gain; });
        std::size_t budget = params.k_max - centers.size();
        std::vector<bool> split(centers.size(), false);
        std::vector<Vec2> next;
        for (const auto& cand : candidates) {
            if (budget == 0) break;
            if (cand.gain <= 0.0 && &cand != &candidates.front()) break;  // only the best one is ever forced
            split[cand.parent] = true;
            next.insert(next.end(), cand.children.begin(), cand.children.end());
            --budget;
        }
        for (std::size_t c = 0; c < centers.size(); ++c)
            if (!split[c]) next.push_back(centers[c]);
        centers = std::move(next);
    }

    // Merge pass: join the pair whose union raises the global BIC most, until
    // no merge helps. Repairs blobs that an early split cut in half.
    centers = best_centers;
    lloyd(pts, centers, assign, params.max_iterations);
    while (centers.size() > 1) {
        const double base = partition_bic(pts, assign, static_cast<int>(centers.size()));
        double best_gain = 0.0;
        std::pair<std::size_t, std::size_t> best_pair{0, 0};
        for (std::size_t a = 0; a < centers.size(); ++a)
            for (std::size_t b = a + 1; b < centers.size(); ++b) {
                std::vector<int> merged(assign);
                for (int& v : merged) {
                    if (v == static_cast<int>(b)) v = static_cast<int>(a);
                    else if (v > static_cast<int>(b)) --v;
                }
                const double gain = partition_bic(pts, merged, static_cast<int>(centers.size() - 1)) - base;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_pair = {a, b};
                }
            }
        if (!(best_gain > 0.0)) break;
        const auto [a, b] = best_pair;
        std::size_t na = 0, nb = 0;
        for (int v : assign) {
            na += v == static_cast<int>(a);
            nb += v == static_cast<int>(b);
        }
        centers[a] = (static_cast<double>(na) * centers[a] + static_cast<double>(nb) * centers[b]) / static_cast<double>(na + nb);
        centers.erase(centers.begin() + static_cast<long>(b));
        lloyd(pts, centers, assign, params.max_iterations);
    }

    const auto min_count = static_cast<std::size_t>(std::ceil(params.min_cluster_fraction * static_cast<double>(pts.size())));
    const bool weighted = cloud.power.size() == cloud.points.size();
    std::vector<TargetCluster> clusters;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        TargetCluster tc;
        Vec2 wsum = Vec2::Zero();
        double wtot = 0.0;
        double psum = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (assign[i] != static_cast<int>(c)) continue;
            const std::size_t src = order[i];
            const double w = weighted ? cloud.power[src] : 1.0;
            tc.members.push_back(pts[i]);
            tc.member_index.push_back(src);
            wsum += w * pts[i];
            wtot += w;
            psum += w;
        }
        if (tc.members.empty() || tc.members.size() < min_count) continue;
        if (!(wtot > 0.0)) {
            wsum = Vec2::Zero();
            for (const auto& p : tc.members) wsum += p;
            wtot = static_cast<double>(tc.members.size());
        }
        tc.representative = wsum / wtot;
        tc.mean_power = weighted ? psum / static_cast<double>(tc.members.size()) : 0.0;
        clusters.push_back(std::move(tc));
    }
    relabel(clusters);
    return clusters;
}

std::vector<TargetCluster> merge_clusters(const std::vector<TargetCluster>& clusters, const std::vector<int>& group) {
    if (group.size() != clusters.size()) throw std::invalid_argument("merge_clusters: one group id per cluster");
    std::map<int, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < clusters.size(); ++i) by_group[group[i]].push_back(i);
    std::vector<TargetCluster> out;
    for (const auto& [g, idx] : by_group) {
        TargetCluster m;
        Vec2 wsum = Vec2::Zero();
        double wtot = 0.0, psum = 0.0;
        for (std::size_t i : idx) {
            const auto& c = clusters[i];
            const double n = static_cast<double>(c.members.size());
            const double w = c.mean_power > 0.0 ? c.mean_power * n : n;
            wsum += w * c.representative;
            wtot += w;
            psum += c.mean_power * n;
            m.members.insert(m.members.end(), c.members.begin(), c.members.end());
            m.member_index.insert(m.member_index.end(), c.member_index.begin(), c.member_index.end());
        }
        m.representative = wtot > 0.0 ? Vec2(wsum / wtot) : Vec2::Zero();
        m.mean_power = m.members.empty() ? 0.0 : psum / static_cast<double>(m.members.size());
        out.push_back(std::move(m));
    }
    relabel(out);
    return out;
}

ClusterImage cluster_image(const std::vector<TargetCluster>& clusters, const ImageGrid& grid) {
    ClusterImage img;
    img.grid = grid;
    img.labels.assign(grid.size(), 0);
    // Majority vote per pixel; ties go to the smaller label.
    std::map<std::size_t, std::map<int, std::size_t>> votes;
    for (const auto& c : clusters)
        for (const auto& p : c.members) {
            const std::size_t px = grid.locate(p);
            if (px < grid.size()) ++votes[px][c.label];
        }
    for (const auto& [px, tally] : votes) {
        int best = 0;
        std::size_t best_n = 0;
        for (const auto& [label, n] : tally)
            if (n > best_n) {
                best = label;
                best_n = n;
            }
        img.labels[px] = best;
    }
    return img;
}

void write_clusters_csv(std::ostream& os, const std::vector<TargetCluster>& clusters) {
    os << "label,x,y,n_members,mean_power\n";
    for (const auto& c : clusters)
        os << c.name() << ',' << c.representative.x() << ',' << c.representative.y() << ',' << c.members.size() << ','
           << c.mean_power << '\n';
}

void write_cluster_image_csv(std::ostream& os, const ClusterImage& image) {
    const std::size_t nx = image.grid.nx();
    for (std::size_t iy = 0; iy < image.grid.ny(); ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            if (ix) os << ',';
            os << image.labels[image.grid.index(ix, iy)];
        }
        os << '\n';
    }
}

}  // namespace mrfusion
