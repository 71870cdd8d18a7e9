#include "topokd/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "topokd/rng.hpp"

namespace topokd::pc {

void PointCloud::validate() const {
    if (coords.empty()) throw std::invalid_argument("point cloud must contain at least one point");
    for (const auto& p : coords)
        for (double c : p)
            if (!std::isfinite(c)) throw std::invalid_argument("non-finite coordinate");
    if (!intensity.empty() && intensity.size() != coords.size())
        throw std::invalid_argument("intensity length mismatch");
    if (!labels.empty()) {
        if (labels.size() != coords.size()) throw std::invalid_argument("label length mismatch");
        if (num_classes <= 0) throw std::invalid_argument("labeled cloud needs num_classes > 0");
        for (int l : labels)
            if (l < 0 || l >= num_classes) throw std::invalid_argument("label out of range");
    }
}

const char* to_string(SceneShape s) {
    switch (s) {
        case SceneShape::Clusters: return "clusters";
        case SceneShape::Circle: return "circle";
        case SceneShape::TorusSlice: return "torus-slice";
        case SceneShape::PlanesObjects: return "planes+objects";
    }
    return "?";
}

SceneShape scene_shape_from_string(const std::string& s) {
    if (s == "clusters") return SceneShape::Clusters;
    if (s == "circle") return SceneShape::Circle;
    if (s == "torus-slice") return SceneShape::TorusSlice;
    if (s == "planes+objects") return SceneShape::PlanesObjects;
    throw std::invalid_argument("unknown scene shape: " + s);
}

void SceneSpec::validate() const {
    if (num_classes <= 0) throw std::invalid_argument("scene needs at least one class");
    if (num_points < 1) throw std::invalid_argument("scene needs at least one point");
    if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");
    switch (shape) {
        case SceneShape::Clusters:
            if (cluster_count < 1) throw std::invalid_argument("cluster_count must be >= 1");
            if (cluster_separation <= 0 || cluster_radius <= 0)
                throw std::invalid_argument("degenerate cluster geometry");
            break;
        case SceneShape::Circle:
            if (radius <= 0) throw std::invalid_argument("circle radius must be > 0");
            break;
        case SceneShape::TorusSlice:
            if (radius <= 0 || tube_width <= 0) throw std::invalid_argument("degenerate torus-slice geometry");
            if (tube_width >= radius) throw std::invalid_argument("tube_width must be < radius");
            break;
        case SceneShape::PlanesObjects:
            if (plane_extent <= 0 || object_radius <= 0 || object_height <= 0)
                throw std::invalid_argument("degenerate plane/object geometry");
            if (object_count < 0) throw std::invalid_argument("object_count must be >= 0");
            break;
    }
}

namespace {

// Gaussian offset with norm clipped to `cap`; keeps blob diameters bounded so
// the recorded scene topology is a construction guarantee, not a probability.
Vec3 clipped_blob_offset(std::mt19937_64& g, double sigma, double cap) {
    Vec3 off{rng::normal(g) * sigma, rng::normal(g) * sigma, rng::normal(g) * sigma};
    const double n = std::sqrt(off[0] * off[0] + off[1] * off[1] + off[2] * off[2]);
    if (n > cap && n > 0) {
        const double f = cap / n;
        for (double& c : off) c *= f;
    }
    return off;
}

void add_noise(PointCloud& cloud, double sigma, std::mt19937_64& g) {
    if (sigma <= 0) return;
    for (auto& p : cloud.coords)
        for (double& c : p) c += rng::normal(g) * sigma;
}

void fill_intensity(PointCloud& cloud, std::mt19937_64& g) {
    cloud.intensity.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double h = cloud.coords[i][2];
        cloud.intensity[i] = std::clamp(0.5 + 0.2 * h + 0.1 * rng::normal(g), 0.0, 1.0);
    }
}

LabeledScene make_clusters(const SceneSpec& spec, std::mt19937_64& g) {
    LabeledScene scene;
    const int k = spec.cluster_count;
    const double sep = spec.cluster_separation;
    const double cap = std::min(4.0 * spec.cluster_radius, 0.2 * sep);
    for (int i = 0; i < spec.num_points; ++i) {
        const int c = i % k;
        const Vec3 center{c * sep, 0.0, 0.0};
        const Vec3 off = clipped_blob_offset(g, spec.cluster_radius, cap);
        scene.cloud.coords.push_back({center[0] + off[0], center[1] + off[1], center[2] + off[2]});
        scene.cloud.labels.push_back(c % spec.num_classes);
    }
    // At 0.4*sep each blob is a full simplex (diameter <= 2*cap <= 0.4*sep)
    // and no cross-cluster edge exists (gap >= 0.6*sep).
    scene.topology.scale = 0.4 * sep;
    scene.topology.betti0 = std::min(k, spec.num_points);
    scene.topology.betti1 = 0;
    scene.topology.class_components.assign(spec.num_classes, 0);
    for (int c = 0; c < std::min(k, spec.num_points); ++c)
        scene.topology.class_components[c % spec.num_classes] += 1;
    return scene;
}

LabeledScene make_circle(const SceneSpec& spec, std::mt19937_64& g) {
    LabeledScene scene;
    const int n = spec.num_points;
    for (int i = 0; i < n; ++i) {
        const double th = 2.0 * M_PI * i / n;
        scene.cloud.coords.push_back({spec.radius * std::cos(th), spec.radius * std::sin(th), 0.0});
        const int sector = static_cast<int>(static_cast<double>(i) * spec.num_classes / n);
        scene.cloud.labels.push_back(std::min(sector, spec.num_classes - 1));
    }
    (void)g;
    const double spacing = 2.0 * spec.radius * std::sin(M_PI / n);
    scene.topology.scale = 1.5 * spacing;  // adjacent edges only: one cycle
    scene.topology.betti0 = 1;
    scene.topology.betti1 = n >= 3 ? 1 : 0;
    scene.topology.class_components.assign(spec.num_classes, 1);
    return scene;
}

LabeledScene make_torus_slice(const SceneSpec& spec, std::mt19937_64& g) {
    LabeledScene scene;
    (void)g;
    // Annular lattice: n_theta spokes x n_rad rings, thin z ripple.
    const int n = spec.num_points;
    const int n_rad = std::max(2, static_cast<int>(std::round(std::sqrt(n * spec.tube_width / (M_PI * spec.radius)))));
    const int n_theta = std::max(3, n / n_rad);
    for (int i = 0; i < n; ++i) {
        const int it = i % n_theta;
        const int ir = (i / n_theta) % n_rad;
        const double th = 2.0 * M_PI * it / n_theta;
        const double r = spec.radius - spec.tube_width + 2.0 * spec.tube_width * ir / (n_rad - 1);
        const double z = 0.1 * spec.tube_width * std::sin(3.0 * th);
        scene.cloud.coords.push_back({r * std::cos(th), r * std::sin(th), z});
        const int sector = static_cast<int>(static_cast<double>(it) * spec.num_classes / n_theta);
        scene.cloud.labels.push_back(std::min(sector, spec.num_classes - 1));
    }
    const double arc = 2.0 * M_PI * (spec.radius + spec.tube_width) / n_theta;
    const double ring = 2.0 * spec.tube_width / (n_rad - 1);
    scene.topology.scale = 1.6 * std::max(arc, ring);
    scene.topology.betti0 = 1;
    scene.topology.betti1 = 1;
    scene.topology.class_components.assign(spec.num_classes, 1);
    return scene;
}

LabeledScene make_planes_objects(const SceneSpec& spec, std::mt19937_64& g) {
    LabeledScene scene;
    const int n_obj = spec.num_classes > 1 ? spec.object_count : 0;
    const int pts_per_obj = n_obj > 0 ? std::min(spec.num_points / (2 * n_obj), 32) : 0;
    const int plane_pts = spec.num_points - n_obj * pts_per_obj;

    const int side = std::max(2, static_cast<int>(std::ceil(std::sqrt(plane_pts))));
    const double h = spec.plane_extent / (side - 1);
    for (int i = 0; i < plane_pts; ++i) {
        const int ix = i % side, iy = i / side;
        scene.cloud.coords.push_back({-0.5 * spec.plane_extent + ix * h,
                                      -0.5 * spec.plane_extent + iy * h, 0.0});
        scene.cloud.labels.push_back(0);
    }

    const double scale = 1.5 * h;
    const double ring_r = 0.3 * spec.plane_extent;
    const double cap = std::min(4.0 * spec.object_radius, 0.45 * scale);
    for (int o = 0; o < n_obj; ++o) {
        const double th = 2.0 * M_PI * o / std::max(1, n_obj);
        const Vec3 center{ring_r * std::cos(th), ring_r * std::sin(th), spec.object_height};
        const int cls = 1 + o % (spec.num_classes - 1);
        for (int i = 0; i < pts_per_obj; ++i) {
            const Vec3 off = clipped_blob_offset(g, spec.object_radius, cap);
            scene.cloud.coords.push_back({center[0] + off[0], center[1] + off[1], center[2] + off[2]});
            scene.cloud.labels.push_back(cls);
        }
    }
    scene.topology.scale = scale;
    scene.topology.betti0 = 1 + (pts_per_obj > 0 ? n_obj : 0);
    scene.topology.betti1 = 0;
    scene.topology.class_components.assign(spec.num_classes, 0);
    scene.topology.class_components[0] = 1;
    if (pts_per_obj > 0)
        for (int o = 0; o < n_obj; ++o) scene.topology.class_components[1 + o % (spec.num_classes - 1)] += 1;
    return scene;
}

}  // namespace

LabeledScene generate_scene(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 g(rng::substream(spec.seed, 0x5ce4ef00ULL + static_cast<int>(spec.shape)));
    LabeledScene scene;
    switch (spec.shape) {
        case SceneShape::Clusters: scene = make_clusters(spec, g); break;
        case SceneShape::Circle: scene = make_circle(spec, g); break;
        case SceneShape::TorusSlice: scene = make_torus_slice(spec, g); break;
        case SceneShape::PlanesObjects: scene = make_planes_objects(spec, g); break;
    }
    scene.cloud.num_classes = spec.num_classes;
    add_noise(scene.cloud, spec.noise_sigma, g);
    if (spec.with_intensity) fill_intensity(scene.cloud, g);
    scene.cloud.validate();
    return scene;
}

void AugmentConfig::validate() const {
    if (rotation_prob < 0 || rotation_prob > 1 || flip_prob < 0 || flip_prob > 1)
        throw std::invalid_argument("probabilities must be in [0,1]");
    if (scale_min <= 0 || scale_max < scale_min) throw std::invalid_argument("bad scale range");
    if (jitter_sigma < 0 || jitter_clip < 0) throw std::invalid_argument("bad jitter parameters");
    if (rotation_deg < 0) throw std::invalid_argument("rotation range must be >= 0");
}

PointCloud augment(const PointCloud& cloud, const AugmentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    cloud.validate();
    std::mt19937_64 g(rng::substream(seed, 0xa06e47ULL));
    PointCloud out = cloud;

    // Draws happen unconditionally so the stream layout does not depend on
    // which transforms fire.
    const double rot_u = rng::uniform01(g);
    const double angle = rng::uniform(g, -cfg.rotation_deg, cfg.rotation_deg) * M_PI / 180.0;
    const double s = rng::uniform(g, cfg.scale_min, cfg.scale_max);
    const double flip_x_u = rng::uniform01(g);
    const double flip_y_u = rng::uniform01(g);

    if (rot_u < cfg.rotation_prob) {
        const double c = std::cos(angle), sn = std::sin(angle);
        for (auto& p : out.coords) {
            const double x = p[0], y = p[1];
            p[0] = c * x - sn * y;
            p[1] = sn * x + c * y;
        }
    }
    for (auto& p : out.coords)
        for (double& c : p) c *= s;
    if (flip_x_u < cfg.flip_prob)
        for (auto& p : out.coords) p[0] = -p[0];
    if (flip_y_u < cfg.flip_prob)
        for (auto& p : out.coords) p[1] = -p[1];
    if (cfg.jitter_sigma > 0) {
        for (auto& p : out.coords)
            for (double& c : p) {
                const double d = std::clamp(rng::normal(g) * cfg.jitter_sigma, -cfg.jitter_clip, cfg.jitter_clip);
                double moved = c + d;
                // rounding in c + d may overshoot the clip by one ulp
                while (moved - c > cfg.jitter_clip) moved = std::nextafter(moved, c);
                while (moved - c < -cfg.jitter_clip) moved = std::nextafter(moved, c);
                c = moved;
            }
    }
    return out;
}

std::uint64_t fnv1a_64(const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

PointCloud grid_sample(const PointCloud& cloud, double grid) {
    if (grid <= 0) throw std::invalid_argument("grid size must be > 0");
    cloud.validate();

    std::unordered_map<std::uint64_t, int> cell_rep;  // digest -> lowest original index
    cell_rep.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::int64_t q[3];
        for (int a = 0; a < 3; ++a)
            q[a] = static_cast<std::int64_t>(std::floor(cloud.coords[i][a] / grid));
        unsigned char key[24];
        for (int a = 0; a < 3; ++a) {
            auto u = static_cast<std::uint64_t>(q[a]);
            for (int b = 0; b < 8; ++b) key[a * 8 + b] = static_cast<unsigned char>(u >> (8 * b));
        }
        const std::uint64_t digest = fnv1a_64(key, sizeof key);
        cell_rep.emplace(digest, static_cast<int>(i));  // keeps first (lowest) index
    }

    std::vector<int> keep;
    keep.reserve(cell_rep.size());
    for (const auto& [digest, idx] : cell_rep) keep.push_back(idx);
    std::sort(keep.begin(), keep.end());

    PointCloud out;
    out.num_classes = cloud.num_classes;
    for (int idx : keep) {
        out.coords.push_back(cloud.coords[idx]);
        if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[idx]);
        if (cloud.has_labels()) out.labels.push_back(cloud.labels[idx]);
    }
    return out;
}

double miou(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes) {
    if (pred.size() != gt.size()) throw std::invalid_argument("pred/gt length mismatch");
    if (num_classes <= 0) throw std::invalid_argument("num_classes must be > 0");
    std::vector<std::int64_t> inter(num_classes, 0), pred_n(num_classes, 0), gt_n(num_classes, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= num_classes || gt[i] < 0 || gt[i] >= num_classes)
            throw std::invalid_argument("class id out of range");
        pred_n[pred[i]]++;
        gt_n[gt[i]]++;
        if (pred[i] == gt[i]) inter[pred[i]]++;
    }
    double total = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        const std::int64_t uni = pred_n[c] + gt_n[c] - inter[c];
        if (uni == 0) continue;  // class absent from both sides
        total += static_cast<double>(inter[c]) / static_cast<double>(uni);
        counted++;
    }
    return counted > 0 ? total / counted : 0.0;
}

}  // namespace topokd::pc
