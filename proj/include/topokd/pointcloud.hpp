#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace topokd::pc {

using Vec3 = std::array<double, 3>;

/// N points in meters, optional per-point intensity and class labels.
struct PointCloud {
    std::vector<Vec3> coords;
    std::vector<double> intensity;  // empty, or size N
    std::vector<int> labels;        // empty, or size N with values in [0, num_classes)
    int num_classes = 0;            // 0 when unlabeled

    std::size_t size() const { return coords.size(); }
    bool has_intensity() const { return !intensity.empty(); }
    bool has_labels() const { return !labels.empty(); }

    // Throws std::invalid_argument on any broken invariant (empty cloud,
    // non-finite coordinate, label out of range, field length mismatch).
    void validate() const;
};

enum class SceneShape { Clusters, Circle, TorusSlice, PlanesObjects };

const char* to_string(SceneShape s);
SceneShape scene_shape_from_string(const std::string& s);

/// Deterministic synthetic scene description. Identical spec + seed
/// always produce byte-identical clouds.
struct SceneSpec {
    SceneShape shape = SceneShape::Clusters;
    int num_classes = 2;
    std::uint64_t seed = 0;
    int num_points = 128;
    double noise_sigma = 0.0;   // extra jitter on top of the base geometry
    bool with_intensity = true;

    // clusters
    int cluster_count = 2;
    double cluster_separation = 4.0;
    double cluster_radius = 0.3;

    // circle / torus-slice
    double radius = 1.0;
    double tube_width = 0.25;

    // planes+objects
    double plane_extent = 4.0;
    int object_count = 3;
    double object_radius = 0.25;
    double object_height = 1.5;

    void validate() const;
};

/// Ground-truth topology of a generated scene, valid at `scale`.
struct SceneTopology {
    double scale = 0.0;
    int betti0 = 0;
    int betti1 = 0;
    std::vector<int> class_components;  // connected components per class at `scale`
};

struct LabeledScene {
    PointCloud cloud;
    SceneTopology topology;
};

LabeledScene generate_scene(const SceneSpec& spec);

/// Augmentation parameters. Defaults: z-rotation within +-1 degree applied
/// with probability 0.5, uniform scale in [0.9, 1.1], per-axis flip with
/// probability 0.5, Gaussian jitter sigma 0.005 m clipped at 0.02 m.
struct AugmentConfig {
    double rotation_deg = 1.0;
    double rotation_prob = 0.5;
    double scale_min = 0.9;
    double scale_max = 1.1;
    double flip_prob = 0.5;
    double jitter_sigma = 0.005;
    double jitter_clip = 0.02;

    void validate() const;
};

// Same N, labels and intensity untouched; per-coordinate jitter displacement
// never exceeds cfg.jitter_clip.
PointCloud augment(const PointCloud& cloud, const AugmentConfig& cfg, std::uint64_t seed);

/// FNV-1a, 64-bit.
std::uint64_t fnv1a_64(const void* bytes, std::size_t len);

/// Voxel-grid downsampling. Cells are keyed by the FNV-1a digest of the three
/// floor-quantized integer coordinates (little-endian 64-bit each); the
/// representative of a cell is the point with the lowest original index, and
/// output order is ascending original index.
PointCloud grid_sample(const PointCloud& cloud, double grid);

/// Mean intersection-over-union. Classes absent from both pred and gt are
/// excluded from the mean.
double miou(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes);

}  // namespace topokd::pc
