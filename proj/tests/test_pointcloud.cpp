#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include "topokd/pointcloud.hpp"
#include "topokd/rng.hpp"

using namespace topokd;

namespace {

// second FNV-1a route: multiply decomposed into shifts and adds
std::uint64_t fnv1a_64_reference(const unsigned char* p, std::size_t len) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h += (h << 1) + (h << 4) + (h << 5) + (h << 7) + (h << 8) + (h << 40);
    }
    return h;
}

// hash-free bucketing oracle keyed by the quantized integer triple
pc::PointCloud grid_sample_oracle(const pc::PointCloud& cloud, double grid) {
    std::map<std::tuple<long long, long long, long long>, int> cells;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto key = std::make_tuple(
            static_cast<long long>(std::floor(cloud.coords[i][0] / grid)),
            static_cast<long long>(std::floor(cloud.coords[i][1] / grid)),
            static_cast<long long>(std::floor(cloud.coords[i][2] / grid)));
        if (!cells.count(key)) cells[key] = static_cast<int>(i);
    }
    std::vector<int> keep;
    for (const auto& [k, idx] : cells) keep.push_back(idx);
    std::sort(keep.begin(), keep.end());
    pc::PointCloud out;
    out.num_classes = cloud.num_classes;
    for (int i : keep) {
        out.coords.push_back(cloud.coords[i]);
        if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[i]);
        if (cloud.has_labels()) out.labels.push_back(cloud.labels[i]);
    }
    return out;
}

pc::PointCloud random_cloud(int n, std::uint64_t seed, double extent = 1.0) {
    std::mt19937_64 g(seed);
    pc::PointCloud c;
    for (int i = 0; i < n; ++i)
        c.coords.push_back({rng::uniform(g, -extent, extent), rng::uniform(g, -extent, extent),
                            rng::uniform(g, -extent, extent)});
    return c;
}

std::vector<double> pairwise_distances(const pc::PointCloud& c) {
    std::vector<double> d;
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j) {
            double s = 0;
            for (int a = 0; a < 3; ++a) {
                const double v = c.coords[i][a] - c.coords[j][a];
                s += v * v;
            }
            d.push_back(std::sqrt(s));
        }
    std::sort(d.begin(), d.end());
    return d;
}

}  // namespace

TEST_CASE("fnv1a matches the published test vectors") {
    CHECK(pc::fnv1a_64("", 0) == 0xcbf29ce484222325ULL);
    const char a = 'a';
    CHECK(pc::fnv1a_64(&a, 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(pc::fnv1a_64("ab", 2) == pc::fnv1a_64("ab", 2));
}

TEST_CASE("fnv1a agrees with an independent implementation on random byte strings") {
    std::mt19937_64 g(42);
    for (int t = 0; t < 100; ++t) {
        std::vector<unsigned char> bytes(g() % 64);
        for (auto& b : bytes) b = static_cast<unsigned char>(g());
        CHECK(pc::fnv1a_64(bytes.data(), bytes.size()) == fnv1a_64_reference(bytes.data(), bytes.size()));
    }
}

TEST_CASE("grid_sample collapses cells to the lowest-index representative") {
    pc::PointCloud c;
    c.coords = {{0.01, 0.01, 0.01}, {0.02, 0.02, 0.02}, {0.04, 0.01, 0.03}};
    const pc::PointCloud out = pc::grid_sample(c, 0.05);
    REQUIRE(out.size() == 1);
    CHECK(out.coords[0][0] == 0.01);
}

TEST_CASE("grid_sample keeps separated points") {
    pc::PointCloud c;
    c.coords = {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, {2.0, 0.0, 1.0}};
    CHECK(pc::grid_sample(c, 0.05).size() == 3);
}

TEST_CASE("grid_sample matches the bucketing oracle and is idempotent") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const pc::PointCloud c = random_cloud(1000, seed, 0.5);
        const pc::PointCloud got = pc::grid_sample(c, 0.05);
        const pc::PointCloud want = grid_sample_oracle(c, 0.05);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.coords[i] == want.coords[i]);

        const pc::PointCloud again = pc::grid_sample(got, 0.05);
        REQUIRE(again.size() == got.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(again.coords[i] == got.coords[i]);
    }
}

TEST_CASE("grid_sample rejects non-positive grids") {
    const pc::PointCloud c = random_cloud(4, 9);
    CHECK_THROWS_AS(pc::grid_sample(c, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(pc::grid_sample(c, -1.0), std::invalid_argument);
}

TEST_CASE("miou hand-computed case") {
    CHECK(pc::miou({0, 1, 1, 1}, {0, 0, 1, 1}, 2) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
    CHECK(pc::miou({0, 0, 1, 1}, {0, 0, 1, 1}, 2) == 1.0);
    CHECK(pc::miou({0, 0}, {1, 1}, 2) == 0.0);
}

TEST_CASE("miou excludes classes absent from both sides") {
    // class 2 never appears; mean over classes 0 and 1 only
    CHECK(pc::miou({0, 1}, {0, 1}, 3) == 1.0);
}

TEST_CASE("miou rejects malformed input") {
    CHECK_THROWS_AS(pc::miou({0, 1}, {0}, 2), std::invalid_argument);
    CHECK_THROWS_AS(pc::miou({0, 5}, {0, 1}, 2), std::invalid_argument);
}

TEST_CASE("miou is invariant under a shared permutation") {
    std::mt19937_64 g(7);
    std::vector<int> pred(50), gt(50), perm(50);
    for (int i = 0; i < 50; ++i) {
        pred[i] = static_cast<int>(g() % 4);
        gt[i] = static_cast<int>(g() % 4);
        perm[i] = i;
    }
    for (int i = 0; i < 50; ++i) std::swap(perm[i], perm[i + g() % (50 - i)]);
    std::vector<int> pred_p(50), gt_p(50);
    for (int i = 0; i < 50; ++i) {
        pred_p[i] = pred[perm[i]];
        gt_p[i] = gt[perm[i]];
    }
    CHECK(pc::miou(pred, gt, 4) == pc::miou(pred_p, gt_p, 4));
}

TEST_CASE("scene generation is deterministic") {
    pc::SceneSpec spec;
    spec.shape = pc::SceneShape::Clusters;
    spec.cluster_count = 2;
    spec.num_classes = 2;
    spec.seed = 7;
    spec.num_points = 64;
    const pc::LabeledScene a = pc::generate_scene(spec);
    const pc::LabeledScene b = pc::generate_scene(spec);
    REQUIRE(a.cloud.size() == b.cloud.size());
    for (std::size_t i = 0; i < a.cloud.size(); ++i) {
        CHECK(a.cloud.coords[i] == b.cloud.coords[i]);
        CHECK(a.cloud.labels[i] == b.cloud.labels[i]);
    }
    CHECK(a.cloud.intensity == b.cloud.intensity);
}

TEST_CASE("two well-separated clusters stay separated at the recorded scale") {
    pc::SceneSpec spec;
    spec.shape = pc::SceneShape::Clusters;
    spec.cluster_count = 2;
    spec.num_classes = 2;
    spec.seed = 7;
    spec.num_points = 80;
    const pc::LabeledScene scene = pc::generate_scene(spec);
    CHECK(scene.topology.betti0 == 2);

    // single-linkage at the recorded scale: components must match betti0
    const std::size_t n = scene.cloud.size();
    std::vector<int> comp(n);
    for (std::size_t i = 0; i < n; ++i) comp[i] = static_cast<int>(i);
    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0;
                for (int a = 0; a < 3; ++a) {
                    const double v = scene.cloud.coords[i][a] - scene.cloud.coords[j][a];
                    s += v * v;
                }
                if (std::sqrt(s) <= scene.topology.scale && comp[i] != comp[j]) {
                    const int from = std::max(comp[i], comp[j]), to = std::min(comp[i], comp[j]);
                    for (auto& c : comp)
                        if (c == from) c = to;
                    merged = true;
                }
            }
    }
    CHECK(std::set<int>(comp.begin(), comp.end()).size() == 2);
}

TEST_CASE("scene validation rejects degenerate parameters") {
    pc::SceneSpec spec;
    spec.shape = pc::SceneShape::Circle;
    spec.radius = 0.0;
    CHECK_THROWS_AS(pc::generate_scene(spec), std::invalid_argument);
    pc::SceneSpec k0;
    k0.num_classes = 0;
    CHECK_THROWS_AS(pc::generate_scene(k0), std::invalid_argument);
}

TEST_CASE("augment clips jitter per coordinate") {
    pc::PointCloud c = random_cloud(10000, 3);
    pc::AugmentConfig cfg;
    cfg.rotation_prob = 0;
    cfg.flip_prob = 0;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.jitter_sigma = 0.005;
    cfg.jitter_clip = 0.02;
    const pc::PointCloud out = pc::augment(c, cfg, 11);
    double worst = 0;
    for (std::size_t i = 0; i < c.size(); ++i)
        for (int a = 0; a < 3; ++a) worst = std::max(worst, std::fabs(out.coords[i][a] - c.coords[i][a]));
    CHECK(worst <= 0.02);
    CHECK(worst > 0.0);
}

TEST_CASE("rotation and flip preserve pairwise distances") {
    pc::PointCloud c = random_cloud(60, 5);
    pc::AugmentConfig cfg;
    cfg.rotation_prob = 1.0;
    cfg.rotation_deg = 37.0;
    cfg.flip_prob = 1.0;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.jitter_sigma = 0.0;
    const pc::PointCloud out = pc::augment(c, cfg, 21);
    const auto da = pairwise_distances(c);
    const auto db = pairwise_distances(out);
    for (std::size_t i = 0; i < da.size(); ++i)
        CHECK(std::fabs(da[i] - db[i]) <= 1e-9 * std::max(1.0, da[i]));
}

TEST_CASE("augment with all transforms disabled is the identity") {
    pc::PointCloud c = random_cloud(32, 8);
    pc::AugmentConfig cfg;
    cfg.rotation_prob = 0;
    cfg.flip_prob = 0;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.jitter_sigma = 0.0;
    const pc::PointCloud out = pc::augment(c, cfg, 99);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(out.coords[i] == c.coords[i]);
}

TEST_CASE("augment keeps labels and point count") {
    pc::SceneSpec spec;
    spec.shape = pc::SceneShape::PlanesObjects;
    spec.num_classes = 4;
    spec.num_points = 120;
    spec.seed = 3;
    const pc::LabeledScene scene = pc::generate_scene(spec);
    const pc::PointCloud out = pc::augment(scene.cloud, pc::AugmentConfig{}, 17);
    CHECK(out.size() == scene.cloud.size());
    CHECK(out.labels == scene.cloud.labels);
    CHECK(out.intensity == scene.cloud.intensity);
}

TEST_CASE("augment config validation") {
    pc::AugmentConfig bad;
    bad.rotation_prob = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.scale_min = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.jitter_clip = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
