#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace topokd::tda {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Points = std::vector<std::vector<double>>;  // m points, arbitrary dimension

/// One simplex of a Vietoris-Rips filtration. Vertices are sorted ascending;
/// the filtration value is the longest pairwise distance among its vertices
/// and (crit_u, crit_v) is the edge realizing it (meaningful for dim >= 1).
struct Simplex {
    std::array<int, 4> v{-1, -1, -1, -1};
    int dim = 0;
    double value = 0.0;
    int crit_u = -1, crit_v = -1;
    // gap between the longest and second-longest edge; drives tie detection
    // when diagram gradients are routed through this simplex
    double crit_margin = kInf;
};

struct Filtration {
    std::vector<Simplex> simplices;  // sorted by (value, dim, lexicographic vertices)
    int maxdim = 1;                  // homology dimensions computed: 0..maxdim
    double threshold = 0.0;
    int num_points = 0;
};

/// All simplices of dimension <= maxdim+1 with value <= threshold.
/// maxdim must be 0, 1 or 2; duplicate points are allowed.
Filtration build_filtration(const Points& points, int maxdim, double threshold);

struct DiagramPoint {
    double birth = 0.0;
    double death = kInf;
    int dim = 0;
    bool zero_persistence = false;  // birth == death; retained but flagged

    // critical simplices (vertex ids into the original point set)
    std::array<int, 4> birth_simplex{-1, -1, -1, -1};
    std::array<int, 4> death_simplex{-1, -1, -1, -1};
    int birth_crit_u = -1, birth_crit_v = -1;  // max edge of the birth simplex
    int death_crit_u = -1, death_crit_v = -1;
    double birth_crit_margin = kInf;
    double death_crit_margin = kInf;

    bool finite() const { return death != kInf; }
    double persistence() const { return death - birth; }
};

struct PersistenceDiagram {
    std::vector<DiagramPoint> points;
    int maxdim = 1;

    std::vector<DiagramPoint> in_dimension(int dim) const;
    std::size_t finite_count() const;
};

/// Standard column reduction of the boundary matrix over Z/2. Pivot pairs
/// become (birth, death) points; unpaired creators become infinite bars.
PersistenceDiagram reduce(const Filtration& filtration);

/// Independent H0 oracle: single-linkage merge tree from sorted edges and
/// union-find. Deaths are merge distances; one infinite bar per component.
PersistenceDiagram h0_unionfind(const Points& points, double threshold);

struct SnapshotProfile {
    std::vector<double> scales;
    std::vector<std::vector<int>> betti;  // betti[s][d], d = 0..maxdim
};

/// Betti numbers of the VR complex truncated at each fixed scale.
SnapshotProfile snapshot_betti(const Points& points, const std::vector<double>& scales, int maxdim);

/// Seeded uniform subsample without replacement; the returned indices are
/// ascending, and identical (N, m, seed) always produce the identical list so
/// teacher and student features of one input share it.
struct Subsample {
    Points points;
    std::vector<int> indices;
};
Subsample subsample_for_tda(const Points& features, int m, std::uint64_t seed);

double diameter(const Points& points);

/// "dim birth death [birth-simplex] [death-simplex]" per line, "inf" for
/// infinite deaths, simplices as comma-separated vertex ids.
std::string to_text(const PersistenceDiagram& d);
PersistenceDiagram diagram_from_text(const std::string& text);

}  // namespace topokd::tda
