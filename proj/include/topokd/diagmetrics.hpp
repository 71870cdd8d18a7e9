#pragma once

#include <utility>
#include <vector>

#include "topokd/tda.hpp"

namespace topokd::dm {

/// Squared distance from a (birth, death) point to the diagonal.
double sq_diag_dist(const tda::DiagramPoint& p);

/// Points that participate in diagram distances: finite and not flagged as
/// zero-persistence.
std::size_t matchable_points(const tda::PersistenceDiagram& d);

/// Bidirectional nearest-neighbor Chamfer value between two diagrams,
/// computed per homology dimension and summed. Infinite and zero-persistence
/// points are excluded. When one side of a dimension is empty, each point of
/// the other side contributes its squared distance to the diagonal.
///
/// nn_a_to_b[i] is the original index into b.points of the nearest neighbor
/// of a.points[i]; -1 means "matched to its own diagonal projection" (empty
/// other side), -2 means the point was excluded from the computation.
struct ChamferResult {
    double value = 0.0;
    std::vector<int> nn_a_to_b;
    std::vector<int> nn_b_to_a;
};

ChamferResult chamfer(const tda::PersistenceDiagram& a, const tda::PersistenceDiagram& b);

/// Optimal partial matching with diagonal augmentation. pairs holds original
/// point indices; -1 stands for the diagonal on that side.
struct Matching {
    std::vector<std::pair<int, int>> pairs;
    double total_sq_cost = 0.0;
};

/// Exact 2-Wasserstein distance between the finite parts of two diagrams,
/// per dimension, solved as a balanced assignment problem. Throws when the
/// combined finite point count exceeds max_total.
std::pair<double, Matching> wasserstein2_exact(const tda::PersistenceDiagram& a,
                                               const tda::PersistenceDiagram& b,
                                               int max_total = 64);

struct BoundReport {
    double chamfer = 0.0;
    double w2 = 0.0;
    bool satisfied = false;
    double gap = 0.0;  // sqrt(chamfer) - w2
};

/// Checks w2 <= sqrt(chamfer). Records the outcome, never throws on failure.
BoundReport bound_check(const tda::PersistenceDiagram& a, const tda::PersistenceDiagram& b);

/// Shortest-augmenting-path solver for a dense square cost matrix.
/// Returns the assignment column for each row; cost_out gets the total.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost, double& cost_out);

}  // namespace topokd::dm
