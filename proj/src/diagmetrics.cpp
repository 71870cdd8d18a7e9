#include "topokd/diagmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace topokd::dm {

namespace {

// finite, non-degenerate points of one dimension, keeping original indices
struct Slice {
    std::vector<int> idx;
    const tda::PersistenceDiagram* d;
    const tda::DiagramPoint& pt(int k) const { return d->points[idx[k]]; }
};

Slice slice_dim(const tda::PersistenceDiagram& d, int dim) {
    Slice s;
    s.d = &d;
    for (int i = 0; i < static_cast<int>(d.points.size()); ++i) {
        const auto& p = d.points[i];
        if (p.dim == dim && p.finite() && !p.zero_persistence) s.idx.push_back(i);
    }
    return s;
}

double sq_pt_dist(const tda::DiagramPoint& p, const tda::DiagramPoint& q) {
    const double db = p.birth - q.birth;
    const double dd = p.death - q.death;
    return db * db + dd * dd;
}

int max_dim(const tda::PersistenceDiagram& a, const tda::PersistenceDiagram& b) {
    int m = std::max(a.maxdim, b.maxdim);
    for (const auto& p : a.points) m = std::max(m, p.dim);
    for (const auto& p : b.points) m = std::max(m, p.dim);
    return m;
}

}  // namespace

double sq_diag_dist(const tda::DiagramPoint& p) {
    const double h = (p.death - p.birth);
    return 0.5 * h * h;
}

std::size_t matchable_points(const tda::PersistenceDiagram& d) {
    std::size_t n = 0;
    for (const auto& p : d.points) n += (p.finite() && !p.zero_persistence) ? 1 : 0;
    return n;
}

ChamferResult chamfer(const tda::PersistenceDiagram& a, const tda::PersistenceDiagram& b) {
    ChamferResult res;
    res.nn_a_to_b.assign(a.points.size(), -2);
    res.nn_b_to_a.assign(b.points.size(), -2);

    for (int dim = 0; dim <= max_dim(a, b); ++dim) {
        const Slice sa = slice_dim(a, dim);
        const Slice sb = slice_dim(b, dim);
        if (sa.idx.empty() && sb.idx.empty()) continue;

        for (std::size_t i = 0; i < sa.idx.size(); ++i) {
            if (sb.idx.empty()) {
                res.value += sq_diag_dist(sa.pt(static_cast<int>(i)));
                res.nn_a_to_b[sa.idx[i]] = -1;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            int arg = -1;
            for (std::size_t j = 0; j < sb.idx.size(); ++j) {
                const double c = sq_pt_dist(sa.pt(static_cast<int>(i)), sb.pt(static_cast<int>(j)));
                if (c < best) {
                    best = c;
                    arg = sb.idx[j];
                }
            }
            res.value += best;
            res.nn_a_to_b[sa.idx[i]] = arg;
        }
        for (std::size_t j = 0; j < sb.idx.size(); ++j) {
            if (sa.idx.empty()) {
                res.value += sq_diag_dist(sb.pt(static_cast<int>(j)));
                res.nn_b_to_a[sb.idx[j]] = -1;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            int arg = -1;
            for (std::size_t i = 0; i < sa.idx.size(); ++i) {
                const double c = sq_pt_dist(sb.pt(static_cast<int>(j)), sa.pt(static_cast<int>(i)));
                if (c < best) {
                    best = c;
                    arg = sa.idx[i];
                }
            }
            res.value += best;
            res.nn_b_to_a[sb.idx[j]] = arg;
        }
    }
    return res;
}

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost, double& cost_out) {
    const int n = static_cast<int>(cost.size());
    cost_out = 0.0;
    if (n == 0) return {};
    constexpr double inf = std::numeric_limits<double>::infinity();

    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j)
                if (!used[j]) {
                    const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> rowsol(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) rowsol[p[j] - 1] = j - 1;
    for (int i = 0; i < n; ++i) cost_out += cost[i][rowsol[i]];
    return rowsol;
}

std::pair<double, Matching> wasserstein2_exact(const tda::PersistenceDiagram& a,
                                               const tda::PersistenceDiagram& b, int max_total) {
    const std::size_t total = matchable_points(a) + matchable_points(b);
    if (static_cast<int>(total) > max_total)
        throw std::invalid_argument("diagrams too large for the exact Wasserstein solver");

    Matching match;
    double total_cost = 0.0;

    for (int dim = 0; dim <= max_dim(a, b); ++dim) {
        const Slice sa = slice_dim(a, dim);
        const Slice sb = slice_dim(b, dim);
        const int n1 = static_cast<int>(sa.idx.size());
        const int n2 = static_cast<int>(sb.idx.size());
        const int n = n1 + n2;
        if (n == 0) continue;

        // rows: points of A then diagonal slots for B;
        // cols: points of B then diagonal slots for A
        std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n1; ++i) {
            for (int j = 0; j < n2; ++j) cost[i][j] = sq_pt_dist(sa.pt(i), sb.pt(j));
            for (int j = n2; j < n; ++j) cost[i][j] = sq_diag_dist(sa.pt(i));
        }
        for (int i = n1; i < n; ++i)
            for (int j = 0; j < n2; ++j) cost[i][j] = sq_diag_dist(sb.pt(j));

        double dim_cost = 0.0;
        const std::vector<int> rowsol = solve_assignment(cost, dim_cost);
        total_cost += dim_cost;
        for (int i = 0; i < n1; ++i) {
            const int j = rowsol[i];
            match.pairs.emplace_back(sa.idx[i], j < n2 ? sb.idx[j] : -1);
        }
        for (int i = n1; i < n; ++i) {
            const int j = rowsol[i];
            if (j < n2) match.pairs.emplace_back(-1, sb.idx[j]);
        }
    }
    match.total_sq_cost = total_cost;
    return {std::sqrt(total_cost), match};
}

BoundReport bound_check(const tda::PersistenceDiagram& a, const tda::PersistenceDiagram& b) {
    BoundReport rep;
    rep.chamfer = chamfer(a, b).value;
    rep.w2 = wasserstein2_exact(a, b).first;
    rep.gap = std::sqrt(rep.chamfer) - rep.w2;
    rep.satisfied = rep.gap >= -1e-12;
    return rep;
}

}  // namespace topokd::dm
