#include "topokd/tda.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "topokd/rng.hpp"

namespace topokd::tda {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

struct DistMatrix {
    int n;
    std::vector<double> d;  // lower triangle, row-major
    double operator()(int i, int j) const {
        if (i == j) return 0.0;
        if (i < j) std::swap(i, j);
        return d[static_cast<std::size_t>(i) * (i - 1) / 2 + j];
    }
};

DistMatrix pairwise_distances(const Points& pts) {
    const int n = static_cast<int>(pts.size());
    DistMatrix m{n, {}};
    m.d.resize(static_cast<std::size_t>(n) * (n - 1) / 2);
    std::size_t at = 0;
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < i; ++j) m.d[at++] = std::sqrt(sq_dist(pts[i], pts[j]));
    return m;
}

// Longest edge of a simplex plus the margin to the runner-up edge.
void set_critical_edge(Simplex& s, const DistMatrix& d) {
    if (s.dim == 0) return;
    double best = -1.0, second = -1.0;
    int bu = -1, bv = -1;
    for (int a = 0; a <= s.dim; ++a)
        for (int b = a + 1; b <= s.dim; ++b) {
            const double len = d(s.v[a], s.v[b]);
            if (len > best) {
                second = best;
                best = len;
                bu = s.v[a];
                bv = s.v[b];
            } else if (len > second) {
                second = len;
            }
        }
    s.value = best;
    s.crit_u = bu;
    s.crit_v = bv;
    s.crit_margin = second < 0 ? kInf : best - second;
}

bool simplex_order(const Simplex& a, const Simplex& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.dim != b.dim) return a.dim < b.dim;
    return a.v < b.v;
}

std::uint64_t pack_key(const std::array<int, 4>& v) {
    std::uint64_t k = 0;
    for (int a = 0; a < 4; ++a) k = (k << 16) | static_cast<std::uint64_t>(v[a] + 1);
    return k;
}

}  // namespace

Filtration build_filtration(const Points& points, int maxdim, double threshold) {
    if (points.empty()) throw std::invalid_argument("filtration needs at least one point");
    if (threshold <= 0) throw std::invalid_argument("filtration threshold must be > 0");
    if (maxdim < 0 || maxdim > 2) throw std::invalid_argument("maxdim must be 0, 1 or 2");
    const int n = static_cast<int>(points.size());
    if (n >= 60000) throw std::invalid_argument("point set too large for this filtration builder");
    for (const auto& p : points)
        if (p.size() != points[0].size()) throw std::invalid_argument("points must share one dimension");

    const DistMatrix dist = pairwise_distances(points);
    Filtration f;
    f.maxdim = maxdim;
    f.threshold = threshold;
    f.num_points = n;

    for (int i = 0; i < n; ++i) {
        Simplex s;
        s.v[0] = i;
        s.dim = 0;
        s.value = 0.0;
        f.simplices.push_back(s);
    }

    std::vector<std::vector<int>> nbr(n);  // j > i with d(i,j) <= threshold
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (dist(i, j) <= threshold) {
                Simplex s;
                s.v[0] = i;
                s.v[1] = j;
                s.dim = 1;
                set_critical_edge(s, dist);
                f.simplices.push_back(s);
                nbr[i].push_back(j);
            }

    if (maxdim >= 1) {
        for (int i = 0; i < n; ++i)
            for (std::size_t a = 0; a < nbr[i].size(); ++a)
                for (std::size_t b = a + 1; b < nbr[i].size(); ++b) {
                    const int j = nbr[i][a], k = nbr[i][b];
                    if (dist(j, k) > threshold) continue;
                    Simplex s;
                    s.v[0] = i;
                    s.v[1] = j;
                    s.v[2] = k;
                    s.dim = 2;
                    set_critical_edge(s, dist);
                    f.simplices.push_back(s);
                    if (maxdim == 2) {
                        for (std::size_t c = b + 1; c < nbr[i].size(); ++c) {
                            const int l = nbr[i][c];
                            if (dist(j, l) > threshold || dist(k, l) > threshold) continue;
                            Simplex t;
                            t.v[0] = i;
                            t.v[1] = j;
                            t.v[2] = k;
                            t.v[3] = l;
                            t.dim = 3;
                            set_critical_edge(t, dist);
                            f.simplices.push_back(t);
                        }
                    }
                }
    }

    std::sort(f.simplices.begin(), f.simplices.end(), simplex_order);
    return f;
}

std::vector<DiagramPoint> PersistenceDiagram::in_dimension(int dim) const {
    std::vector<DiagramPoint> out;
    for (const auto& p : points)
        if (p.dim == dim) out.push_back(p);
    return out;
}

std::size_t PersistenceDiagram::finite_count() const {
    std::size_t c = 0;
    for (const auto& p : points) c += p.finite() ? 1 : 0;
    return c;
}

PersistenceDiagram reduce(const Filtration& filtration) {
    const auto& simplices = filtration.simplices;
    const int m = static_cast<int>(simplices.size());

    std::unordered_map<std::uint64_t, int> position;
    position.reserve(simplices.size() * 2);
    for (int i = 0; i < m; ++i) position.emplace(pack_key(simplices[i].v), i);

    // boundary columns as ascending row-position lists
    std::vector<std::vector<int>> cols(m);
    for (int i = 0; i < m; ++i) {
        const Simplex& s = simplices[i];
        if (s.dim == 0) continue;
        auto& col = cols[i];
        for (int drop = 0; drop <= s.dim; ++drop) {
            std::array<int, 4> face{-1, -1, -1, -1};
            int at = 0;
            for (int a = 0; a <= s.dim; ++a)
                if (a != drop) face[at++] = s.v[a];
            col.push_back(position.at(pack_key(face)));
        }
        std::sort(col.begin(), col.end());
    }

    std::vector<int> pivot_col(m, -1);  // pivot row -> column holding it
    std::vector<int> paired_with(m, -1);
    std::vector<int> merged;

    for (int j = 0; j < m; ++j) {
        auto& col = cols[j];
        while (!col.empty()) {
            const int low = col.back();
            const int other = pivot_col[low];
            if (other < 0) break;
            // col ^= cols[other]
            merged.clear();
            const auto& oc = cols[other];
            std::size_t a = 0, b = 0;
            while (a < col.size() && b < oc.size()) {
                if (col[a] == oc[b]) {
                    ++a;
                    ++b;
                } else if (col[a] < oc[b]) {
                    merged.push_back(col[a++]);
                } else {
                    merged.push_back(oc[b++]);
                }
            }
            while (a < col.size()) merged.push_back(col[a++]);
            while (b < oc.size()) merged.push_back(oc[b++]);
            col.swap(merged);
        }
        if (!col.empty()) {
            const int low = col.back();
            pivot_col[low] = j;
            paired_with[low] = j;
            paired_with[j] = -2;  // destroyer, never a creator
        }
    }

    PersistenceDiagram diagram;
    diagram.maxdim = filtration.maxdim;
    for (int i = 0; i < m; ++i) {
        if (paired_with[i] == -2) continue;  // destroyer column
        const Simplex& birth = simplices[i];
        if (birth.dim > filtration.maxdim) continue;
        DiagramPoint p;
        p.dim = birth.dim;
        p.birth = birth.value;
        p.birth_simplex = birth.v;
        p.birth_crit_u = birth.crit_u;
        p.birth_crit_v = birth.crit_v;
        p.birth_crit_margin = birth.crit_margin;
        if (paired_with[i] >= 0) {
            const Simplex& death = simplices[paired_with[i]];
            p.death = death.value;
            p.death_simplex = death.v;
            p.death_crit_u = death.crit_u;
            p.death_crit_v = death.crit_v;
            p.death_crit_margin = death.crit_margin;
            p.zero_persistence = p.death == p.birth;
        }
        diagram.points.push_back(p);
    }
    return diagram;
}

namespace {

struct UnionFind {
    std::vector<int> parent, rank_, min_vertex;
    explicit UnionFind(int n) : parent(n), rank_(n, 0), min_vertex(n) {
        for (int i = 0; i < n; ++i) parent[i] = min_vertex[i] = i;
    }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    // returns false if already joined
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent[b] = a;
        if (rank_[a] == rank_[b]) rank_[a]++;
        min_vertex[a] = std::min(min_vertex[a], min_vertex[b]);
        return true;
    }
};

}  // namespace

PersistenceDiagram h0_unionfind(const Points& points, double threshold) {
    if (points.empty()) throw std::invalid_argument("h0_unionfind needs at least one point");
    if (threshold <= 0) throw std::invalid_argument("threshold must be > 0");
    const int n = static_cast<int>(points.size());
    const DistMatrix dist = pairwise_distances(points);

    struct Edge {
        double len;
        int i, j;
    };
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (dist(i, j) <= threshold) edges.push_back({dist(i, j), i, j});
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.len != b.len) return a.len < b.len;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });

    PersistenceDiagram diagram;
    diagram.maxdim = 0;
    UnionFind uf(n);
    for (const Edge& e : edges) {
        const int ra = uf.find(e.i), rb = uf.find(e.j);
        if (ra == rb) continue;
        // the younger component (larger creator vertex) dies
        const int dying = std::max(uf.min_vertex[ra], uf.min_vertex[rb]);
        uf.unite(ra, rb);
        DiagramPoint p;
        p.dim = 0;
        p.birth = 0.0;
        p.death = e.len;
        p.birth_simplex[0] = dying;
        p.death_simplex = {std::min(e.i, e.j), std::max(e.i, e.j), -1, -1};
        p.death_crit_u = std::min(e.i, e.j);
        p.death_crit_v = std::max(e.i, e.j);
        p.zero_persistence = e.len == 0.0;
        diagram.points.push_back(p);
    }
    for (int i = 0; i < n; ++i)
        if (uf.find(i) == i) {
            DiagramPoint p;
            p.dim = 0;
            p.birth = 0.0;
            p.birth_simplex[0] = uf.min_vertex[i];
            diagram.points.push_back(p);
        }
    return diagram;
}

SnapshotProfile snapshot_betti(const Points& points, const std::vector<double>& scales, int maxdim) {
    if (scales.empty()) throw std::invalid_argument("snapshot needs at least one scale");
    for (std::size_t s = 1; s < scales.size(); ++s)
        if (scales[s] <= scales[s - 1]) throw std::invalid_argument("scales must be strictly increasing");
    if (scales.front() <= 0) throw std::invalid_argument("scales must be positive");

    const PersistenceDiagram diagram = reduce(build_filtration(points, maxdim, scales.back()));
    SnapshotProfile prof;
    prof.scales = scales;
    prof.betti.assign(scales.size(), std::vector<int>(maxdim + 1, 0));
    for (std::size_t s = 0; s < scales.size(); ++s) {
        const double eps = scales[s];
        for (const auto& p : diagram.points)
            if (p.birth <= eps && p.death > eps) prof.betti[s][p.dim]++;
    }
    return prof;
}

Subsample subsample_for_tda(const Points& features, int m, std::uint64_t seed) {
    const int n = static_cast<int>(features.size());
    if (m > n) throw std::invalid_argument("subsample size exceeds point count");
    if (m < 1) throw std::invalid_argument("subsample size must be >= 1");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 g(rng::substream(seed, 0x7da5ULL));
    for (int i = 0; i < m; ++i) std::swap(idx[i], idx[i + static_cast<int>(g() % (n - i))]);
    idx.resize(m);
    std::sort(idx.begin(), idx.end());

    Subsample out;
    out.indices = idx;
    out.points.reserve(m);
    for (int i : idx) out.points.push_back(features[i]);
    return out;
}

double diameter(const Points& points) {
    double best = 0;
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j)
            best = std::max(best, std::sqrt(sq_dist(points[i], points[j])));
    return best;
}

namespace {

std::string simplex_text(const std::array<int, 4>& v) {
    if (v[0] < 0) return "-";
    std::string s;
    for (int a = 0; a < 4 && v[a] >= 0; ++a) {
        if (a) s += ',';
        s += std::to_string(v[a]);
    }
    return s;
}

std::array<int, 4> simplex_from_text(const std::string& s) {
    std::array<int, 4> v{-1, -1, -1, -1};
    if (s == "-") return v;
    std::stringstream ss(s);
    std::string part;
    int at = 0;
    while (std::getline(ss, part, ',') && at < 4) v[at++] = std::stoi(part);
    return v;
}

}  // namespace

std::string to_text(const PersistenceDiagram& d) {
    std::string out;
    char buf[128];
    for (const auto& p : d.points) {
        if (p.finite())
            std::snprintf(buf, sizeof buf, "%d %.17g %.17g", p.dim, p.birth, p.death);
        else
            std::snprintf(buf, sizeof buf, "%d %.17g inf", p.dim, p.birth);
        out += buf;
        out += ' ';
        out += simplex_text(p.birth_simplex);
        out += ' ';
        out += simplex_text(p.death_simplex);
        out += '\n';
    }
    return out;
}

PersistenceDiagram diagram_from_text(const std::string& text) {
    PersistenceDiagram d;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ls(line);
        DiagramPoint p;
        std::string death, bs, ds;
        if (!(ls >> p.dim >> p.birth >> death)) throw std::invalid_argument("bad diagram line: " + line);
        p.death = death == "inf" ? kInf : std::stod(death);
        if (ls >> bs) p.birth_simplex = simplex_from_text(bs);
        if (ls >> ds) p.death_simplex = simplex_from_text(ds);
        p.zero_persistence = p.finite() && p.birth == p.death;
        d.maxdim = std::max(d.maxdim, p.dim);
        d.points.push_back(p);
    }
    return d;
}

}  // namespace topokd::tda
