#include "topokd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "topokd/rng.hpp"

namespace topokd::ad {

namespace {

// Right-operand fetch under the broadcast rule: equal shape, 1xC row, or 1x1.
inline double bval(const Matrix& b, int i, int j) {
    if (b.rows == 1 && b.cols == 1) return b.data[0];
    if (b.rows == 1) return b.data[j];
    return b.at(i, j);
}

inline void baccum(Matrix& gb, const Matrix& b, int i, int j, double g) {
    if (b.rows == 1 && b.cols == 1)
        gb.data[0] += g;
    else if (b.rows == 1)
        gb.data[j] += g;
    else
        gb.at(i, j) += g;
}

}  // namespace

Graph::Id Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    values_.emplace_back();
    adjoints_.emplace_back();
    evaluated_upto_ = -1;
    return static_cast<Id>(nodes_.size()) - 1;
}

void Graph::check(Id id) const {
    if (id < 0 || id >= static_cast<Id>(nodes_.size())) throw std::invalid_argument("node id out of range");
}

Graph::Id Graph::input(int rows, int cols, std::string name) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("input shape must be positive");
    Node n;
    n.op = Op::Input;
    n.rows = rows;
    n.cols = cols;
    n.name = std::move(name);
    return push(std::move(n));
}

Graph::Id Graph::constant(Matrix value) {
    Node n;
    n.op = Op::Constant;
    n.rows = value.rows;
    n.cols = value.cols;
    const Id id = push(std::move(n));
    values_[id] = std::move(value);
    return id;
}

Graph::Id Graph::param(Matrix value, std::string name) {
    Node n;
    n.op = Op::Param;
    n.rows = value.rows;
    n.cols = value.cols;
    n.name = std::move(name);
    const Id id = push(std::move(n));
    values_[id] = std::move(value);
    return id;
}

Graph::Id Graph::binary(Op op, Id a, Id b) {
    check(a);
    check(b);
    const Node& na = nodes_[a];
    const Node& nb = nodes_[b];
    const bool same = na.rows == nb.rows && na.cols == nb.cols;
    const bool row_bc = nb.rows == 1 && nb.cols == na.cols;
    const bool scalar_bc = nb.rows == 1 && nb.cols == 1;
    if (!(same || row_bc || scalar_bc))
        throw std::invalid_argument("binary op shape mismatch");
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.rows = na.rows;
    n.cols = na.cols;
    return push(std::move(n));
}

Graph::Id Graph::add(Id a, Id b) { return binary(Op::Add, a, b); }
Graph::Id Graph::sub(Id a, Id b) { return binary(Op::Sub, a, b); }
Graph::Id Graph::mul(Id a, Id b) { return binary(Op::Mul, a, b); }
Graph::Id Graph::div(Id a, Id b) { return binary(Op::Div, a, b); }

Graph::Id Graph::matmul(Id a, Id b) {
    check(a);
    check(b);
    if (nodes_[a].cols != nodes_[b].rows) throw std::invalid_argument("matmul inner dimension mismatch");
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.rows = nodes_[a].rows;
    n.cols = nodes_[b].cols;
    return push(std::move(n));
}

Graph::Id Graph::unary(Op op, Id a) {
    check(a);
    Node n;
    n.op = op;
    n.a = a;
    n.rows = nodes_[a].rows;
    n.cols = nodes_[a].cols;
    return push(std::move(n));
}

Graph::Id Graph::scale(Id a, double c) {
    const Id id = unary(Op::Scale, a);
    nodes_[id].c = c;
    return id;
}

Graph::Id Graph::abs(Id a) { return unary(Op::Abs, a); }
Graph::Id Graph::tanh(Id a) { return unary(Op::Tanh, a); }
Graph::Id Graph::relu(Id a) { return unary(Op::Relu, a); }
Graph::Id Graph::softmax(Id a) { return unary(Op::Softmax, a); }
Graph::Id Graph::log_softmax(Id a) { return unary(Op::LogSoftmax, a); }

Graph::Id Graph::reduce(Op op, Id a) {
    check(a);
    Node n;
    n.op = op;
    n.a = a;
    n.rows = 1;
    n.cols = 1;
    return push(std::move(n));
}

Graph::Id Graph::sum(Id a) { return reduce(Op::Sum, a); }
Graph::Id Graph::mean(Id a) { return reduce(Op::Mean, a); }
Graph::Id Graph::vmin(Id a) { return reduce(Op::VMin, a); }
Graph::Id Graph::vmax(Id a) { return reduce(Op::VMax, a); }

Graph::Id Graph::row_sum(Id a) {
    check(a);
    Node n;
    n.op = Op::RowSum;
    n.a = a;
    n.rows = nodes_[a].rows;
    n.cols = 1;
    return push(std::move(n));
}

Graph::Id Graph::gather_rows(Id a, std::vector<int> idx) {
    check(a);
    for (int i : idx)
        if (i < 0 || i >= nodes_[a].rows) throw std::invalid_argument("gather index out of range");
    Node n;
    n.op = Op::GatherRows;
    n.a = a;
    n.rows = static_cast<int>(idx.size());
    n.cols = nodes_[a].cols;
    n.idx = std::move(idx);
    return push(std::move(n));
}

void Graph::bind(Id input_id, Matrix value) {
    check(input_id);
    Node& n = nodes_[input_id];
    if (n.op != Op::Input) throw std::invalid_argument("bind target is not an input");
    if (value.rows != n.rows || value.cols != n.cols) throw std::invalid_argument("bind shape mismatch");
    values_[input_id] = std::move(value);
    n.bound = true;
    evaluated_upto_ = -1;
}

void Graph::set_param(Id param_id, Matrix value) {
    check(param_id);
    Node& n = nodes_[param_id];
    if (n.op != Op::Param) throw std::invalid_argument("set_param target is not a parameter");
    if (value.rows != n.rows || value.cols != n.cols) throw std::invalid_argument("param shape mismatch");
    values_[param_id] = std::move(value);
    evaluated_upto_ = -1;
}

void Graph::eval_node(int i) {
    Node& n = nodes_[i];
    Matrix& out = values_[i];
    switch (n.op) {
        case Op::Input:
            if (!n.bound) throw std::runtime_error("unbound input: " + (n.name.empty() ? std::to_string(i) : n.name));
            return;
        case Op::Constant:
        case Op::Param:
            return;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            const Matrix& a = values_[n.a];
            const Matrix& b = values_[n.b];
            out = Matrix(n.rows, n.cols);
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < n.cols; ++c) {
                    const double x = a.at(r, c), y = bval(b, r, c);
                    double v = 0;
                    switch (n.op) {
                        case Op::Add: v = x + y; break;
                        case Op::Sub: v = x - y; break;
                        case Op::Mul: v = x * y; break;
                        default: v = x / y; break;
                    }
                    out.at(r, c) = v;
                }
            return;
        }
        case Op::MatMul: {
            const Matrix& a = values_[n.a];
            const Matrix& b = values_[n.b];
            out = Matrix(n.rows, n.cols);
            for (int r = 0; r < a.rows; ++r)
                for (int k = 0; k < a.cols; ++k) {
                    const double av = a.at(r, k);
                    if (av == 0.0) continue;
                    const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols];
                    double* orow = &out.data[static_cast<std::size_t>(r) * out.cols];
                    for (int c = 0; c < b.cols; ++c) orow[c] += av * brow[c];
                }
            return;
        }
        case Op::Scale: {
            const Matrix& a = values_[n.a];
            out = a;
            for (double& v : out.data) v *= n.c;
            return;
        }
        case Op::Abs: {
            out = values_[n.a];
            for (double& v : out.data) v = std::fabs(v);
            if (track_kinks_)
                for (double v : values_[n.a].data) fold_kink(i, v > 0 ? 1 : (v < 0 ? 2 : 3));
            return;
        }
        case Op::Tanh: {
            out = values_[n.a];
            for (double& v : out.data) v = std::tanh(v);
            return;
        }
        case Op::Relu: {
            out = values_[n.a];
            for (double& v : out.data) v = v > 0 ? v : 0.0;
            if (track_kinks_)
                for (double v : values_[n.a].data) fold_kink(i, v > 0 ? 1 : (v < 0 ? 2 : 3));
            return;
        }
        case Op::Sum:
        case Op::Mean: {
            const Matrix& a = values_[n.a];
            double s = 0;
            for (double v : a.data) s += v;
            out = Matrix::scalar(n.op == Op::Mean ? s / static_cast<double>(a.size()) : s);
            return;
        }
        case Op::VMin:
        case Op::VMax: {
            const Matrix& a = values_[n.a];
            std::size_t arg = 0;
            for (std::size_t k = 1; k < a.size(); ++k) {
                if (n.op == Op::VMin ? a.data[k] < a.data[arg] : a.data[k] > a.data[arg]) arg = k;
            }
            n.idx.assign(1, static_cast<int>(arg));
            out = Matrix::scalar(a.data[arg]);
            if (track_kinks_) fold_kink(i, static_cast<int>(arg));
            return;
        }
        case Op::RowSum: {
            const Matrix& a = values_[n.a];
            out = Matrix(a.rows, 1);
            for (int r = 0; r < a.rows; ++r) {
                double s = 0;
                for (int c = 0; c < a.cols; ++c) s += a.at(r, c);
                out.at(r, 0) = s;
            }
            return;
        }
        case Op::Softmax:
        case Op::LogSoftmax: {
            const Matrix& a = values_[n.a];
            out = Matrix(a.rows, a.cols);
            for (int r = 0; r < a.rows; ++r) {
                double mx = a.at(r, 0);
                for (int c = 1; c < a.cols; ++c) mx = std::max(mx, a.at(r, c));
                double z = 0;
                for (int c = 0; c < a.cols; ++c) z += std::exp(a.at(r, c) - mx);
                const double lz = std::log(z) + mx;
                for (int c = 0; c < a.cols; ++c)
                    out.at(r, c) = n.op == Op::Softmax ? std::exp(a.at(r, c) - lz) : a.at(r, c) - lz;
            }
            return;
        }
        case Op::GatherRows: {
            const Matrix& a = values_[n.a];
            out = Matrix(n.rows, n.cols);
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < n.cols; ++c) out.at(r, c) = a.at(n.idx[r], c);
            return;
        }
    }
}

double Graph::forward(Id output) {
    check(output);
    for (int i = 0; i <= output; ++i) eval_node(i);
    evaluated_upto_ = output;
    const Matrix& v = values_[output];
    return v.is_scalar() ? v.data[0] : std::numeric_limits<double>::quiet_NaN();
}

void Graph::backprop_node(int i) {
    const Node& n = nodes_[i];
    const Matrix& g = adjoints_[i];
    if (g.size() == 0) return;
    switch (n.op) {
        case Op::Input:
        case Op::Constant:
        case Op::Param:
            return;
        case Op::Add:
        case Op::Sub: {
            Matrix& ga = adjoints_[n.a];
            Matrix& gb = adjoints_[n.b];
            const double sgn = n.op == Op::Add ? 1.0 : -1.0;
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < n.cols; ++c) {
                    ga.at(r, c) += g.at(r, c);
                    baccum(gb, values_[n.b], r, c, sgn * g.at(r, c));
                }
            return;
        }
        case Op::Mul: {
            Matrix& ga = adjoints_[n.a];
            Matrix& gb = adjoints_[n.b];
            const Matrix& a = values_[n.a];
            const Matrix& b = values_[n.b];
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < n.cols; ++c) {
                    ga.at(r, c) += g.at(r, c) * bval(b, r, c);
                    baccum(gb, b, r, c, g.at(r, c) * a.at(r, c));
                }
            return;
        }
        case Op::Div: {
            Matrix& ga = adjoints_[n.a];
            Matrix& gb = adjoints_[n.b];
            const Matrix& a = values_[n.a];
            const Matrix& b = values_[n.b];
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < n.cols; ++c) {
                    const double y = bval(b, r, c);
                    ga.at(r, c) += g.at(r, c) / y;
                    baccum(gb, b, r, c, -g.at(r, c) * a.at(r, c) / (y * y));
                }
            return;
        }
        case Op::MatMul: {
            const Matrix& a = values_[n.a];
            const Matrix& b = values_[n.b];
            Matrix& ga = adjoints_[n.a];
            Matrix& gb = adjoints_[n.b];
            // ga += g * b^T
            for (int r = 0; r < a.rows; ++r)
                for (int c = 0; c < b.cols; ++c) {
                    const double gv = g.at(r, c);
                    if (gv == 0.0) continue;
                    for (int k = 0; k < a.cols; ++k) ga.at(r, k) += gv * b.at(k, c);
                }
            // gb += a^T * g
            for (int r = 0; r < a.rows; ++r)
                for (int k = 0; k < a.cols; ++k) {
                    const double av = a.at(r, k);
                    if (av == 0.0) continue;
                    for (int c = 0; c < b.cols; ++c) gb.at(k, c) += av * g.at(r, c);
                }
            return;
        }
        case Op::Scale: {
            Matrix& ga = adjoints_[n.a];
            for (std::size_t k = 0; k < g.size(); ++k) ga.data[k] += n.c * g.data[k];
            return;
        }
        case Op::Abs: {
            Matrix& ga = adjoints_[n.a];
            const Matrix& a = values_[n.a];
            for (std::size_t k = 0; k < g.size(); ++k) {
                const double s = a.data[k] > 0 ? 1.0 : (a.data[k] < 0 ? -1.0 : 0.0);
                ga.data[k] += s * g.data[k];
            }
            return;
        }
        case Op::Tanh: {
            Matrix& ga = adjoints_[n.a];
            const Matrix& y = values_[i];
            for (std::size_t k = 0; k < g.size(); ++k) ga.data[k] += (1.0 - y.data[k] * y.data[k]) * g.data[k];
            return;
        }
        case Op::Relu: {
            Matrix& ga = adjoints_[n.a];
            const Matrix& a = values_[n.a];
            for (std::size_t k = 0; k < g.size(); ++k) ga.data[k] += (a.data[k] > 0 ? 1.0 : 0.0) * g.data[k];
            return;
        }
        case Op::Sum: {
            Matrix& ga = adjoints_[n.a];
            for (double& v : ga.data) v += g.data[0];
            return;
        }
        case Op::Mean: {
            Matrix& ga = adjoints_[n.a];
            const double f = g.data[0] / static_cast<double>(ga.size());
            for (double& v : ga.data) v += f;
            return;
        }
        case Op::VMin:
        case Op::VMax: {
            adjoints_[n.a].data[n.idx[0]] += g.data[0];
            return;
        }
        case Op::RowSum: {
            Matrix& ga = adjoints_[n.a];
            for (int r = 0; r < ga.rows; ++r)
                for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += g.at(r, 0);
            return;
        }
        case Op::Softmax: {
            Matrix& ga = adjoints_[n.a];
            const Matrix& y = values_[i];
            for (int r = 0; r < n.rows; ++r) {
                double dot = 0;
                for (int c = 0; c < n.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < n.cols; ++c) ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
            }
            return;
        }
        case Op::LogSoftmax: {
            Matrix& ga = adjoints_[n.a];
            const Matrix& y = values_[i];
            for (int r = 0; r < n.rows; ++r) {
                double gs = 0;
                for (int c = 0; c < n.cols; ++c) gs += g.at(r, c);
                for (int c = 0; c < n.cols; ++c) ga.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gs;
            }
            return;
        }
        case Op::GatherRows: {
            Matrix& ga = adjoints_[n.a];
            for (int r = 0; r < n.rows; ++r)
                for (int c = 0; c < n.cols; ++c) ga.at(n.idx[r], c) += g.at(r, c);
            return;
        }
    }
}

void Graph::backward(Id output) {
    check(output);
    if (evaluated_upto_ < output) throw std::runtime_error("backward before forward");
    if (!values_[output].is_scalar()) throw std::runtime_error("backward output must be scalar");
    for (int i = 0; i <= evaluated_upto_; ++i)
        adjoints_[i] = Matrix(nodes_[i].rows, nodes_[i].cols);
    adjoints_[output].data[0] = 1.0;
    for (int i = output; i >= 0; --i) backprop_node(i);
}

const Matrix& Graph::value(Id id) const {
    check(id);
    return values_[id];
}

const Matrix& Graph::adjoint(Id id) const {
    check(id);
    return adjoints_[id];
}

int Graph::rows(Id id) const {
    check(id);
    return nodes_[id].rows;
}

int Graph::cols(Id id) const {
    check(id);
    return nodes_[id].cols;
}

bool Graph::is_input(Id id) const {
    check(id);
    return nodes_[id].op == Op::Input;
}

bool Graph::is_param(Id id) const {
    check(id);
    return nodes_[id].op == Op::Param;
}

const std::string& Graph::name(Id id) const {
    check(id);
    return nodes_[id].name;
}

void Graph::fold_kink(int node, int code) {
    kink_hash_ ^= rng::mix(static_cast<std::uint64_t>(node) * 0x1000193ULL + static_cast<std::uint64_t>(code));
    kink_hash_ *= 0x100000001b3ULL;
}

GradientReport finite_diff_check(Graph& g, Graph::Id output, const std::vector<Graph::Id>& wrt,
                                 double h, int max_coords, std::uint64_t seed) {
    if (h <= 0) throw std::invalid_argument("finite-difference step must be > 0");
    GradientReport report;

    g.forward(output);
    g.backward(output);
    std::vector<Matrix> analytic;
    analytic.reserve(wrt.size());
    for (Graph::Id id : wrt) analytic.push_back(g.adjoint(id));

    for (std::size_t w = 0; w < wrt.size(); ++w) {
        const Graph::Id id = wrt[w];
        if (!g.is_input(id) && !g.is_param(id))
            throw std::invalid_argument("finite differences need an input or parameter node");
        const Matrix base = g.value(id);

        std::vector<std::size_t> coords(base.size());
        for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
        if (static_cast<int>(coords.size()) > max_coords) {
            std::mt19937_64 rg(rng::substream(seed, 0xfd00 + w));
            for (std::size_t k = 0; k < coords.size(); ++k)
                std::swap(coords[k], coords[k + rg() % (coords.size() - k)]);
            coords.resize(max_coords);
            std::sort(coords.begin(), coords.end());
        }

        GradientCheck check;
        check.node = id;
        check.analytic = analytic[w];
        check.finite_diff = Matrix(base.rows, base.cols,
                                   std::numeric_limits<double>::quiet_NaN());

        auto set_value = [&](const Matrix& m) {
            if (g.is_input(id))
                g.bind(id, m);
            else
                g.set_param(id, m);
        };

        for (std::size_t k : coords) {
            Matrix probe = base;
            probe.data[k] = base.data[k] + h;
            set_value(probe);
            g.track_kinks_ = true;
            g.kink_hash_ = 0xcbf29ce484222325ULL;
            const double fp = g.forward(output);
            const std::uint64_t sig_p = g.kink_hash_;

            probe.data[k] = base.data[k] - h;
            set_value(probe);
            g.kink_hash_ = 0xcbf29ce484222325ULL;
            const double fm = g.forward(output);
            const std::uint64_t sig_m = g.kink_hash_;
            g.track_kinks_ = false;

            if (sig_p != sig_m) {
                check.skipped_coords++;
                continue;
            }
            const double fd = (fp - fm) / (2.0 * h);
            check.finite_diff.data[k] = fd;
            const double a = check.analytic.data[k];
            const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-12});
            check.max_rel_error = std::max(check.max_rel_error, rel);
            check.checked_coords++;
        }

        set_value(base);
        report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
        report.checks.push_back(std::move(check));
    }
    // restore a consistent forward/backward state at the base point
    g.forward(output);
    g.backward(output);
    return report;
}

}  // namespace topokd::ad
