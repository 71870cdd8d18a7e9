#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace topokd::ad {

/// Dense row-major matrix of doubles. Scalars are 1x1.
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }

    static Matrix scalar(double v) {
        Matrix m(1, 1);
        m.data[0] = v;
        return m;
    }
    static Matrix row(const std::vector<double>& v) {
        Matrix m(1, static_cast<int>(v.size()));
        m.data = v;
        return m;
    }
};

enum class Op {
    Input,
    Constant,
    Param,
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Scale,       // x * c, compile-time constant c
    Abs,
    Tanh,
    Relu,
    Sum,         // all entries -> 1x1
    Mean,        // all entries -> 1x1
    VMin,        // min over all entries -> 1x1, ties to lowest flat index
    VMax,
    RowSum,      // NxC -> Nx1
    Softmax,     // row-wise
    LogSoftmax,  // row-wise
    GatherRows,
};

struct GradientReport;

/// Reverse-mode tape over statically-shaped matrix nodes. Nodes are appended
/// in topological order; `forward` runs the whole tape, `backward` sweeps in
/// reverse from a designated scalar output. Binary elementwise ops accept a
/// right operand of equal shape, a 1xC row (broadcast down rows), or a 1x1
/// scalar; gradients are reduced back over the broadcast dimensions.
///
/// Subgradient conventions at kinks: |.| and relu use derivative 0 at exactly
/// 0; VMin/VMax break ties toward the lowest flat index.
class Graph {
public:
    using Id = int;

    Id input(int rows, int cols, std::string name = {});
    Id constant(Matrix value);
    Id param(Matrix value, std::string name = {});

    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id div(Id a, Id b);
    Id matmul(Id a, Id b);
    Id scale(Id a, double c);
    Id abs(Id a);
    Id tanh(Id a);
    Id relu(Id a);
    Id sum(Id a);
    Id mean(Id a);
    Id vmin(Id a);
    Id vmax(Id a);
    Id row_sum(Id a);
    Id softmax(Id a);
    Id log_softmax(Id a);
    Id gather_rows(Id a, std::vector<int> idx);

    void bind(Id input_id, Matrix value);
    void set_param(Id param_id, Matrix value);

    /// Evaluates every node up to and including `output`; returns its value,
    /// which must be scalar for use with backward(). Throws on unbound inputs
    /// or if shapes were violated at bind time.
    double forward(Id output);

    /// Reverse sweep seeding d(output)/d(output) = 1. Adjoints of every node
    /// become available; requires a prior forward() covering `output`.
    void backward(Id output);

    const Matrix& value(Id id) const;
    const Matrix& adjoint(Id id) const;
    int rows(Id id) const;
    int cols(Id id) const;
    int node_count() const { return static_cast<int>(nodes_.size()); }
    bool is_input(Id id) const;
    bool is_param(Id id) const;
    const std::string& name(Id id) const;

private:
    struct Node {
        Op op;
        int a = -1, b = -1;
        int rows = 0, cols = 0;
        double c = 0.0;              // Scale factor
        std::vector<int> idx;        // GatherRows indices / VMin-VMax argument
        std::string name;
        bool bound = false;          // Input nodes
    };

    Id push(Node n);
    Id binary(Op op, Id a, Id b);
    Id unary(Op op, Id a);
    Id reduce(Op op, Id a);
    void check(Id id) const;
    void eval_node(int i);
    void backprop_node(int i);
    void fold_kink(int node, int code);

    friend GradientReport finite_diff_check(Graph&, Id, const std::vector<Id>&, double, int, std::uint64_t);

    std::vector<Node> nodes_;
    std::vector<Matrix> values_;
    std::vector<Matrix> adjoints_;
    int evaluated_upto_ = -1;

    // kink fingerprinting for the finite-difference checker
    bool track_kinks_ = false;
    std::uint64_t kink_hash_ = 0;
};

/// Analytic-vs-central-finite-difference comparison for one tensor.
struct GradientCheck {
    Graph::Id node;
    Matrix analytic;
    Matrix finite_diff;
    double max_rel_error = 0.0;       // over checkable coordinates
    int checked_coords = 0;
    int skipped_coords = 0;           // kink detected inside [x-h, x+h]
};

struct GradientReport {
    std::vector<GradientCheck> checks;
    double max_rel_error = 0.0;
};

/// Central differences on every coordinate of each `wrt` node (a seeded
/// random subset of max_coords when a tensor exceeds it). Coordinates whose
/// +-h probes land on different sides of a kink (abs/relu sign change,
/// min/max argument change) are flagged and excluded from the max. Relative
/// error is |a - f| / max(|a|, |f|, 1e-12).
GradientReport finite_diff_check(Graph& g, Graph::Id output, const std::vector<Graph::Id>& wrt,
                                 double h, int max_coords = 1000, std::uint64_t seed = 0);

}  // namespace topokd::ad
