#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "topokd/autodiff.hpp"
#include "topokd/pointcloud.hpp"

namespace topokd::net {

struct NetworkConfig {
    std::vector<int> depths;    // blocks per stage
    std::vector<int> channels;  // output channels per stage
    int k = 8;                  // neighborhood size for local aggregation
    int num_classes = 2;
    std::uint64_t seed = 0;
    bool use_intensity = false;

    void validate() const;
    int input_dim() const { return use_intensity ? 4 : 3; }
    int num_stages() const { return static_cast<int>(depths.size()); }

    // Desk-scale defaults; the student keeps the channel ratios of the
    // teacher at a quarter of the width and single-block stages.
    static NetworkConfig teacher_desk(int num_classes);
    static NetworkConfig student_desk(int num_classes);

    std::string to_text() const;
    static NetworkConfig from_text(const std::string& text);
};

/// Per-point MLP with symmetric k-nearest-neighbor mean aggregation at the
/// end of every stage, then a linear logits head. Parameters live here as
/// plain matrices; every forward builds a fresh tape bound to them.
class Network {
public:
    static Network init(const NetworkConfig& cfg);

    const NetworkConfig& config() const { return cfg_; }
    std::size_t parameter_count() const;

    const std::vector<ad::Matrix>& weights() const { return weights_; }
    const std::vector<ad::Matrix>& biases() const { return biases_; }

    void gradient_step(const std::vector<ad::Matrix>& grad_w, const std::vector<ad::Matrix>& grad_b,
                       double lr);

    void save(const std::string& path) const;
    static Network load(const std::string& path);

private:
    NetworkConfig cfg_;
    std::vector<ad::Matrix> weights_, biases_;  // blocks in declaration order, head last
};

/// One forward pass: per-stage feature nodes, logits, and the tape that can
/// run backward over them.
struct ForwardTrace {
    std::shared_ptr<ad::Graph> graph;
    std::vector<ad::Graph::Id> stage_features;  // F^l, N x channels[l]
    ad::Graph::Id logits = -1;
    std::vector<ad::Graph::Id> weight_ids, bias_ids;  // parallel to Network storage
    int n_points = 0;
    bool k_clamped = false;  // neighborhood had to shrink to N-1

    ad::Matrix feature_values(int stage) const;
    ad::Matrix logit_values() const;
};

ForwardTrace forward(const Network& net, const pc::PointCloud& cloud);

/// Mean per-point cross-entropy node appended to the trace's tape.
ad::Graph::Id task_loss(ForwardTrace& trace, const std::vector<int>& labels);

/// d(loss)/d(F^l) for every stage, via one backward sweep.
std::vector<ad::Matrix> activation_gradients(ForwardTrace& trace, ad::Graph::Id loss);

/// Gradients of a scalar node with respect to every parameter.
struct ParamGradients {
    std::vector<ad::Matrix> weights, biases;
    double norm() const;
};
ParamGradients parameter_gradients(ForwardTrace& trace, ad::Graph::Id loss);

/// Closed-form parameter count for a config (fan-in * fan-out + biases).
std::size_t expected_parameter_count(const NetworkConfig& cfg);

/// Stage pairing by relative depth position: student stage i maps to teacher
/// stage round(i * Lt / Ls), clamped to the last teacher stage (identity when
/// the stage counts match).
std::vector<int> pair_stages(int student_stages, int teacher_stages);

}  // namespace topokd::net
