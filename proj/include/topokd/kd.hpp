#pragma once

#include <cstdint>
#include <vector>

#include "topokd/autodiff.hpp"
#include "topokd/net.hpp"
#include "topokd/tda.hpp"

namespace topokd::kd {

enum class KldDirection { TeacherToStudent, StudentToTeacher };

struct DistillConfig {
    double lambda1 = 1.0;  // saliency alignment weight
    double lambda2 = 1.0;  // KLD weight
    double lambda3 = 1.0;  // segmentation weight
    double alpha = 0.25;   // topology gradient norm cap, relative to the alignment gradient
    double kld_temperature = 1.0;
    KldDirection kld_direction = KldDirection::TeacherToStudent;

    bool topo_enabled = true;
    int tda_subsample = 128;
    std::uint64_t tda_seed = 0;
    int tda_maxdim = 1;
    double tda_threshold_factor = 1.05;  // times the subsampled feature diameter
    int topo_stage = -1;                 // feature stage fed to the filtration; -1 = last
    double tie_probe_eps = 1e-9;         // critical-pair ties below this margin are zeroed

    void validate() const;
};

/// Channel importance: mean absolute task-loss gradient per channel.
std::vector<double> importance_weights(const ad::Matrix& activation_grad);

/// Column-wise feature rescale by the importance weights.
ad::Matrix scale_features(const ad::Matrix& features, const std::vector<double>& weights);

/// Per-point saliency: channel-summed absolute scaled features, min-max
/// normalized into [0,1]. A constant pre-normalization vector maps to zeros.
std::vector<double> saliency_map(const ad::Matrix& scaled_features);

/// Mean absolute saliency gap, summed over paired stages: (1/N) sum_l sum_i
/// |M_T - M_S|.
double grad_align_loss(const std::vector<std::vector<double>>& teacher_maps,
                       const std::vector<std::vector<double>>& student_maps);

/// Temperature-softened KL divergence between logit rows, averaged over
/// points and scaled by T^2.
double kld_loss(const ad::Matrix& teacher_logits, const ad::Matrix& student_logits, double temperature,
                KldDirection direction = KldDirection::TeacherToStudent);

/// Chamfer distance between the persistence diagrams of (subsampled) teacher
/// and student features, with the analytic gradient routed through each
/// matched diagram point's critical edge and scattered back to the full
/// student feature rows. The teacher diagram is a constant.
struct TopoLossResult {
    double value = 0.0;
    ad::Matrix grad_student;  // same shape as the student feature matrix
    int tie_events = 0;       // diagram points whose gradient was zeroed near a tie
    tda::PersistenceDiagram teacher_diagram, student_diagram;
    std::vector<int> subsample_indices;
};

TopoLossResult topo_loss(const ad::Matrix& teacher_features, const ad::Matrix& student_features,
                         const DistillConfig& cfg, std::uint64_t subsample_seed);

/// Same, against a precomputed teacher diagram (it only depends on the
/// teacher features and the shared subsample indices, so callers cache it).
TopoLossResult topo_loss_with_teacher(const tda::PersistenceDiagram& teacher_diagram,
                                      const ad::Matrix& student_features, const DistillConfig& cfg,
                                      std::uint64_t subsample_seed);

/// Rescales g_topo so its norm never exceeds alpha * ||g_feat||; direction is
/// preserved, and a zero g_feat yields a zero output.
ad::Matrix clamp_topo_gradient(const ad::Matrix& g_topo, const ad::Matrix& g_feat, double alpha);

struct LossBreakdown {
    double topo = 0.0;
    double grad = 0.0;
    double kld = 0.0;
    double seg = 0.0;
    double total = 0.0;

    double topo_grad_norm_raw = 0.0;  // before the clamp
    double topo_grad_norm = 0.0;      // after the clamp
    double feat_grad_norm = 0.0;      // clamp reference ||d(grad_align)/dF||
    double param_grad_norm = 0.0;
    int topo_tie_events = 0;
};

/// Everything the teacher contributes to one distillation step; constant
/// while the teacher is frozen, so it can be cached per input cloud.
struct TeacherContext {
    std::vector<std::vector<double>> saliency;  // per teacher stage
    ad::Matrix logits;
    tda::PersistenceDiagram topo_diagram;  // of the subsampled topo-stage features
    std::uint64_t subsample_seed = 0;
};

TeacherContext teacher_context(const net::Network& teacher, const pc::PointCloud& cloud,
                               const std::vector<int>& labels, const DistillConfig& cfg,
                               std::uint64_t subsample_seed);

/// Composite objective on one cloud: runs the student forward, assembles
/// topo + lambda1*grad + lambda2*kld + lambda3*seg, applies the topology
/// gradient clamp on the student backward pass, and reports both the loss
/// breakdown and the parameter gradients. topo_out, when given, receives the
/// diagrams behind the topology term.
LossBreakdown distill_loss(const net::Network& student, const TeacherContext& teacher,
                           const pc::PointCloud& cloud, const std::vector<int>& labels,
                           const DistillConfig& cfg, net::ParamGradients* param_grads = nullptr,
                           TopoLossResult* topo_out = nullptr);

}  // namespace topokd::kd
