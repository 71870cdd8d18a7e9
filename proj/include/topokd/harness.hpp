#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "topokd/config.hpp"
#include "topokd/diagmetrics.hpp"
#include "topokd/kd.hpp"
#include "topokd/net.hpp"
#include "topokd/pointcloud.hpp"

namespace topokd::harness {

inline constexpr const char* kVersion = "0.1.0";

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OptimConfig {
    double lr = 0.05;
    int steps = 300;
};

/// Full description of a run; serialized into every report so results are
/// reproducible from the file alone.
struct RunConfig {
    std::vector<pc::SceneSpec> train_scenes;
    std::vector<pc::SceneSpec> eval_scenes;
    net::NetworkConfig teacher = net::NetworkConfig::teacher_desk(4);
    net::NetworkConfig student = net::NetworkConfig::student_desk(4);
    kd::DistillConfig distill;
    OptimConfig teacher_opt{0.05, 300};
    OptimConfig student_opt{0.05, 150};
    int num_seeds = 5;
    std::uint64_t base_seed = 1;
    bool augment = false;
    pc::AugmentConfig augment_cfg;
    int bound_sample_interval = 25;  // steps between bound-check samples (0 = off)
    std::string out_dir = "out";

    void validate() const;
    cfg::KvTree to_tree() const;
    static RunConfig from_tree(const cfg::KvTree& tree);
    static RunConfig from_file(const std::string& path);

    /// The pinned 4-class benchmark configuration used by the ablation grid.
    static RunConfig benchmark_default();
};

/// Line-delimited JSON record stream plus a summary document.
class ReportWriter {
public:
    ReportWriter() = default;  // disabled sink
    explicit ReportWriter(const std::string& out_dir);
    ~ReportWriter();
    void record(const std::string& json_line);
    void write_summary(const std::string& name, const std::string& json_doc);
    bool enabled() const { return enabled_; }
    const std::string& dir() const { return dir_; }

private:
    bool enabled_ = false;
    std::string dir_;
    void* stream_ = nullptr;  // FILE*
};

std::vector<pc::LabeledScene> instantiate_scenes(const std::vector<pc::SceneSpec>& specs,
                                                 std::uint64_t run_seed, std::uint64_t tag);

struct TeacherResult {
    net::Network model;
    double train_miou = 0.0;
    std::vector<double> loss_curve;
};

/// Plain gradient descent on the segmentation loss only.
TeacherResult train_teacher(const RunConfig& cfg, std::uint64_t run_seed, ReportWriter* log = nullptr);

struct DistillResult {
    net::Network model;
    std::vector<kd::LossBreakdown> steps;
    double train_miou = 0.0;
    std::vector<dm::BoundReport> bound_samples;
};

/// Student training on the composite objective; the teacher stays frozen.
DistillResult distill(const RunConfig& cfg, const net::Network& teacher, std::uint64_t run_seed,
                      ReportWriter* log = nullptr);

struct EvalResult {
    std::vector<double> per_scene_miou;
    double mean_miou = 0.0;
    std::vector<double> per_class_iou;  // from the confusion counts pooled over scenes
};

EvalResult evaluate(const net::Network& model, const std::vector<pc::LabeledScene>& scenes);

struct AblationRow {
    std::string name;
    bool topo_enabled = false;
    double lambda1 = 0.0;
    std::vector<double> seed_mious;
    double median_miou = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;  // kld+seg, +topo, +grad, +topo+grad
    std::vector<double> teacher_mious;
    // per-seed deltas against the kld+seg baseline, then their medians
    std::vector<double> delta_grad, delta_topo, delta_full;
    double median_delta_grad = 0.0, median_delta_topo = 0.0, median_delta_full = 0.0;
    double bound_pass_rate = 1.0;
    int bound_samples = 0;
    double wall_seconds = 0.0;
};

/// Runs the four on/off rows over shared seeds (paired comparison) and
/// aggregates per-seed differences by median.
AblationReport ablation_grid(const RunConfig& cfg, ReportWriter* log = nullptr);

double median(std::vector<double> values);

}  // namespace topokd::harness
