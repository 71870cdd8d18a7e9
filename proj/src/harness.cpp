#include "topokd/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "topokd/rng.hpp"

namespace topokd::harness {

using nlohmann::json;

void RunConfig::validate() const {
    if (train_scenes.empty()) throw cfg::ConfigError("run needs at least one training scene");
    for (const auto& s : train_scenes) s.validate();
    for (const auto& s : eval_scenes) s.validate();
    teacher.validate();
    student.validate();
    distill.validate();
    augment_cfg.validate();
    if (teacher.num_classes != student.num_classes)
        throw cfg::ConfigError("teacher and student class counts differ");
    for (const auto& s : train_scenes)
        if (s.num_classes != teacher.num_classes)
            throw cfg::ConfigError("scene class count does not match the networks");
    if (teacher_opt.lr <= 0 || student_opt.lr <= 0) throw cfg::ConfigError("learning rate must be > 0");
    if (teacher_opt.steps < 0 || student_opt.steps < 0) throw cfg::ConfigError("step counts must be >= 0");
    if (num_seeds < 1) throw cfg::ConfigError("num_seeds must be >= 1");
    if (bound_sample_interval < 0) throw cfg::ConfigError("bound_sample_interval must be >= 0");
}

namespace {

void scene_to_tree(cfg::KvTree& t, const std::string& prefix, const pc::SceneSpec& s) {
    t.set(prefix + ".shape", pc::to_string(s.shape));
    t.set_int(prefix + ".classes", s.num_classes);
    t.set_u64(prefix + ".seed", s.seed);
    t.set_int(prefix + ".points", s.num_points);
    t.set_double(prefix + ".noise", s.noise_sigma);
    t.set_bool(prefix + ".intensity", s.with_intensity);
    t.set_int(prefix + ".cluster_count", s.cluster_count);
    t.set_double(prefix + ".cluster_separation", s.cluster_separation);
    t.set_double(prefix + ".cluster_radius", s.cluster_radius);
    t.set_double(prefix + ".radius", s.radius);
    t.set_double(prefix + ".tube_width", s.tube_width);
    t.set_double(prefix + ".plane_extent", s.plane_extent);
    t.set_int(prefix + ".object_count", s.object_count);
    t.set_double(prefix + ".object_radius", s.object_radius);
    t.set_double(prefix + ".object_height", s.object_height);
}

pc::SceneSpec scene_from_tree(const cfg::KvTree& t, const std::string& prefix) {
    pc::SceneSpec s;
    s.shape = pc::scene_shape_from_string(t.get_str(prefix + ".shape", "clusters"));
    s.num_classes = t.get_int(prefix + ".classes", s.num_classes);
    s.seed = t.get_u64(prefix + ".seed", s.seed);
    s.num_points = t.get_int(prefix + ".points", s.num_points);
    s.noise_sigma = t.get_double(prefix + ".noise", s.noise_sigma);
    s.with_intensity = t.get_bool(prefix + ".intensity", s.with_intensity);
    s.cluster_count = t.get_int(prefix + ".cluster_count", s.cluster_count);
    s.cluster_separation = t.get_double(prefix + ".cluster_separation", s.cluster_separation);
    s.cluster_radius = t.get_double(prefix + ".cluster_radius", s.cluster_radius);
    s.radius = t.get_double(prefix + ".radius", s.radius);
    s.tube_width = t.get_double(prefix + ".tube_width", s.tube_width);
    s.plane_extent = t.get_double(prefix + ".plane_extent", s.plane_extent);
    s.object_count = t.get_int(prefix + ".object_count", s.object_count);
    s.object_radius = t.get_double(prefix + ".object_radius", s.object_radius);
    s.object_height = t.get_double(prefix + ".object_height", s.object_height);
    return s;
}

void net_to_tree(cfg::KvTree& t, const std::string& prefix, const net::NetworkConfig& c) {
    t.set_ints(prefix + ".depths", c.depths);
    t.set_ints(prefix + ".channels", c.channels);
    t.set_int(prefix + ".k", c.k);
    t.set_bool(prefix + ".use_intensity", c.use_intensity);
}

net::NetworkConfig net_from_tree(const cfg::KvTree& t, const std::string& prefix,
                                 const net::NetworkConfig& base) {
    net::NetworkConfig c = base;
    c.depths = t.get_ints(prefix + ".depths", c.depths);
    c.channels = t.get_ints(prefix + ".channels", c.channels);
    c.k = t.get_int(prefix + ".k", c.k);
    c.use_intensity = t.get_bool(prefix + ".use_intensity", c.use_intensity);
    return c;
}

int count_scenes(const cfg::KvTree& t, const std::string& prefix) {
    int n = 0;
    while (t.has(prefix + "." + std::to_string(n) + ".shape")) ++n;
    return n;
}

}  // namespace

cfg::KvTree RunConfig::to_tree() const {
    cfg::KvTree t;
    for (std::size_t i = 0; i < train_scenes.size(); ++i)
        scene_to_tree(t, "scenes.train." + std::to_string(i), train_scenes[i]);
    for (std::size_t i = 0; i < eval_scenes.size(); ++i)
        scene_to_tree(t, "scenes.eval." + std::to_string(i), eval_scenes[i]);
    net_to_tree(t, "teacher", teacher);
    net_to_tree(t, "student", student);
    t.set_int("classes", teacher.num_classes);
    t.set_double("distill.lambda1", distill.lambda1);
    t.set_double("distill.lambda2", distill.lambda2);
    t.set_double("distill.lambda3", distill.lambda3);
    t.set_double("distill.alpha", distill.alpha);
    t.set_double("distill.temperature", distill.kld_temperature);
    t.set("distill.kld_direction",
          distill.kld_direction == kd::KldDirection::TeacherToStudent ? "teacher-to-student"
                                                                      : "student-to-teacher");
    t.set_bool("distill.topo_enabled", distill.topo_enabled);
    t.set_int("distill.tda_subsample", distill.tda_subsample);
    t.set_int("distill.tda_maxdim", distill.tda_maxdim);
    t.set_double("distill.tda_threshold_factor", distill.tda_threshold_factor);
    t.set_int("distill.topo_stage", distill.topo_stage);
    t.set_double("opt.teacher.lr", teacher_opt.lr);
    t.set_int("opt.teacher.steps", teacher_opt.steps);
    t.set_double("opt.student.lr", student_opt.lr);
    t.set_int("opt.student.steps", student_opt.steps);
    t.set_int("seeds", num_seeds);
    t.set_u64("base_seed", base_seed);
    t.set_bool("augment.enabled", augment);
    t.set_double("augment.rotation_deg", augment_cfg.rotation_deg);
    t.set_double("augment.rotation_prob", augment_cfg.rotation_prob);
    t.set_double("augment.scale_min", augment_cfg.scale_min);
    t.set_double("augment.scale_max", augment_cfg.scale_max);
    t.set_double("augment.flip_prob", augment_cfg.flip_prob);
    t.set_double("augment.jitter_sigma", augment_cfg.jitter_sigma);
    t.set_double("augment.jitter_clip", augment_cfg.jitter_clip);
    t.set_int("bound_sample_interval", bound_sample_interval);
    t.set("out_dir", out_dir);
    return t;
}

RunConfig RunConfig::from_tree(const cfg::KvTree& t) {
    RunConfig c;
    const int classes = t.get_int("classes", 4);
    c.teacher = net_from_tree(t, "teacher", net::NetworkConfig::teacher_desk(classes));
    c.student = net_from_tree(t, "student", net::NetworkConfig::student_desk(classes));
    c.teacher.num_classes = c.student.num_classes = classes;

    c.train_scenes.clear();
    for (int i = 0; i < count_scenes(t, "scenes.train"); ++i)
        c.train_scenes.push_back(scene_from_tree(t, "scenes.train." + std::to_string(i)));
    c.eval_scenes.clear();
    for (int i = 0; i < count_scenes(t, "scenes.eval"); ++i)
        c.eval_scenes.push_back(scene_from_tree(t, "scenes.eval." + std::to_string(i)));

    c.distill.lambda1 = t.get_double("distill.lambda1", c.distill.lambda1);
    c.distill.lambda2 = t.get_double("distill.lambda2", c.distill.lambda2);
    c.distill.lambda3 = t.get_double("distill.lambda3", c.distill.lambda3);
    c.distill.alpha = t.get_double("distill.alpha", c.distill.alpha);
    c.distill.kld_temperature = t.get_double("distill.temperature", c.distill.kld_temperature);
    const std::string dir = t.get_str("distill.kld_direction", "teacher-to-student");
    if (dir == "teacher-to-student") c.distill.kld_direction = kd::KldDirection::TeacherToStudent;
    else if (dir == "student-to-teacher") c.distill.kld_direction = kd::KldDirection::StudentToTeacher;
    else throw cfg::ConfigError("unknown kld_direction: " + dir);
    c.distill.topo_enabled = t.get_bool("distill.topo_enabled", c.distill.topo_enabled);
    c.distill.tda_subsample = t.get_int("distill.tda_subsample", c.distill.tda_subsample);
    c.distill.tda_maxdim = t.get_int("distill.tda_maxdim", c.distill.tda_maxdim);
    c.distill.tda_threshold_factor =
        t.get_double("distill.tda_threshold_factor", c.distill.tda_threshold_factor);
    c.distill.topo_stage = t.get_int("distill.topo_stage", c.distill.topo_stage);

    c.teacher_opt.lr = t.get_double("opt.teacher.lr", c.teacher_opt.lr);
    c.teacher_opt.steps = t.get_int("opt.teacher.steps", c.teacher_opt.steps);
    c.student_opt.lr = t.get_double("opt.student.lr", c.student_opt.lr);
    c.student_opt.steps = t.get_int("opt.student.steps", c.student_opt.steps);
    c.num_seeds = t.get_int("seeds", c.num_seeds);
    c.base_seed = t.get_u64("base_seed", c.base_seed);
    c.augment = t.get_bool("augment.enabled", c.augment);
    c.augment_cfg.rotation_deg = t.get_double("augment.rotation_deg", c.augment_cfg.rotation_deg);
    c.augment_cfg.rotation_prob = t.get_double("augment.rotation_prob", c.augment_cfg.rotation_prob);
    c.augment_cfg.scale_min = t.get_double("augment.scale_min", c.augment_cfg.scale_min);
    c.augment_cfg.scale_max = t.get_double("augment.scale_max", c.augment_cfg.scale_max);
    c.augment_cfg.flip_prob = t.get_double("augment.flip_prob", c.augment_cfg.flip_prob);
    c.augment_cfg.jitter_sigma = t.get_double("augment.jitter_sigma", c.augment_cfg.jitter_sigma);
    c.augment_cfg.jitter_clip = t.get_double("augment.jitter_clip", c.augment_cfg.jitter_clip);
    c.bound_sample_interval = t.get_int("bound_sample_interval", c.bound_sample_interval);
    c.out_dir = t.get_str("out_dir", c.out_dir);
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_tree(cfg::KvTree::parse_file(path));
}

ReportWriter::ReportWriter(const std::string& out_dir) : enabled_(true), dir_(out_dir) {
    std::filesystem::create_directories(out_dir);
    stream_ = std::fopen((out_dir + "/records.jsonl").c_str(), "a");
    if (stream_ == nullptr) throw std::runtime_error("cannot open report stream in " + out_dir);
}

ReportWriter::~ReportWriter() {
    if (stream_ != nullptr) std::fclose(static_cast<FILE*>(stream_));
}

void ReportWriter::record(const std::string& json_line) {
    if (!enabled_) return;
    std::fputs(json_line.c_str(), static_cast<FILE*>(stream_));
    std::fputc('\n', static_cast<FILE*>(stream_));
    std::fflush(static_cast<FILE*>(stream_));
}

void ReportWriter::write_summary(const std::string& name, const std::string& json_doc) {
    if (!enabled_) return;
    std::ofstream f(dir_ + "/" + name);
    f << json_doc << "\n";
}

std::vector<pc::LabeledScene> instantiate_scenes(const std::vector<pc::SceneSpec>& specs,
                                                 std::uint64_t run_seed, std::uint64_t tag) {
    std::vector<pc::LabeledScene> out;
    out.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        pc::SceneSpec s = specs[i];
        s.seed = rng::substream(run_seed, rng::mix(tag) + 7919 * i + s.seed);
        out.push_back(pc::generate_scene(s));
    }
    return out;
}

namespace {

void check_finite(double loss, int step, const char* who) {
    if (!std::isfinite(loss))
        throw DivergenceError(std::string(who) + " loss became non-finite at step " +
                              std::to_string(step) + " (value " + std::to_string(loss) + ")");
}

json breakdown_json(const kd::LossBreakdown& b) {
    return json{{"topo", b.topo},
                {"grad", b.grad},
                {"kld", b.kld},
                {"seg", b.seg},
                {"total", b.total},
                {"topo_grad_norm_raw", b.topo_grad_norm_raw},
                {"topo_grad_norm", b.topo_grad_norm},
                {"feat_grad_norm", b.feat_grad_norm},
                {"param_grad_norm", b.param_grad_norm},
                {"tie_events", b.topo_tie_events}};
}

}  // namespace

TeacherResult train_teacher(const RunConfig& cfg, std::uint64_t run_seed, ReportWriter* log) {
    cfg.validate();
    const std::vector<pc::LabeledScene> scenes = instantiate_scenes(cfg.train_scenes, run_seed, 0x7261);

    net::NetworkConfig tc = cfg.teacher;
    tc.seed = rng::substream(run_seed, 0x7e4c);
    TeacherResult res{net::Network::init(tc), 0.0, {}};

    for (int step = 0; step < cfg.teacher_opt.steps; ++step) {
        const pc::LabeledScene& scene = scenes[step % scenes.size()];
        pc::PointCloud cloud = scene.cloud;
        if (cfg.augment) cloud = pc::augment(cloud, cfg.augment_cfg, rng::substream(run_seed, 0xa7 + step));
        net::ForwardTrace trace = net::forward(res.model, cloud);
        const ad::Graph::Id loss = net::task_loss(trace, cloud.labels);
        const double value = trace.graph->forward(loss);
        check_finite(value, step, "teacher");
        const net::ParamGradients grads = net::parameter_gradients(trace, loss);
        res.model.gradient_step(grads.weights, grads.biases, cfg.teacher_opt.lr);
        res.loss_curve.push_back(value);
        if (log != nullptr && step % 10 == 0)
            log->record(json{{"type", "teacher_step"}, {"seed", run_seed}, {"step", step}, {"seg", value}}.dump());
    }

    res.train_miou = evaluate(res.model, scenes).mean_miou;
    if (log != nullptr)
        log->record(json{{"type", "teacher_done"}, {"seed", run_seed}, {"train_miou", res.train_miou}}.dump());
    return res;
}

DistillResult distill(const RunConfig& cfg, const net::Network& teacher, std::uint64_t run_seed,
                      ReportWriter* log) {
    cfg.validate();
    const std::vector<pc::LabeledScene> scenes = instantiate_scenes(cfg.train_scenes, run_seed, 0x7261);

    net::NetworkConfig sc = cfg.student;
    sc.seed = rng::substream(run_seed, 0x57d1);
    DistillResult res{net::Network::init(sc), {}, 0.0, {}};

    // teacher context per scene; constant while the teacher is frozen
    std::vector<kd::TeacherContext> ctx_cache(scenes.size());
    std::vector<char> cached(scenes.size(), 0);

    for (int step = 0; step < cfg.student_opt.steps; ++step) {
        const std::size_t si = step % scenes.size();
        pc::PointCloud cloud = scenes[si].cloud;
        const std::uint64_t sub_seed = rng::substream(run_seed, 0x7d00 + si);

        const kd::TeacherContext* ctx = nullptr;
        kd::TeacherContext fresh;
        if (cfg.augment) {
            cloud = pc::augment(cloud, cfg.augment_cfg, rng::substream(run_seed, 0xd7 + step));
            fresh = kd::teacher_context(teacher, cloud, cloud.labels, cfg.distill, sub_seed);
            ctx = &fresh;
        } else {
            if (!cached[si]) {
                ctx_cache[si] = kd::teacher_context(teacher, cloud, cloud.labels, cfg.distill, sub_seed);
                cached[si] = 1;
            }
            ctx = &ctx_cache[si];
        }

        net::ParamGradients grads;
        kd::TopoLossResult topo;
        const bool sample_bound = cfg.distill.topo_enabled && cfg.bound_sample_interval > 0 &&
                                  step % cfg.bound_sample_interval == 0;
        const kd::LossBreakdown b = kd::distill_loss(res.model, *ctx, cloud, cloud.labels, cfg.distill,
                                                     &grads, sample_bound ? &topo : nullptr);
        check_finite(b.total, step, "student");
        res.model.gradient_step(grads.weights, grads.biases, cfg.student_opt.lr);
        res.steps.push_back(b);

        if (sample_bound &&
            dm::matchable_points(ctx->topo_diagram) + dm::matchable_points(topo.student_diagram) <= 64) {
            const dm::BoundReport rep = dm::bound_check(ctx->topo_diagram, topo.student_diagram);
            res.bound_samples.push_back(rep);
            if (log != nullptr)
                log->record(json{{"type", "bound_check"},
                                 {"seed", run_seed},
                                 {"step", step},
                                 {"chamfer", rep.chamfer},
                                 {"w2", rep.w2},
                                 {"satisfied", rep.satisfied},
                                 {"gap", rep.gap}}
                                .dump());
        }
        if (log != nullptr) {
            json rec = breakdown_json(b);
            rec["type"] = "distill_step";
            rec["seed"] = run_seed;
            rec["step"] = step;
            log->record(rec.dump());
        }
    }

    res.train_miou = evaluate(res.model, scenes).mean_miou;
    return res;
}

EvalResult evaluate(const net::Network& model, const std::vector<pc::LabeledScene>& scenes) {
    EvalResult res;
    const int k = model.config().num_classes;
    std::vector<std::int64_t> inter(k, 0), pred_n(k, 0), gt_n(k, 0);
    for (const auto& scene : scenes) {
        if (!scene.cloud.has_labels()) throw std::invalid_argument("evaluation scene has no labels");
        const net::ForwardTrace trace = net::forward(model, scene.cloud);
        const ad::Matrix logits = trace.logit_values();
        std::vector<int> pred(scene.cloud.size());
        for (int i = 0; i < logits.rows; ++i) {
            int arg = 0;
            for (int c = 1; c < logits.cols; ++c)
                if (logits.at(i, c) > logits.at(i, arg)) arg = c;
            pred[i] = arg;
            pred_n[arg]++;
            gt_n[scene.cloud.labels[i]]++;
            if (arg == scene.cloud.labels[i]) inter[arg]++;
        }
        res.per_scene_miou.push_back(pc::miou(pred, scene.cloud.labels, k));
    }
    double acc = 0;
    for (double v : res.per_scene_miou) acc += v;
    res.mean_miou = res.per_scene_miou.empty() ? 0.0 : acc / res.per_scene_miou.size();
    res.per_class_iou.assign(k, 0.0);
    for (int c = 0; c < k; ++c) {
        const std::int64_t uni = pred_n[c] + gt_n[c] - inter[c];
        res.per_class_iou[c] = uni > 0 ? static_cast<double>(inter[c]) / uni : 0.0;
    }
    return res;
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

AblationReport ablation_grid(const RunConfig& cfg, ReportWriter* log) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    AblationReport report;
    report.rows = {
        {"kld+seg", false, 0.0, {}, 0.0},
        {"+topo", true, 0.0, {}, 0.0},
        {"+grad", false, cfg.distill.lambda1, {}, 0.0},
        {"+topo+grad", true, cfg.distill.lambda1, {}, 0.0},
    };

    int bound_pass = 0, bound_total = 0;
    for (int s = 0; s < cfg.num_seeds; ++s) {
        const std::uint64_t run_seed = rng::substream(cfg.base_seed, 1 + s);
        const TeacherResult teacher = train_teacher(cfg, run_seed, log);
        report.teacher_mious.push_back(teacher.train_miou);
        const std::vector<pc::LabeledScene> eval_scenes =
            instantiate_scenes(cfg.eval_scenes.empty() ? cfg.train_scenes : cfg.eval_scenes, run_seed, 0xe7a1);

        for (auto& row : report.rows) {
            RunConfig rc = cfg;
            rc.distill.topo_enabled = row.topo_enabled;
            rc.distill.lambda1 = row.lambda1;
            const DistillResult student = distill(rc, teacher.model, run_seed, log);
            const double m = evaluate(student.model, eval_scenes).mean_miou;
            row.seed_mious.push_back(m);
            for (const auto& b : student.bound_samples) {
                bound_total++;
                bound_pass += b.satisfied ? 1 : 0;
            }
            if (log != nullptr)
                log->record(json{{"type", "ablation_cell"},
                                 {"row", row.name},
                                 {"seed_index", s},
                                 {"eval_miou", m},
                                 {"train_miou", student.train_miou}}
                                .dump());
        }
    }

    for (auto& row : report.rows) row.median_miou = median(row.seed_mious);
    for (int s = 0; s < cfg.num_seeds; ++s) {
        const double base = report.rows[0].seed_mious[s];
        report.delta_topo.push_back(report.rows[1].seed_mious[s] - base);
        report.delta_grad.push_back(report.rows[2].seed_mious[s] - base);
        report.delta_full.push_back(report.rows[3].seed_mious[s] - base);
    }
    report.median_delta_topo = median(report.delta_topo);
    report.median_delta_grad = median(report.delta_grad);
    report.median_delta_full = median(report.delta_full);
    report.bound_samples = bound_total;
    report.bound_pass_rate = bound_total > 0 ? static_cast<double>(bound_pass) / bound_total : 1.0;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (log != nullptr) {
        json rows = json::array();
        for (const auto& row : report.rows)
            rows.push_back({{"name", row.name},
                            {"topo", row.topo_enabled},
                            {"lambda1", row.lambda1},
                            {"seed_mious", row.seed_mious},
                            {"median_miou", row.median_miou}});
        const json summary{{"version", kVersion},
                           {"config", cfg.to_tree().to_text()},
                           {"rows", rows},
                           {"teacher_mious", report.teacher_mious},
                           {"median_delta_grad", report.median_delta_grad},
                           {"median_delta_topo", report.median_delta_topo},
                           {"median_delta_full", report.median_delta_full},
                           {"bound_pass_rate", report.bound_pass_rate},
                           {"bound_samples", report.bound_samples},
                           {"wall_seconds", report.wall_seconds}};
        log->write_summary("ablation_summary.json", summary.dump(2));
    }
    return report;
}

RunConfig RunConfig::benchmark_default() {
    RunConfig c;
    const int classes = 4;
    c.teacher = net::NetworkConfig::teacher_desk(classes);
    c.student = net::NetworkConfig::student_desk(classes);

    pc::SceneSpec family;
    family.shape = pc::SceneShape::PlanesObjects;
    family.num_classes = classes;
    family.num_points = 160;
    family.noise_sigma = 0.05;
    family.object_count = 3;
    family.object_radius = 0.3;
    family.object_height = 1.2;
    family.plane_extent = 4.0;
    for (int i = 0; i < 3; ++i) {
        pc::SceneSpec s = family;
        s.seed = 100 + i;
        c.train_scenes.push_back(s);
    }
    for (int i = 0; i < 4; ++i) {
        pc::SceneSpec s = family;
        s.seed = 900 + i;
        c.eval_scenes.push_back(s);
    }

    c.teacher_opt = {0.25, 400};
    c.student_opt = {0.25, 160};
    c.distill.lambda1 = 1.0;
    c.distill.lambda2 = 1.0;
    c.distill.lambda3 = 1.0;
    c.distill.tda_subsample = 24;  // keeps the bound-check solver applicable
    c.distill.tda_maxdim = 1;
    c.num_seeds = 5;
    c.base_seed = 1;
    c.bound_sample_interval = 40;
    return c;
}

}  // namespace topokd::harness
