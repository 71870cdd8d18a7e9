// topokd command-line interface: scene generation, training, distillation,
// ablation sweeps, evaluation, diagram tools and report rendering.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "topokd/diagmetrics.hpp"
#include "topokd/harness.hpp"
#include "topokd/io.hpp"
#include "topokd/rng.hpp"
#include "topokd/tda.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace topokd;

namespace {

harness::RunConfig load_config(const std::string& path, std::uint64_t seed_override, bool has_seed,
                               const std::string& out_override) {
    harness::RunConfig cfg =
        path.empty() ? harness::RunConfig::benchmark_default() : harness::RunConfig::from_file(path);
    if (has_seed) cfg.base_seed = seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

std::vector<pc::LabeledScene> load_scene_dir(const std::string& path) {
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::directory_iterator(path)) {
            const std::string ext = e.path().extension().string();
            if (ext == ".txt" || ext == ".bin") files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) throw cfg::ConfigError("no .txt or .bin point clouds under " + path);
    std::vector<pc::LabeledScene> scenes;
    for (const auto& f : files) {
        pc::LabeledScene s;
        s.cloud = f.size() > 4 && f.substr(f.size() - 4) == ".bin" ? io::load_cloud_binary(f)
                                                                   : io::load_cloud_text(f);
        scenes.push_back(std::move(s));
    }
    return scenes;
}

int cmd_gen(const harness::RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    json meta;
    auto dump_set = [&](const std::vector<pc::SceneSpec>& specs, std::uint64_t tag, const char* stem) {
        const auto scenes = harness::instantiate_scenes(specs, cfg.base_seed, tag);
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "%s_%03zu", stem, i);
            io::save_cloud_text(scenes[i].cloud, cfg.out_dir + "/" + name + ".txt");
            io::save_cloud_binary(scenes[i].cloud, cfg.out_dir + "/" + name + ".bin");
            meta[name] = {{"points", scenes[i].cloud.size()},
                          {"classes", scenes[i].cloud.num_classes},
                          {"topology",
                           {{"scale", scenes[i].topology.scale},
                            {"betti0", scenes[i].topology.betti0},
                            {"betti1", scenes[i].topology.betti1},
                            {"class_components", scenes[i].topology.class_components}}}};
        }
    };
    dump_set(cfg.train_scenes, 0x7261, "train");
    if (!cfg.eval_scenes.empty()) dump_set(cfg.eval_scenes, 0xe7a1, "eval");
    std::ofstream(cfg.out_dir + "/scenes.json") << meta.dump(2) << "\n";
    std::printf("wrote %zu train + %zu eval scenes to %s\n", cfg.train_scenes.size(),
                cfg.eval_scenes.size(), cfg.out_dir.c_str());
    return 0;
}

int cmd_train_teacher(const harness::RunConfig& cfg) {
    harness::ReportWriter log(cfg.out_dir);
    const std::uint64_t run_seed = rng::substream(cfg.base_seed, 1);
    const harness::TeacherResult res = harness::train_teacher(cfg, run_seed, &log);
    const std::string ckpt = cfg.out_dir + "/teacher.ckpt";
    res.model.save(ckpt);
    log.write_summary("teacher_summary.json",
                      json{{"version", harness::kVersion},
                           {"train_miou", res.train_miou},
                           {"steps", cfg.teacher_opt.steps},
                           {"checkpoint", ckpt},
                           {"config", cfg.to_tree().to_text()}}
                          .dump(2));
    std::printf("teacher train mIoU %.4f -> %s\n", res.train_miou, ckpt.c_str());
    return 0;
}

int cmd_distill(const harness::RunConfig& cfg, std::string teacher_path) {
    if (teacher_path.empty()) teacher_path = cfg.out_dir + "/teacher.ckpt";
    const net::Network teacher = net::Network::load(teacher_path);
    harness::ReportWriter log(cfg.out_dir);
    const std::uint64_t run_seed = rng::substream(cfg.base_seed, 1);
    const harness::DistillResult res = harness::distill(cfg, teacher, run_seed, &log);
    const std::string ckpt = cfg.out_dir + "/student.ckpt";
    res.model.save(ckpt);

    const auto eval_scenes = harness::instantiate_scenes(
        cfg.eval_scenes.empty() ? cfg.train_scenes : cfg.eval_scenes, run_seed, 0xe7a1);
    const harness::EvalResult ev = harness::evaluate(res.model, eval_scenes);
    int bound_pass = 0;
    for (const auto& b : res.bound_samples) bound_pass += b.satisfied ? 1 : 0;
    log.write_summary(
        "distill_summary.json",
        json{{"version", harness::kVersion},
             {"train_miou", res.train_miou},
             {"eval_miou", ev.mean_miou},
             {"steps", cfg.student_opt.steps},
             {"bound_samples", res.bound_samples.size()},
             {"bound_pass", bound_pass},
             {"checkpoint", ckpt},
             {"config", cfg.to_tree().to_text()}}
            .dump(2));
    std::printf("student train mIoU %.4f, eval mIoU %.4f -> %s\n", res.train_miou, ev.mean_miou,
                ckpt.c_str());
    return 0;
}

int cmd_ablate(const harness::RunConfig& cfg) {
    harness::ReportWriter log(cfg.out_dir);
    const harness::AblationReport rep = harness::ablation_grid(cfg, &log);
    std::printf("%-12s %8s   per-seed eval mIoU\n", "row", "median");
    for (const auto& row : rep.rows) {
        std::printf("%-12s %8.4f  ", row.name.c_str(), row.median_miou);
        for (double m : row.seed_mious) std::printf(" %.4f", m);
        std::printf("\n");
    }
    std::printf("median deltas vs kld+seg: +grad %+0.4f, +topo %+0.4f, +topo+grad %+0.4f\n",
                rep.median_delta_grad, rep.median_delta_topo, rep.median_delta_full);
    std::printf("bound checks: %d samples, pass rate %.3f; wall %.1fs\n", rep.bound_samples,
                rep.bound_pass_rate, rep.wall_seconds);
    return 0;
}

int cmd_eval(const harness::RunConfig& cfg, const std::string& ckpt, const std::string& scenes_path) {
    const net::Network model = net::Network::load(ckpt.empty() ? cfg.out_dir + "/student.ckpt" : ckpt);
    std::vector<pc::LabeledScene> scenes;
    if (!scenes_path.empty()) {
        scenes = load_scene_dir(scenes_path);
    } else {
        const std::uint64_t run_seed = rng::substream(cfg.base_seed, 1);
        scenes = harness::instantiate_scenes(cfg.eval_scenes.empty() ? cfg.train_scenes : cfg.eval_scenes,
                                             run_seed, 0xe7a1);
    }
    const harness::EvalResult ev = harness::evaluate(model, scenes);
    for (std::size_t i = 0; i < ev.per_scene_miou.size(); ++i)
        std::printf("scene %3zu  mIoU %.4f\n", i, ev.per_scene_miou[i]);
    std::printf("mean mIoU %.4f\n", ev.mean_miou);
    std::printf("per-class IoU:");
    for (double v : ev.per_class_iou) std::printf(" %.4f", v);
    std::printf("\n");
    return 0;
}

int cmd_tda(const std::string& scenes_path, const std::string& out_dir, int maxdim, double threshold,
            const std::vector<double>& scales) {
    const auto scenes = load_scene_dir(scenes_path);
    if (!out_dir.empty()) fs::create_directories(out_dir);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        tda::Points pts;
        for (const auto& p : scenes[i].cloud.coords) pts.push_back({p[0], p[1], p[2]});
        const double thr = threshold > 0 ? threshold : std::max(tda::diameter(pts) * 1.05, 1e-12);
        const tda::PersistenceDiagram d = tda::reduce(tda::build_filtration(pts, maxdim, thr));
        std::size_t finite = 0, essential = 0;
        for (const auto& p : d.points) (p.finite() ? finite : essential)++;
        std::printf("cloud %3zu: %zu points, threshold %.4g, %zu finite pairs, %zu essential\n", i,
                    pts.size(), thr, finite, essential);
        if (!scales.empty()) {
            const tda::SnapshotProfile prof = tda::snapshot_betti(pts, scales, maxdim);
            for (std::size_t s = 0; s < prof.scales.size(); ++s) {
                std::printf("  scale %.4g: betti", prof.scales[s]);
                for (int b : prof.betti[s]) std::printf(" %d", b);
                std::printf("\n");
            }
        }
        if (!out_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "cloud_%03zu.dgm", i);
            std::ofstream(out_dir + "/" + name) << tda::to_text(d);
        }
    }
    return 0;
}

int cmd_bound_check(const std::string& dgm_a, const std::string& dgm_b, int trials,
                    std::uint64_t seed, const std::string& out_dir) {
    harness::ReportWriter log(out_dir.empty() ? "out" : out_dir);
    if (!dgm_a.empty() && !dgm_b.empty()) {
        std::ifstream fa(dgm_a), fb(dgm_b);
        if (!fa || !fb) throw cfg::ConfigError("cannot open diagram files");
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        const auto rep = dm::bound_check(tda::diagram_from_text(sa.str()), tda::diagram_from_text(sb.str()));
        std::printf("chamfer %.6g  w2 %.6g  sqrt(chamfer) %.6g  gap %+.3g  %s\n", rep.chamfer, rep.w2,
                    std::sqrt(rep.chamfer), rep.gap, rep.satisfied ? "bound holds" : "BOUND VIOLATED");
        return 0;
    }

    // random diagram pairs; reports the pass rate and serializes any violation
    std::mt19937_64 g(rng::substream(seed, 0xb0c4));
    int pass = 0, bijective = 0, bijective_pass = 0;
    for (int t = 0; t < trials; ++t) {
        auto random_diagram = [&](int n) {
            tda::PersistenceDiagram d;
            d.maxdim = 0;
            for (int i = 0; i < n; ++i) {
                tda::DiagramPoint p;
                p.dim = 0;
                p.birth = rng::uniform(g, 0.0, 2.0);
                p.death = p.birth + rng::uniform(g, 0.01, 2.0);
                d.points.push_back(p);
            }
            return d;
        };
        const int n = 1 + static_cast<int>(g() % 8);
        const tda::PersistenceDiagram a = random_diagram(n);
        const tda::PersistenceDiagram b = random_diagram(n);
        const dm::BoundReport rep = dm::bound_check(a, b);
        const dm::ChamferResult ch = dm::chamfer(a, b);
        std::vector<int> hit(b.points.size(), 0);
        for (int j : ch.nn_a_to_b)
            if (j >= 0) hit[j]++;
        const bool bij = std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; });
        pass += rep.satisfied;
        if (bij) {
            bijective++;
            bijective_pass += rep.satisfied;
        }
        log.record(json{{"type", "bound_check"},
                        {"trial", t},
                        {"chamfer", rep.chamfer},
                        {"w2", rep.w2},
                        {"gap", rep.gap},
                        {"satisfied", rep.satisfied},
                        {"nn_bijective", bij}}
                       .dump());
        if (!rep.satisfied) {
            std::ofstream(log.dir() + "/violation_" + std::to_string(t) + "_a.dgm") << tda::to_text(a);
            std::ofstream(log.dir() + "/violation_" + std::to_string(t) + "_b.dgm") << tda::to_text(b);
        }
    }
    std::printf("bound holds on %d/%d random pairs (%.2f%%)\n", pass, trials, 100.0 * pass / trials);
    std::printf("bijective nearest-neighbor pairs: %d, bound held on all: %s\n", bijective,
                bijective == bijective_pass ? "yes" : "NO");
    return bijective == bijective_pass ? 0 : 1;
}

int cmd_report(const std::string& out_dir) {
    const std::string path = out_dir + "/records.jsonl";
    std::ifstream f(path);
    if (!f) throw cfg::ConfigError("no report stream at " + path);
    std::map<std::string, int> counts;
    std::map<std::string, std::vector<double>> last_by_row;
    std::string line;
    int bound_total = 0, bound_pass = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        const std::string type = rec.value("type", "?");
        counts[type]++;
        if (type == "bound_check") {
            bound_total++;
            bound_pass += rec.value("satisfied", false) ? 1 : 0;
        }
        if (type == "ablation_cell")
            last_by_row[rec.value("row", "?")].push_back(rec.value("eval_miou", 0.0));
    }
    std::printf("record stream %s\n", path.c_str());
    for (const auto& [type, n] : counts) std::printf("  %-14s %d\n", type.c_str(), n);
    if (bound_total > 0)
        std::printf("bound checks: %d/%d satisfied (%.2f%%)\n", bound_pass, bound_total,
                    100.0 * bound_pass / bound_total);
    for (const auto& [row, mious] : last_by_row)
        std::printf("  row %-12s median eval mIoU %.4f over %zu cells\n", row.c_str(),
                    harness::median(mious), mious.size());
    for (const char* name : {"ablation_summary.json", "teacher_summary.json", "distill_summary.json"}) {
        std::ifstream s(out_dir + "/" + name);
        if (s) std::printf("summary available: %s/%s\n", out_dir.c_str(), name);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"topology-aware gradient-guided distillation for point clouds"};
    app.require_subcommand(1);

    std::string config_path, out_dir, scenes_path, ckpt_path, teacher_path;
    std::uint64_t seed = 0;
    bool has_seed = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration file (key = value lines)");
        sub->add_option("--seed", seed, "base seed override")->each([&](const std::string&) { has_seed = true; });
        sub->add_option("--out", out_dir, "output directory");
    };

    auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
    add_common(gen);
    auto* train = app.add_subcommand("train-teacher", "train the teacher on the segmentation loss");
    add_common(train);
    auto* dist = app.add_subcommand("distill", "train the student on the composite objective");
    add_common(dist);
    dist->add_option("--teacher", teacher_path, "teacher checkpoint (default <out>/teacher.ckpt)");
    auto* abl = app.add_subcommand("ablate", "run the four-row loss-component grid");
    add_common(abl);
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev);
    ev->add_option("--ckpt", ckpt_path, "checkpoint path (default <out>/student.ckpt)");
    ev->add_option("--scenes", scenes_path, "point-cloud file or directory to evaluate on");

    auto* tda_cmd = app.add_subcommand("tda", "persistence diagrams of point clouds");
    int maxdim = 1;
    double threshold = 0.0;
    std::vector<double> scales;
    tda_cmd->add_option("--scenes", scenes_path, "point-cloud file or directory")->required();
    tda_cmd->add_option("--out", out_dir, "where to write .dgm files");
    tda_cmd->add_option("--maxdim", maxdim, "homology dimension cap (0-2)");
    tda_cmd->add_option("--threshold", threshold, "filtration threshold (default: 1.05 x diameter)");
    tda_cmd->add_option("--scales", scales, "fixed scales for Betti snapshots");

    auto* bc = app.add_subcommand("bound-check", "empirical w2 <= sqrt(chamfer) check");
    int trials = 1000;
    std::string dgm_a, dgm_b;
    bc->add_option("--trials", trials, "number of random diagram pairs");
    bc->add_option("--seed", seed, "rng seed")->each([&](const std::string&) { has_seed = true; });
    bc->add_option("--out", out_dir, "output directory");
    bc->add_option("--a", dgm_a, "first diagram file (.dgm)");
    bc->add_option("--b", dgm_b, "second diagram file (.dgm)");

    auto* rep = app.add_subcommand("report", "summarize a report stream");
    rep->add_option("--out", out_dir, "run output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(load_config(config_path, seed, has_seed, out_dir));
        if (train->parsed()) return cmd_train_teacher(load_config(config_path, seed, has_seed, out_dir));
        if (dist->parsed())
            return cmd_distill(load_config(config_path, seed, has_seed, out_dir), teacher_path);
        if (abl->parsed()) return cmd_ablate(load_config(config_path, seed, has_seed, out_dir));
        if (ev->parsed())
            return cmd_eval(load_config(config_path, seed, has_seed, out_dir), ckpt_path, scenes_path);
        if (tda_cmd->parsed()) return cmd_tda(scenes_path, out_dir, maxdim, threshold, scales);
        if (bc->parsed()) return cmd_bound_check(dgm_a, dgm_b, trials, seed, out_dir);
        if (rep->parsed()) return cmd_report(out_dir);
    } catch (const cfg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const harness::DivergenceError& e) {
        std::fprintf(stderr, "numerical divergence: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
