#include "topokd/kd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "topokd/diagmetrics.hpp"

namespace topokd::kd {

void DistillConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
        throw std::invalid_argument("loss weights must be >= 0");
    if (alpha <= 0) throw std::invalid_argument("alpha must be > 0");
    if (kld_temperature <= 0) throw std::invalid_argument("temperature must be > 0");
    if (tda_subsample < 1) throw std::invalid_argument("tda_subsample must be >= 1");
    if (tda_maxdim < 0 || tda_maxdim > 2) throw std::invalid_argument("tda_maxdim must be 0, 1 or 2");
    if (tda_threshold_factor <= 0) throw std::invalid_argument("tda_threshold_factor must be > 0");
    if (tie_probe_eps <= 0) throw std::invalid_argument("tie_probe_eps must be > 0");
}

std::vector<double> importance_weights(const ad::Matrix& activation_grad) {
    if (activation_grad.rows < 1 || activation_grad.cols < 1)
        throw std::invalid_argument("empty activation gradient");
    std::vector<double> w(activation_grad.cols, 0.0);
    for (int i = 0; i < activation_grad.rows; ++i)
        for (int k = 0; k < activation_grad.cols; ++k) w[k] += std::fabs(activation_grad.at(i, k));
    for (double& v : w) v /= activation_grad.rows;
    return w;
}

ad::Matrix scale_features(const ad::Matrix& features, const std::vector<double>& weights) {
    if (static_cast<int>(weights.size()) != features.cols)
        throw std::invalid_argument("importance weight / channel count mismatch");
    ad::Matrix out = features;
    for (int i = 0; i < out.rows; ++i)
        for (int k = 0; k < out.cols; ++k) out.at(i, k) *= weights[k];
    return out;
}

std::vector<double> saliency_map(const ad::Matrix& scaled_features) {
    if (scaled_features.rows < 1) throw std::invalid_argument("empty feature matrix");
    std::vector<double> m(scaled_features.rows, 0.0);
    for (int i = 0; i < scaled_features.rows; ++i)
        for (int k = 0; k < scaled_features.cols; ++k) m[i] += std::fabs(scaled_features.at(i, k));
    const auto [lo_it, hi_it] = std::minmax_element(m.begin(), m.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) {
        std::fill(m.begin(), m.end(), 0.0);  // constant map carries no ranking
        return m;
    }
    for (double& v : m) v = (v - lo) / (hi - lo);
    return m;
}

double grad_align_loss(const std::vector<std::vector<double>>& teacher_maps,
                       const std::vector<std::vector<double>>& student_maps) {
    if (teacher_maps.size() != student_maps.size())
        throw std::invalid_argument("stage count mismatch after pairing");
    if (teacher_maps.empty()) return 0.0;
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t l = 0; l < teacher_maps.size(); ++l) {
        if (teacher_maps[l].size() != student_maps[l].size())
            throw std::invalid_argument("saliency length mismatch at a paired stage");
        n = teacher_maps[l].size();
        for (std::size_t i = 0; i < n; ++i) acc += std::fabs(teacher_maps[l][i] - student_maps[l][i]);
    }
    return acc / static_cast<double>(n);
}

namespace {

// row-wise softened probabilities at temperature T
ad::Matrix soften(const ad::Matrix& logits, double temperature) {
    ad::Matrix p(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < logits.cols; ++k) mx = std::max(mx, logits.at(i, k) / temperature);
        double z = 0;
        for (int k = 0; k < logits.cols; ++k) z += std::exp(logits.at(i, k) / temperature - mx);
        for (int k = 0; k < logits.cols; ++k) p.at(i, k) = std::exp(logits.at(i, k) / temperature - mx) / z;
    }
    return p;
}

}  // namespace

double kld_loss(const ad::Matrix& teacher_logits, const ad::Matrix& student_logits, double temperature,
                KldDirection direction) {
    if (!teacher_logits.same_shape(student_logits)) throw std::invalid_argument("logit shape mismatch");
    if (temperature <= 0) throw std::invalid_argument("temperature must be > 0");
    const ad::Matrix pt = soften(teacher_logits, temperature);
    const ad::Matrix ps = soften(student_logits, temperature);
    const ad::Matrix& p = direction == KldDirection::TeacherToStudent ? pt : ps;
    const ad::Matrix& q = direction == KldDirection::TeacherToStudent ? ps : pt;
    double acc = 0.0;
    for (int i = 0; i < p.rows; ++i)
        for (int k = 0; k < p.cols; ++k) {
            const double pi = p.at(i, k);
            if (pi > 0) acc += pi * (std::log(pi) - std::log(q.at(i, k)));
        }
    return temperature * temperature * acc / p.rows;
}

namespace {

tda::Points rows_as_points(const ad::Matrix& m) {
    tda::Points pts(m.rows);
    for (int i = 0; i < m.rows; ++i) {
        pts[i].resize(m.cols);
        for (int k = 0; k < m.cols; ++k) pts[i][k] = m.at(i, k);
    }
    return pts;
}

tda::PersistenceDiagram feature_diagram(const tda::Points& sub_points, const DistillConfig& cfg) {
    const double diam = tda::diameter(sub_points);
    const double threshold = std::max(diam * cfg.tda_threshold_factor, 1e-12);
    return tda::reduce(tda::build_filtration(sub_points, cfg.tda_maxdim, threshold));
}

// (min cost, runner-up gap) of matching `p` against candidate diagram points
struct NearestPick {
    int arg = -1;
    double cost = std::numeric_limits<double>::infinity();
    double margin = std::numeric_limits<double>::infinity();
};

NearestPick nearest_in(const tda::DiagramPoint& p, const std::vector<const tda::DiagramPoint*>& cands,
                       const std::vector<int>& cand_idx) {
    NearestPick pick;
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cands.size(); ++j) {
        const double db = p.birth - cands[j]->birth;
        const double dd = p.death - cands[j]->death;
        const double c = db * db + dd * dd;
        if (c < pick.cost) {
            second = pick.cost;
            pick.cost = c;
            pick.arg = cand_idx[j];
        } else if (c < second) {
            second = c;
        }
    }
    pick.margin = second - pick.cost;
    return pick;
}

}  // namespace

TopoLossResult topo_loss_with_teacher(const tda::PersistenceDiagram& teacher_diagram,
                                      const ad::Matrix& student_features, const DistillConfig& cfg,
                                      std::uint64_t subsample_seed) {
    cfg.validate();
    TopoLossResult res;
    res.teacher_diagram = teacher_diagram;
    res.grad_student = ad::Matrix(student_features.rows, student_features.cols);

    const int m = std::min(cfg.tda_subsample, student_features.rows);
    const tda::Subsample sub = tda::subsample_for_tda(rows_as_points(student_features), m, subsample_seed);
    res.subsample_indices = sub.indices;
    res.student_diagram = feature_diagram(sub.points, cfg);

    const dm::ChamferResult ch = dm::chamfer(teacher_diagram, res.student_diagram);
    res.value = ch.value;

    const auto& dt = teacher_diagram.points;
    const auto& ds = res.student_diagram.points;

    // accumulated d(loss)/d(birth), d(loss)/d(death) per student diagram point
    std::vector<double> gb(ds.size(), 0.0), gd(ds.size(), 0.0);

    // candidate lists per dimension, for tie margins
    int maxd = 0;
    for (const auto& p : dt) maxd = std::max(maxd, p.dim);
    for (const auto& p : ds) maxd = std::max(maxd, p.dim);
    for (int dim = 0; dim <= maxd; ++dim) {
        std::vector<const tda::DiagramPoint*> t_pts, s_pts;
        std::vector<int> t_idx, s_idx;
        for (std::size_t i = 0; i < dt.size(); ++i)
            if (dt[i].dim == dim && dt[i].finite() && !dt[i].zero_persistence) {
                t_pts.push_back(&dt[i]);
                t_idx.push_back(static_cast<int>(i));
            }
        for (std::size_t j = 0; j < ds.size(); ++j)
            if (ds[j].dim == dim && ds[j].finite() && !ds[j].zero_persistence) {
                s_pts.push_back(&ds[j]);
                s_idx.push_back(static_cast<int>(j));
            }

        // student-side terms: each student point pulls toward its nearest
        // teacher point, or toward the diagonal when no teacher point exists
        for (std::size_t j = 0; j < s_pts.size(); ++j) {
            const tda::DiagramPoint& q = *s_pts[j];
            if (t_pts.empty()) {
                gb[s_idx[j]] += q.birth - q.death;
                gd[s_idx[j]] += q.death - q.birth;
                continue;
            }
            const NearestPick pick = nearest_in(q, t_pts, t_idx);
            if (pick.margin < cfg.tie_probe_eps) {
                res.tie_events++;
                continue;
            }
            gb[s_idx[j]] += 2.0 * (q.birth - dt[pick.arg].birth);
            gd[s_idx[j]] += 2.0 * (q.death - dt[pick.arg].death);
        }
        // teacher-side terms: the student point selected as a teacher point's
        // nearest neighbor also receives gradient
        for (std::size_t i = 0; i < t_pts.size(); ++i) {
            if (s_pts.empty()) continue;  // teacher point cost hits the diagonal, constant
            const tda::DiagramPoint& p = *t_pts[i];
            const NearestPick pick = nearest_in(p, s_pts, s_idx);
            if (pick.margin < cfg.tie_probe_eps) {
                res.tie_events++;
                continue;
            }
            const tda::DiagramPoint& q = ds[pick.arg];
            gb[pick.arg] += 2.0 * (q.birth - p.birth);
            gd[pick.arg] += 2.0 * (q.death - p.death);
        }
    }

    // route through the critical edges and scatter to the full feature rows
    for (std::size_t j = 0; j < ds.size(); ++j) {
        if (gb[j] == 0.0 && gd[j] == 0.0) continue;
        const tda::DiagramPoint& q = ds[j];
        const bool birth_active = q.dim >= 1 && gb[j] != 0.0;
        if ((birth_active && q.birth_crit_margin < cfg.tie_probe_eps) ||
            (gd[j] != 0.0 && q.death_crit_margin < cfg.tie_probe_eps)) {
            res.tie_events++;
            continue;  // ambiguous critical edge: drop the whole point
        }
        auto scatter_edge = [&](int u, int v, double coeff) {
            if (coeff == 0.0 || u < 0 || v < 0) return;
            double len = 0;
            for (std::size_t c = 0; c < sub.points[u].size(); ++c) {
                const double d = sub.points[u][c] - sub.points[v][c];
                len += d * d;
            }
            len = std::sqrt(len);
            if (len < 1e-15) {
                res.tie_events++;
                return;
            }
            const int ru = res.subsample_indices[u], rv = res.subsample_indices[v];
            for (std::size_t c = 0; c < sub.points[u].size(); ++c) {
                const double dir = (sub.points[u][c] - sub.points[v][c]) / len;
                res.grad_student.at(ru, static_cast<int>(c)) += coeff * dir;
                res.grad_student.at(rv, static_cast<int>(c)) -= coeff * dir;
            }
        };
        if (birth_active) scatter_edge(q.birth_crit_u, q.birth_crit_v, gb[j]);
        scatter_edge(q.death_crit_u, q.death_crit_v, gd[j]);
    }
    return res;
}

TopoLossResult topo_loss(const ad::Matrix& teacher_features, const ad::Matrix& student_features,
                         const DistillConfig& cfg, std::uint64_t subsample_seed) {
    cfg.validate();
    if (teacher_features.rows != student_features.rows)
        throw std::invalid_argument("teacher and student features must cover the same points");
    const int m = std::min(cfg.tda_subsample, teacher_features.rows);
    const tda::Subsample sub = tda::subsample_for_tda(rows_as_points(teacher_features), m, subsample_seed);
    const tda::PersistenceDiagram teacher_diagram = feature_diagram(sub.points, cfg);
    return topo_loss_with_teacher(teacher_diagram, student_features, cfg, subsample_seed);
}

ad::Matrix clamp_topo_gradient(const ad::Matrix& g_topo, const ad::Matrix& g_feat, double alpha) {
    if (!g_topo.same_shape(g_feat)) throw std::invalid_argument("gradient shape mismatch");
    if (alpha <= 0) throw std::invalid_argument("alpha must be > 0");
    double nt = 0, nf = 0;
    for (double v : g_topo.data) nt += v * v;
    for (double v : g_feat.data) nf += v * v;
    nt = std::sqrt(nt);
    nf = std::sqrt(nf);
    if (nt <= alpha * nf || nt == 0.0) return g_topo;
    ad::Matrix out = g_topo;
    const double f = alpha * nf / nt;
    for (double& v : out.data) v *= f;
    return out;
}

namespace {

int resolve_topo_stage(int requested, int num_stages) {
    if (requested == -1) return num_stages - 1;
    if (requested < 0 || requested >= num_stages) throw std::invalid_argument("topo stage out of range");
    return requested;
}

double matrix_norm(const ad::Matrix& m) {
    double s = 0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

}  // namespace

TeacherContext teacher_context(const net::Network& teacher, const pc::PointCloud& cloud,
                               const std::vector<int>& labels, const DistillConfig& cfg,
                               std::uint64_t subsample_seed) {
    cfg.validate();
    TeacherContext ctx;
    ctx.subsample_seed = subsample_seed;

    net::ForwardTrace trace = net::forward(teacher, cloud);
    const ad::Graph::Id loss = net::task_loss(trace, labels);
    const std::vector<ad::Matrix> act_grads = net::activation_gradients(trace, loss);

    for (std::size_t l = 0; l < trace.stage_features.size(); ++l) {
        const ad::Matrix features = trace.feature_values(static_cast<int>(l));
        const std::vector<double> w = importance_weights(act_grads[l]);
        ctx.saliency.push_back(saliency_map(scale_features(features, w)));
    }
    ctx.logits = trace.logit_values();

    if (cfg.topo_enabled) {
        const int stage = resolve_topo_stage(cfg.topo_stage, static_cast<int>(trace.stage_features.size()));
        const ad::Matrix features = trace.feature_values(stage);
        const int m = std::min(cfg.tda_subsample, features.rows);
        const tda::Subsample sub = tda::subsample_for_tda(rows_as_points(features), m, subsample_seed);
        ctx.topo_diagram = feature_diagram(sub.points, cfg);
    }
    return ctx;
}

LossBreakdown distill_loss(const net::Network& student, const TeacherContext& teacher,
                           const pc::PointCloud& cloud, const std::vector<int>& labels,
                           const DistillConfig& cfg, net::ParamGradients* param_grads,
                           TopoLossResult* topo_out) {
    cfg.validate();
    LossBreakdown out;

    net::ForwardTrace trace = net::forward(student, cloud);
    ad::Graph& g = *trace.graph;
    const int n = trace.n_points;
    const int num_stages = static_cast<int>(trace.stage_features.size());

    // segmentation term and the activation gradients that define the
    // importance weights; the weights enter the alignment term as constants
    const ad::Graph::Id seg = net::task_loss(trace, labels);
    const std::vector<ad::Matrix> act_grads = net::activation_gradients(trace, seg);

    const std::vector<int> pairing = net::pair_stages(num_stages, static_cast<int>(teacher.saliency.size()));

    // student saliency per stage, as graph nodes
    ad::Graph::Id align_acc = -1;
    for (int l = 0; l < num_stages; ++l) {
        const std::vector<double> w = importance_weights(act_grads[l]);
        const ad::Graph::Id scaled = g.mul(trace.stage_features[l], g.constant(ad::Matrix::row(w)));
        const ad::Graph::Id pre = g.row_sum(g.abs(scaled));
        g.forward(pre);

        ad::Graph::Id m_s;
        const ad::Matrix& pre_v = g.value(pre);
        const auto [lo, hi] = std::minmax_element(pre_v.data.begin(), pre_v.data.end());
        if (*hi == *lo) {
            m_s = g.constant(ad::Matrix(n, 1, 0.0));  // constant saliency: all zeros
        } else {
            const ad::Graph::Id lo_n = g.vmin(pre);
            const ad::Graph::Id range = g.sub(g.vmax(pre), lo_n);
            m_s = g.div(g.sub(pre, lo_n), range);
        }

        const std::vector<double>& mt = teacher.saliency.at(pairing[l]);
        if (static_cast<int>(mt.size()) != n)
            throw std::invalid_argument("teacher saliency does not cover this cloud");
        ad::Matrix mt_col(n, 1);
        for (int i = 0; i < n; ++i) mt_col.at(i, 0) = mt[i];
        const ad::Graph::Id term = g.sum(g.abs(g.sub(g.constant(std::move(mt_col)), m_s)));
        align_acc = align_acc < 0 ? term : g.add(align_acc, term);
    }
    const ad::Graph::Id align = g.scale(align_acc, 1.0 / n);

    // softened KLD
    const double T = cfg.kld_temperature;
    if (!teacher.logits.same_shape(g.value(trace.logits)))
        throw std::invalid_argument("teacher and student logits differ in shape");
    ad::Graph::Id kld;
    if (cfg.kld_direction == KldDirection::TeacherToStudent) {
        const ad::Matrix pt = soften(teacher.logits, T);
        double teacher_entropy_term = 0.0;  // sum p log p, constant in the student
        for (double v : pt.data)
            if (v > 0) teacher_entropy_term += v * std::log(v);
        const ad::Graph::Id ls = g.log_softmax(g.scale(trace.logits, 1.0 / T));
        const ad::Graph::Id cross = g.sum(g.mul(ls, g.constant(pt)));
        kld = g.add(g.scale(cross, -T * T / n), g.constant(ad::Matrix::scalar(T * T / n * teacher_entropy_term)));
    } else {
        ad::Matrix log_pt = soften(teacher.logits, T);
        for (double& v : log_pt.data) v = std::log(std::max(v, 1e-300));
        const ad::Graph::Id zs = g.scale(trace.logits, 1.0 / T);
        const ad::Graph::Id ps = g.softmax(zs);
        const ad::Graph::Id own = g.sum(g.mul(ps, g.log_softmax(zs)));
        const ad::Graph::Id cross = g.sum(g.mul(ps, g.constant(std::move(log_pt))));
        kld = g.scale(g.sub(own, cross), T * T / n);
    }

    // topology term, outside the tape; its clamped gradient re-enters through
    // an inner-product carrier node so the parameter backward stays exact
    const int topo_stage = resolve_topo_stage(cfg.topo_stage, num_stages);
    const ad::Graph::Id f_topo = trace.stage_features[topo_stage];
    ad::Graph::Id carrier = -1;
    if (cfg.topo_enabled) {
        TopoLossResult topo =
            topo_loss_with_teacher(teacher.topo_diagram, g.value(f_topo), cfg, teacher.subsample_seed);
        out.topo = topo.value;
        out.topo_tie_events = topo.tie_events;
        out.topo_grad_norm_raw = matrix_norm(topo.grad_student);
        if (topo_out != nullptr) *topo_out = topo;

        g.forward(align);
        g.backward(align);
        const ad::Matrix g_feat = g.adjoint(f_topo);
        out.feat_grad_norm = matrix_norm(g_feat);

        const ad::Matrix clamped = clamp_topo_gradient(topo.grad_student, g_feat, cfg.alpha);
        out.topo_grad_norm = matrix_norm(clamped);
        if (out.topo_grad_norm > 0) carrier = g.sum(g.mul(f_topo, g.constant(clamped)));
    }

    ad::Graph::Id objective = g.add(
        g.add(g.scale(align, cfg.lambda1), g.scale(kld, cfg.lambda2)), g.scale(seg, cfg.lambda3));
    if (carrier >= 0) objective = g.add(objective, carrier);

    g.forward(objective);
    if (param_grads != nullptr) {
        *param_grads = net::parameter_gradients(trace, objective);
        out.param_grad_norm = param_grads->norm();
    }

    out.grad = g.value(align).data[0];
    out.kld = g.value(kld).data[0];
    out.seg = g.value(seg).data[0];
    out.total = out.topo + cfg.lambda1 * out.grad + cfg.lambda2 * out.kld + cfg.lambda3 * out.seg;
    return out;
}

}  // namespace topokd::kd
