// Python bindings for the core operations: synthetic scenes, preprocessing,
// persistence computation, diagram distances and the distillation losses.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "topokd/diagmetrics.hpp"
#include "topokd/harness.hpp"
#include "topokd/io.hpp"
#include "topokd/kd.hpp"
#include "topokd/net.hpp"
#include "topokd/pointcloud.hpp"
#include "topokd/tda.hpp"

namespace py = pybind11;
using namespace topokd;

namespace {

ad::Matrix matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    ad::Matrix m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + m.size(), m.data.begin());
    return m;
}

py::array_t<double> matrix_to_numpy(const ad::Matrix& m) {
    py::array_t<double> arr({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
    return arr;
}

tda::Points points_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected an m x d array");
    tda::Points pts(arr.shape(0));
    for (py::ssize_t i = 0; i < arr.shape(0); ++i) {
        pts[i].resize(arr.shape(1));
        for (py::ssize_t j = 0; j < arr.shape(1); ++j) pts[i][j] = arr.at(i, j);
    }
    return pts;
}

pc::PointCloud cloud_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& coords,
                                const std::vector<int>& labels, int num_classes) {
    if (coords.ndim() != 2 || coords.shape(1) != 3) throw std::invalid_argument("coords must be N x 3");
    pc::PointCloud c;
    for (py::ssize_t i = 0; i < coords.shape(0); ++i)
        c.coords.push_back({coords.at(i, 0), coords.at(i, 1), coords.at(i, 2)});
    c.labels = labels;
    c.num_classes = num_classes;
    c.validate();
    return c;
}

py::array_t<double> cloud_coords(const pc::PointCloud& c) {
    py::array_t<double> arr({static_cast<py::ssize_t>(c.size()), static_cast<py::ssize_t>(3)});
    auto a = arr.mutable_unchecked<2>();
    for (std::size_t i = 0; i < c.size(); ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = c.coords[i][j];
    return arr;
}

py::list diagram_to_list(const tda::PersistenceDiagram& d) {
    py::list out;
    for (const auto& p : d.points) {
        py::dict e;
        e["dim"] = p.dim;
        e["birth"] = p.birth;
        e["death"] = p.finite() ? py::object(py::float_(p.death)) : py::object(py::none());
        e["zero_persistence"] = p.zero_persistence;
        out.append(e);
    }
    return out;
}

tda::PersistenceDiagram diagram_from_list(const py::sequence& seq) {
    tda::PersistenceDiagram d;
    for (const auto& item : seq) {
        const py::sequence bar = item.cast<py::sequence>();
        tda::DiagramPoint p;
        if (bar.size() == 3) p.dim = bar[2].cast<int>();
        p.birth = bar[0].cast<double>();
        p.death = bar[1].is_none() ? tda::kInf : bar[1].cast<double>();
        p.zero_persistence = p.finite() && p.birth == p.death;
        d.maxdim = std::max(d.maxdim, p.dim);
        d.points.push_back(p);
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_topokd, m) {
    m.doc() = "topology-aware gradient-guided knowledge distillation for point clouds";

    // ---- preprocessing -----------------------------------------------------
    m.def(
        "fnv1a_64",
        [](const py::bytes& data) {
            const std::string s = data;
            return pc::fnv1a_64(s.data(), s.size());
        },
        py::arg("data"), "FNV-1a digest (64-bit) of a byte string");

    m.def(
        "grid_sample",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& coords, double grid) {
            const pc::PointCloud c = cloud_from_numpy(coords, {}, 0);
            return cloud_coords(pc::grid_sample(c, grid));
        },
        py::arg("coords"), py::arg("grid"),
        "voxel-grid downsampling; one representative (lowest index) per occupied cell");

    m.def("miou", &pc::miou, py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
          "mean intersection-over-union, classes absent from both sides excluded");

    m.def(
        "generate_scene",
        [](const std::string& shape, int num_classes, std::uint64_t seed, int num_points, double noise) {
            pc::SceneSpec spec;
            spec.shape = pc::scene_shape_from_string(shape);
            spec.num_classes = num_classes;
            spec.seed = seed;
            spec.num_points = num_points;
            spec.noise_sigma = noise;
            const pc::LabeledScene scene = pc::generate_scene(spec);
            py::dict out;
            out["coords"] = cloud_coords(scene.cloud);
            out["labels"] = scene.cloud.labels;
            out["intensity"] = scene.cloud.intensity;
            out["scale"] = scene.topology.scale;
            out["betti0"] = scene.topology.betti0;
            out["betti1"] = scene.topology.betti1;
            return out;
        },
        py::arg("shape"), py::arg("num_classes") = 2, py::arg("seed") = 0, py::arg("num_points") = 128,
        py::arg("noise") = 0.0,
        "synthetic labeled scene (shapes: clusters, circle, torus-slice, planes+objects) with its "
        "ground-truth topology");

    // ---- persistence -------------------------------------------------------
    m.def(
        "vr_diagram",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points, int maxdim,
           double threshold) {
            const tda::Points pts = points_from_numpy(points);
            const double thr = threshold > 0 ? threshold : std::max(tda::diameter(pts) * 1.05, 1e-12);
            return diagram_to_list(tda::reduce(tda::build_filtration(pts, maxdim, thr)));
        },
        py::arg("points"), py::arg("maxdim") = 1, py::arg("threshold") = 0.0,
        "Vietoris-Rips persistence diagram via boundary-matrix reduction; threshold <= 0 means "
        "1.05 x diameter");

    m.def(
        "h0_unionfind",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points, double threshold) {
            const tda::Points pts = points_from_numpy(points);
            const double thr = threshold > 0 ? threshold : std::max(tda::diameter(pts) * 1.05, 1e-12);
            return diagram_to_list(tda::h0_unionfind(pts, thr));
        },
        py::arg("points"), py::arg("threshold") = 0.0, "single-linkage H0 oracle diagram");

    m.def(
        "snapshot_betti",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points,
           const std::vector<double>& scales, int maxdim) {
            return tda::snapshot_betti(points_from_numpy(points), scales, maxdim).betti;
        },
        py::arg("points"), py::arg("scales"), py::arg("maxdim") = 1,
        "Betti numbers of the VR complex at fixed scales");

    // ---- diagram distances -------------------------------------------------
    m.def(
        "chamfer",
        [](const py::sequence& a, const py::sequence& b) {
            return dm::chamfer(diagram_from_list(a), diagram_from_list(b)).value;
        },
        py::arg("a"), py::arg("b"),
        "bidirectional nearest-neighbor distance between diagrams given as [(birth, death[, dim]), ...]");

    m.def(
        "wasserstein2",
        [](const py::sequence& a, const py::sequence& b) {
            return dm::wasserstein2_exact(diagram_from_list(a), diagram_from_list(b)).first;
        },
        py::arg("a"), py::arg("b"), "exact 2-Wasserstein distance with diagonal augmentation");

    m.def(
        "bound_check",
        [](const py::sequence& a, const py::sequence& b) {
            const dm::BoundReport rep = dm::bound_check(diagram_from_list(a), diagram_from_list(b));
            py::dict out;
            out["chamfer"] = rep.chamfer;
            out["w2"] = rep.w2;
            out["satisfied"] = rep.satisfied;
            out["gap"] = rep.gap;
            return out;
        },
        py::arg("a"), py::arg("b"), "checks w2 <= sqrt(chamfer) and reports the gap");

    // ---- distillation losses -----------------------------------------------
    m.def(
        "importance_weights",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& grads) {
            return kd::importance_weights(matrix_from_numpy(grads));
        },
        py::arg("activation_grads"), "mean absolute gradient per channel");

    m.def(
        "saliency_map",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scaled) {
            return kd::saliency_map(matrix_from_numpy(scaled));
        },
        py::arg("scaled_features"), "channel-summed absolute features, min-max normalized");

    m.def(
        "kld_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& teacher,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& student, double temperature) {
            return kd::kld_loss(matrix_from_numpy(teacher), matrix_from_numpy(student), temperature);
        },
        py::arg("teacher_logits"), py::arg("student_logits"), py::arg("temperature") = 1.0,
        "temperature-softened KL divergence, averaged over points and scaled by T^2");

    m.def(
        "clamp_topo_gradient",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& g_topo,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& g_feat, double alpha) {
            return matrix_to_numpy(
                kd::clamp_topo_gradient(matrix_from_numpy(g_topo), matrix_from_numpy(g_feat), alpha));
        },
        py::arg("g_topo"), py::arg("g_feat"), py::arg("alpha"),
        "rescales g_topo so its norm never exceeds alpha * ||g_feat||");

    m.def(
        "topo_loss",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& teacher_features,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& student_features,
           int subsample, std::uint64_t seed) {
            kd::DistillConfig cfg;
            cfg.tda_subsample = subsample;
            const kd::TopoLossResult res =
                kd::topo_loss(matrix_from_numpy(teacher_features), matrix_from_numpy(student_features), cfg, seed);
            py::dict out;
            out["value"] = res.value;
            out["grad_student"] = matrix_to_numpy(res.grad_student);
            out["tie_events"] = res.tie_events;
            return out;
        },
        py::arg("teacher_features"), py::arg("student_features"), py::arg("subsample") = 128,
        py::arg("seed") = 0,
        "Chamfer distance between teacher and student feature diagrams with the analytic gradient "
        "routed through critical pairs");

    m.attr("__version__") = harness::kVersion;
}
