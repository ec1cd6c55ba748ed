#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "stpc/dataio.hpp"
#include "stpc/metrics.hpp"
#include "stpc/ops.hpp"
#include "stpc/segnet.hpp"
#include "stpc/stpc_layer.hpp"

namespace py = pybind11;
using namespace stpc;
using ad::Tensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    ad::Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
    py::array_t<T> out(shape);
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<Vec3> to_coords(const Array& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("coords must have shape (N, 3)");
    std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
    const double* p = a.data();
    for (auto& v : out) {
        v = {p[0], p[1], p[2]};
        p += 3;
    }
    return out;
}

Array from_coords(const std::vector<Vec3>& pts) {
    Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
    double* p = out.mutable_data();
    for (const auto& v : pts) p = std::copy(v.begin(), v.end(), p);
    return out;
}

PointCloud make_cloud(const Array& coords, const std::optional<Array>& attrs, const std::optional<std::vector<int>>& labels) {
    PointCloud c;
    c.coords = to_coords(coords);
    if (attrs) {
        if (attrs->ndim() != 2) throw std::invalid_argument("attrs must have shape (N, C)");
        c.channels = static_cast<std::size_t>(attrs->shape(1));
        c.attrs.assign(attrs->data(), attrs->data() + attrs->size());
    }
    if (labels) c.labels = *labels;
    c.validate();
    return c;
}

py::dict metrics_dict(const Metrics& m) {
    py::dict d;
    d["oa"] = m.oa;
    d["macc"] = m.macc;
    d["miou"] = m.miou;
    d["class_accuracy"] = m.class_accuracy;
    d["class_iou"] = m.class_iou;
    return d;
}

// Trained or freshly initialized segmentation network.
struct Model {
    TrainState state;

    std::vector<int> predict(const Array& coords, const std::optional<Array>& attrs, std::size_t cloud_index) const {
        const auto cloud = make_cloud(coords, attrs, std::nullopt);
        return stpc::predict(state.model, cloud, eval_sample_seed(state.model.config, cloud_index));
    }

    py::dict forward(const Array& coords, const std::optional<Array>& attrs, std::uint64_t sample_seed) const {
        const auto cloud = make_cloud(coords, attrs, std::nullopt);
        ForwardResult fr;
        {
            ad::NoGradGuard guard;
            fr = stpc::forward(state.model, cloud, sample_seed);
        }
        py::dict d;
        d["logits"] = to_array(fr.logits);
        py::list raw, alpha, decor;
        for (const auto& c : fr.coefficients) {
            raw.append(to_array(c.raw));
            alpha.append(to_array(c.alpha));
        }
        for (const auto& t : fr.decorrelation) decor.append(t.item());
        d["raw_coefficients"] = raw;
        d["coefficients"] = alpha;
        d["decorrelation"] = decor;
        return d;
    }
};

}  // namespace

PYBIND11_MODULE(_stpc, m) {
    m.doc() = "Spatial transformer point convolution, float64 CPU implementation";

    m.def(
        "knn", [](const Array& coords, std::size_t k) {
            const auto nbr = stpc::knn(to_coords(coords), k);
            return to_array(nbr.indices, {static_cast<py::ssize_t>(nbr.points), static_cast<py::ssize_t>(k)});
        },
        py::arg("coords"), py::arg("k"), "K nearest neighbors per point, nearest first, ties to the lower index.");
    m.def(
        "random_subsample", [](std::size_t n, std::size_t ratio, std::uint64_t seed) {
            const auto idx = stpc::random_subsample(n, ratio, seed);
            return to_array(idx, {static_cast<py::ssize_t>(idx.size())});
        },
        py::arg("n"), py::arg("ratio"), py::arg("seed"));
    m.def(
        "nearest_upsample", [](const Array& coarse, const Array& fine) {
            const auto idx = stpc::nearest_upsample(to_coords(coarse), to_coords(fine));
            return to_array(idx, {static_cast<py::ssize_t>(idx.size())});
        },
        py::arg("coarse"), py::arg("fine"));

    m.def(
        "encode_directions", [](const Array& directions, const Array& atoms, double tau, double eps) {
            const auto e = stpc::encode_directions(to_tensor(directions), to_tensor(atoms), tau, eps);
            return py::make_tuple(to_array(e.raw), to_array(e.alpha));
        },
        py::arg("directions"), py::arg("atoms"), py::arg("tau") = 0.01, py::arg("eps") = 1e-12,
        "Softmax-over-atoms coefficients (N, K, M) before and after thresholding.");
    m.def(
        "spatial_transform", [](const Array& alpha, const Array& feats) {
            return to_array(stpc::spatial_transform(to_tensor(alpha), to_tensor(feats)));
        },
        py::arg("alpha"), py::arg("neighbor_features"));
    m.def(
        "anisotropic_conv", [](const Array& x, const Array& w, const Array& b) {
            return to_array(stpc::anisotropic_conv(to_tensor(x), to_tensor(w), to_tensor(b)));
        },
        py::arg("x_tilde"), py::arg("weight"), py::arg("bias"));
    m.def(
        "decorrelation_loss", [](const Array& atoms, double eps) {
            Tensor a = to_tensor(atoms);
            Tensor leaf(a.shape(), {a.data().begin(), a.data().end()}, true);
            const Tensor loss = stpc::decorrelation_loss(leaf, eps);
            ad::backward(loss);
            return py::make_tuple(loss.item(), to_array(Tensor(leaf.shape(), {leaf.grad().begin(), leaf.grad().end()})));
        },
        py::arg("atoms"), py::arg("eps") = 1e-12, "Loss value and its gradient with respect to the atoms.");

    m.def(
        "compute_metrics", [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& cm) {
            if (cm.ndim() != 2 || cm.shape(0) != cm.shape(1)) throw std::invalid_argument("confusion matrix must be square");
            const auto c = static_cast<std::size_t>(cm.shape(0));
            return metrics_dict(stpc::compute_metrics(ConfusionMatrix(c, {cm.data(), cm.data() + cm.size()})));
        },
        py::arg("confusion"), "Rows are ground truth, columns predictions.");

    m.def(
        "gen_synthetic",
        [](const std::string& kind, std::size_t clouds, std::size_t points, std::size_t classes, double noise,
           std::uint64_t seed) {
            SyntheticSpec spec{parse_synthetic_kind(kind), clouds, points, classes, noise, seed};
            spec.validate();
            py::list out;
            for (const auto& s : stpc::gen_synthetic(spec)) {
                py::dict d;
                d["coords"] = from_coords(s.cloud.coords);
                d["labels"] = to_array(s.cloud.labels, {static_cast<py::ssize_t>(s.cloud.labels.size())});
                d["normals"] = from_coords(s.normals);
                out.append(d);
            }
            return out;
        },
        py::arg("kind") = "oriented-planes", py::arg("clouds") = 20, py::arg("points") = 1024, py::arg("classes") = 3,
        py::arg("noise") = 0.01, py::arg("seed") = 0);

    py::class_<Model>(m, "Model")
        .def_static(
            "from_config",
            [](const std::string& text) { return Model{make_train_state(NetworkConfig::from_text(text))}; },
            py::arg("config_text"), "Fresh model from `key = value` lines; omitted keys keep their defaults.")
        .def_static(
            "load", [](const std::string& path) { return Model{load_checkpoint(path)}; }, py::arg("path"))
        .def("save", [](const Model& m, const std::string& path) { save_checkpoint(path, m.state); }, py::arg("path"))
        .def_property_readonly("config", [](const Model& m) { return m.state.model.config.to_text(); })
        .def_property_readonly("epochs_done", [](const Model& m) { return m.state.epochs_done; })
        .def_property_readonly("parameter_count", [](const Model& m) { return m.state.model.parameter_count(); })
        .def("forward", &Model::forward, py::arg("coords"), py::arg("attrs") = std::nullopt, py::arg("sample_seed") = 0)
        .def("predict", &Model::predict, py::arg("coords"), py::arg("attrs") = std::nullopt, py::arg("cloud_index") = 0);

    m.def(
        "run_cli", [](const std::vector<std::string>& args) {
            std::vector<std::string> full{"stpc"};
            full.insert(full.end(), args.begin(), args.end());
            std::vector<const char*> argv;
            for (const auto& a : full) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs one `stpc` subcommand in process; returns (exit_code, stdout, stderr).");
}
