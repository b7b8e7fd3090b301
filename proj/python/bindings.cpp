#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mvhgnn/gradcheck.hpp"
#include "mvhgnn/pipeline.hpp"

namespace py = pybind11;
using namespace mvhgnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::kDimension, "expected a 2-d array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy_n(a.data(), m.size(), m.data().begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

CameraRig to_rig(const Array& a) {
  const Matrix m = to_matrix(a);
  if (m.cols() != 3) throw Error(ErrorCode::kDimension, "rig must be V x 3");
  std::vector<Vec3> p;
  for (std::size_t r = 0; r < m.rows(); ++r) p.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return CameraRig::normalized(p);
}

RetrievalRun make_run(const Array& q, std::vector<std::size_t> ql, const Array& g, std::vector<std::size_t> gl) {
  RetrievalRun run{to_matrix(q), std::move(ql), to_matrix(g), std::move(gl)};
  run.validate();
  return run;
}

py::dict table_dict(const MetricTable& t) {
  py::dict d;
  const auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) d[py::str(MetricTable::columns()[i])] = v[i];
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-view hierarchical graph encoder: training, encoding and retrieval metrics";

  py::register_exception<Error>(m, "MvhgnnError", PyExc_RuntimeError);

  m.def("build_camera_rig", [](std::size_t v) { return to_array(build_camera_rig(v).as_matrix()); }, py::arg("views"));
  m.def("cosine_lr", &cosine_lr, py::arg("epoch"), py::arg("total"), py::arg("lr_start"), py::arg("lr_end"));

  m.def(
      "generate_dataset",
      [](const std::string& out, std::size_t classes, std::size_t per_class, std::size_t sketches_per_class,
         std::size_t views, std::size_t dim, double noise, std::uint64_t seed) {
        SynthConfig c;
        c.class_count = classes;
        c.per_class = per_class;
        c.sketches_per_class = sketches_per_class;
        c.views = views;
        c.feature_dim = c.sketch_dim = c.proto_dim = dim;
        c.sketch_noise = noise;
        c.seed = seed;
        save_dataset(out, generate_dataset(c));
      },
      py::arg("out"), py::arg("classes") = 8, py::arg("per_class") = 30, py::arg("sketches_per_class") = 20,
      py::arg("views") = 12, py::arg("dim") = 64, py::arg("noise") = 0.1, py::arg("seed") = 0,
      "Write a synthetic dataset directory (shapes.mvhf, sketches.mvhf, prototypes.mvhf).");

  m.def(
      "train",
      [](const std::string& config_text) {
        const RunConfig cfg = parse_run_config(config_text);
        run_training(cfg);
        return (cfg.out / "model.mvhf").string();
      },
      py::arg("config"), "Run a training job from `key = value` config text; returns the checkpoint path.");

  m.def(
      "encode",
      [](const std::string& ckpt, const std::string& in, const std::string& out, const std::string& splits,
         const std::string& role) {
        std::optional<std::vector<std::size_t>> rows;
        if (!splits.empty()) {
          const SplitRoles r = read_splits(splits);
          if (role == "query") rows = r.query;
          else if (role == "gallery") rows = r.gallery;
          else throw Error(ErrorCode::kConfig, "role must be query or gallery");
        }
        write_archive(out, encode_items(load_checkpoint(ckpt), read_archive(in), rows));
      },
      py::arg("ckpt"), py::arg("input"), py::arg("out"), py::arg("splits") = "", py::arg("role") = "");

  m.def(
      "read_archive",
      [](const std::string& path) {
        const FeatureArchive a = read_archive(path);
        py::dict tensors;
        for (const auto& [name, t] : a.tensors) {
          std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
          py::array_t<float> arr(shape);
          std::copy(t.values.begin(), t.values.end(), arr.mutable_data());
          tensors[py::str(name)] = arr;
        }
        return py::make_tuple(tensors, a.labels);
      },
      py::arg("path"), "Returns (tensors by name, labels sidecar as {item_id: class}).");

  m.def(
      "write_archive",
      [](const std::string& path, const std::vector<std::pair<std::string, py::array_t<float, py::array::c_style | py::array::forcecast>>>& tensors,
         const std::vector<std::string>& labels) {
        FeatureArchive a;
        for (const auto& [name, arr] : tensors) {
          Tensor t;
          for (py::ssize_t i = 0; i < arr.ndim(); ++i) t.dims.push_back(static_cast<std::uint32_t>(arr.shape(i)));
          t.values.assign(arr.data(), arr.data() + arr.size());
          a.add(name, std::move(t));
        }
        if (!labels.empty()) a.set_item_labels(labels);
        write_archive(path, a);
      },
      py::arg("path"), py::arg("tensors"), py::arg("labels") = std::vector<std::string>{},
      "Write named float32 tensors (list of (name, array)) and optional per-row class labels.");

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"))
      .def("save", [](const Model& self, const std::string& path) { save_checkpoint(path, self); }, py::arg("path"))
      .def_property_readonly("classes", [](const Model& self) { return self.classes; })
      .def_property_readonly("out_dim", [](const Model& self) { return self.encoder.out_dim; })
      .def(
          "embed_shape",
          [](const Model& self, const Array& views, const Array& rig) {
            return to_array(encode_shape(ViewSet{to_matrix(views), to_rig(rig)}, self.params, self.encoder).vector);
          },
          py::arg("views"), py::arg("rig"), "Embed one V x d view-feature matrix taken from cameras `rig` (V x 3).")
      .def(
          "embed_sketches", [](const Model& self, const Array& x) { return to_array(embed_sketches(self, to_matrix(x))); },
          py::arg("sketches"));

  m.def(
      "rank_gallery",
      [](const Array& q, std::vector<std::size_t> ql, const Array& g, std::vector<std::size_t> gl) {
        return rank_gallery(make_run(q, std::move(ql), g, std::move(gl)));
      },
      py::arg("queries"), py::arg("query_labels"), py::arg("gallery"), py::arg("gallery_labels"));
  m.def(
      "compute_metrics",
      [](const Array& q, std::vector<std::size_t> ql, const Array& g, std::vector<std::size_t> gl) {
        return table_dict(compute_metrics(make_run(q, std::move(ql), g, std::move(gl))));
      },
      py::arg("queries"), py::arg("query_labels"), py::arg("gallery"), py::arg("gallery_labels"),
      "NN FT ST nDCG E MRR mAP, in percent.");
  m.def(
      "margin_statistic", [](const Array& e, const std::vector<std::size_t>& labels) {
        return margin_statistic(to_matrix(e), labels);
      },
      py::arg("embeddings"), py::arg("labels"));

  m.def(
      "gradcheck",
      [](const std::string& module, int seeds) {
        py::list out;
        for (const auto& c : run_gradcheck_suite(module, seeds)) {
          py::dict d;
          d["name"] = c.name;
          d["worst_error"] = c.worst_error;
          d["passed"] = c.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("module") = "all", py::arg("seeds") = 20);
}
