#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "isd/checkpoint.hpp"
#include "isd/cli.hpp"
#include "isd/errors.hpp"
#include "isd/experiments.hpp"

namespace py = pybind11;
using namespace isd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a, bool requires_grad = false) {
  if (a.ndim() != 1 && a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()), requires_grad);
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Array grad_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.grad().begin(), t.grad().end(), out.mutable_data());
  return out;
}

/// Loss value and gradient with respect to the student-side argument.
template <typename F>
py::tuple value_and_grad(const Array& student, F loss_of) {
  auto s = to_tensor(student, true);
  const auto loss = loss_of(s);
  loss.backward();
  return py::make_tuple(loss.item(), grad_array(s));
}

EmbeddingTable table(const Array& rows, const std::vector<int>& labels) {
  if (rows.ndim() != 2) throw DimensionError("embeddings must be 2-D");
  if (static_cast<std::size_t>(rows.shape(0)) != labels.size()) throw DimensionError("one label per row");
  return EmbeddingTable::from_rows(std::span<const double>(rows.data(), rows.size()),
                                   static_cast<std::size_t>(rows.shape(1)), labels);
}

py::tuple dataset_arrays(const LabeledDataset& ds) {
  Array x({static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(ds.dim)});
  std::copy(ds.samples.begin(), ds.samples.end(), x.mutable_data());
  py::array_t<int> y(static_cast<py::ssize_t>(ds.size()));
  std::copy(ds.labels.begin(), ds.labels.end(), y.mutable_data());
  return py::make_tuple(x, y);
}

py::dict metrics_row(const StepMetrics& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["step"] = m.step;
  d["loss"] = m.loss;
  d["h_pt"] = m.h_pt;
  d["lr"] = m.lr;
  d["teacher_knn"] = m.teacher_knn ? py::cast(*m.teacher_knn) : py::none();
  d["student_knn"] = m.student_knn ? py::cast(*m.student_knn) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_isdlab, m) {
  m.doc() = "Iterative similarity distillation: losses, anchor bank, training and evaluation";

  auto base = py::register_exception<Error>(m, "IsdError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<LengthError>(m, "LengthError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<EmptyBankError>(m, "EmptyBankError", base.ptr());
  py::register_exception<NumericDomainError>(m, "NumericDomainError", base.ptr());

  m.def(
      "anchor_distribution",
      [](const Array& q, const Array& anchors, double tau) {
        return to_array(anchor_distribution(to_tensor(q), to_tensor(anchors), tau));
      },
      py::arg("queries"), py::arg("anchors"), py::arg("temperature"));
  m.def(
      "isd_loss",
      [](const Array& t, const Array& s, const Array& anchors, double tau) {
        return value_and_grad(s, [&](const Tensor& st) { return isd_loss(to_tensor(t), st, to_tensor(anchors), tau); });
      },
      py::arg("teacher"), py::arg("student"), py::arg("anchors"), py::arg("temperature"),
      "(loss, d loss / d student)");
  m.def(
      "isd_kl_loss",
      [](const Array& t, const Array& s, const Array& anchors, double tau) {
        return value_and_grad(
            s, [&](const Tensor& st) { return isd_kl_loss(to_tensor(t), st, to_tensor(anchors), tau); });
      },
      py::arg("teacher"), py::arg("student"), py::arg("anchors"), py::arg("temperature"));
  m.def(
      "moco_loss",
      [](const Array& q, const Array& pos, const Array& anchors, double tau) {
        return value_and_grad(q, [&](const Tensor& qt) { return moco_loss(qt, to_tensor(pos), to_tensor(anchors), tau); });
      },
      py::arg("query"), py::arg("positive"), py::arg("anchors"), py::arg("temperature"));
  m.def(
      "byol_loss",
      [](const Array& pred, const Array& target) {
        return value_and_grad(pred, [&](const Tensor& p) { return byol_loss(p, to_tensor(target)); });
      },
      py::arg("student_pred"), py::arg("teacher_embedding"));
  m.def(
      "mean_entropy", [](const Array& p) { return mean_entropy(to_tensor(p)); }, py::arg("distribution"));

  py::class_<AnchorBank>(m, "AnchorBank")
      .def(py::init<std::size_t, std::size_t, bool>(), py::arg("capacity"), py::arg("dim"),
           py::arg("check_norms") = true)
      .def("enqueue", [](AnchorBank& b, const Array& rows) { b.enqueue(to_tensor(rows)); })
      .def("snapshot", [](const AnchorBank& b) { return to_array(b.snapshot()); })
      .def_property_readonly("capacity", &AnchorBank::capacity)
      .def_property_readonly("dim", &AnchorBank::dim)
      .def_property_readonly("count", &AnchorBank::count)
      .def_property_readonly("total_enqueued", &AnchorBank::total_enqueued)
      .def("__len__", &AnchorBank::count);

  m.def(
      "gaussian_mixture",
      [](int classes, std::size_t per_class, std::size_t dim, double sep, std::uint64_t seed, bool eval) {
        return dataset_arrays(
            gen_gaussian_mixture({classes, per_class, dim, sep}, seed, eval ? Split::eval : Split::train));
      },
      py::arg("classes") = 3, py::arg("per_class") = 200, py::arg("dim") = 32, py::arg("sep") = 6.0,
      py::arg("seed") = 0, py::arg("eval") = false, "(X, y) with X of shape [classes * per_class, dim]");
  m.def(
      "load_idx", [](const std::string& images, const std::string& labels) { return dataset_arrays(load_idx(images, labels)); },
      py::arg("images"), py::arg("labels"));

  m.def(
      "knn_eval",
      [](const Array& memory, const std::vector<int>& memory_labels, const Array& queries,
         const std::vector<int>& query_labels, std::size_t k) {
        return knn_eval(table(memory, memory_labels), table(queries, query_labels), k);
      },
      py::arg("memory"), py::arg("memory_labels"), py::arg("queries"), py::arg("query_labels"),
      py::arg("k") = kDefaultKnnK, "cosine k-NN accuracy; rows are normalized first");
  m.def(
      "recall_at_k",
      [](const Array& rows, const std::vector<int>& labels, const std::vector<std::size_t>& ks) {
        return recall_at_k(table(rows, labels), ks);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("ks"));

  m.def(
      "parse_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        return serialize_run_config(parse_run_config(text, overrides));
      },
      py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
      "Resolved config text with every key, after applying `key=value` overrides");

  m.def(
      "train",
      [](const std::string& config_text, const std::vector<std::string>& overrides,
         const std::optional<std::string>& checkpoint) {
        const auto config = parse_run_config(config_text, overrides);
        const auto data = load_datasets(config.data);
        TrainResult result = [&] {
          py::gil_scoped_release release;
          return train(config.train, data.train, data.eval ? &*data.eval : nullptr);
        }();
        if (checkpoint) save_checkpoint(result.state, *checkpoint);
        py::list rows;
        for (const auto& s : result.metrics) rows.append(metrics_row(s));
        return rows;
      },
      py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("checkpoint") = py::none(),
      "Trains from config text; returns one dict per step and optionally writes a checkpoint");

  m.def(
      "embed_checkpoint",
      [](const std::string& path, const Array& x, bool teacher) {
        const auto state = load_checkpoint(path);
        const auto& enc = teacher ? state.model.teacher_encoder : state.model.student_encoder;
        return to_array(mlp_forward(enc, to_tensor(x)));
      },
      py::arg("checkpoint"), py::arg("x"), py::arg("teacher") = true);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the isd command line in-process; returns (exit_code, stdout, stderr)");
}
