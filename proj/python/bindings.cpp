#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <map>
#include <memory>

#include "ecr/error.hpp"
#include "ecr/harness.hpp"
#include "ecr/losses.hpp"
#include "ecr/retrieval.hpp"
#include "ecr/stats.hpp"
#include "ecr/training.hpp"

namespace py = pybind11;
using namespace ecr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

// [N, L] float array plus optional labels. Labels are arbitrary integers,
// remapped to dense ids in ascending order.
Dataset to_dataset(const FloatArray& x, const std::vector<std::int64_t>& y) {
  if (x.ndim() != 2) throw ShapeError("expected a 2-D array of series, got " + std::to_string(x.ndim()) + "-D");
  Dataset d;
  const auto n = static_cast<std::size_t>(x.shape(0));
  d.length = static_cast<std::size_t>(x.shape(1));
  d.values.assign(x.data(), x.data() + n * d.length);
  std::vector<std::int64_t> classes = y;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (auto c : classes) d.class_names.push_back(std::to_string(c));
  if (y.empty()) {
    d.labels.assign(n, 0);
    d.class_names = {"0"};
  } else {
    if (y.size() != n) throw ShapeError(std::to_string(y.size()) + " labels for " + std::to_string(n) + " series");
    for (auto v : y)
      d.labels.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), v) - classes.begin()));
  }
  return d;
}

std::vector<std::int64_t> labels_of(const IntArray& y) {
  if (y.ndim() != 1) throw ShapeError("labels must be 1-D");
  return {y.data(), y.data() + y.size()};
}

// Test split labelled with the training class map; unknown labels become 0.
Dataset to_query_dataset(const FloatArray& x, const Dataset& train) {
  Dataset d = to_dataset(x, {});
  d.class_names = train.class_names;
  return d;
}

py::array_t<std::int64_t> original_labels(const std::vector<Prediction>& p, const Dataset& train) {
  py::array_t<std::int64_t> out(static_cast<py::ssize_t>(p.size()));
  auto o = out.mutable_unchecked<1>();
  for (std::size_t i = 0; i < p.size(); ++i)
    o(static_cast<py::ssize_t>(i)) = std::stoll(train.class_names[static_cast<std::size_t>(p[i].predicted)]);
  return out;
}

InferenceMode parse_inference(const std::string& s) {
  if (s == "ecr") return InferenceMode::Ecr;
  if (s == "cls-only") return InferenceMode::ClsOnly;
  if (s == "ret-only") return InferenceMode::RetOnly;
  if (s == "softmax") return InferenceMode::Softmax;
  throw ConfigError("unknown inference mode '" + s + "'");
}

py::array_t<double> to_numpy(const Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor<double> to_tensor(const DoubleArray& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  return Tensor<double>(s, std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<int> int_labels(const IntArray& y) {
  auto v = labels_of(y);
  return {v.begin(), v.end()};
}

py::tuple loss_tuple(const LossResult<double>& r) { return py::make_tuple(r.value, to_numpy(r.grad)); }

// A trained model and the training split it retrieves from.
struct Fitted {
  std::shared_ptr<EcrModel> model;
  Dataset train;
};

}  // namespace

PYBIND11_MODULE(_ecr, m) {
  m.doc() = "Classification + retrieval ensembles for univariate time series";

  auto base = py::register_exception<Error>(m, "EcrError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("lr_cls", &TrainConfig::lr_cls)
      .def_readwrite("lr_ret", &TrainConfig::lr_ret)
      .def_readwrite("margin", &TrainConfig::margin)
      .def_readwrite("classes_per_batch", &TrainConfig::classes_per_batch)
      .def_readwrite("samples_per_class", &TrainConfig::samples_per_class)
      .def_readwrite("plateau_factor", &TrainConfig::plateau_factor)
      .def_readwrite("plateau_patience", &TrainConfig::plateau_patience)
      .def_property(
          "block_channels", [](const TrainConfig& c) { return c.backbone.block_channels; },
          [](TrainConfig& c, std::vector<std::size_t> v) { c.backbone.block_channels = std::move(v); })
      .def_property(
          "kernel_sizes", [](const TrainConfig& c) { return c.backbone.kernel_sizes; },
          [](TrainConfig& c, std::vector<std::size_t> v) { c.backbone.kernel_sizes = std::move(v); })
      .def_property(
          "retrieval_loss",
          [](const TrainConfig& c) { return c.retrieval_loss == RetrievalLoss::Mean ? "triplet" : "hard"; },
          [](TrainConfig& c, const std::string& s) {
            if (s == "hard") c.retrieval_loss = RetrievalLoss::BatchHard;
            else if (s == "triplet") c.retrieval_loss = RetrievalLoss::Mean;
            else throw ConfigError("retrieval_loss must be 'hard' or 'triplet'");
          });

  py::class_<Fitted>(m, "Model")
      .def_property_readonly("classes",
                             [](const Fitted& f) {
                               std::vector<std::int64_t> out;
                               for (const auto& c : f.train.class_names) out.push_back(std::stoll(c));
                               return out;
                             })
      .def_property_readonly("best_epoch", [](const Fitted& f) { return f.model->best_epoch; })
      .def(
          "predict",
          [](Fitted& f, const FloatArray& x, const std::string& mode) {
            auto q = to_query_dataset(x, f.train);
            py::gil_scoped_release nogil;
            auto p = predict_dataset(*f.model, f.train, q, parse_inference(mode));
            py::gil_scoped_acquire gil;
            return original_labels(p, f.train);
          },
          py::arg("x"), py::arg("mode") = "ecr")
      .def(
          "embed",
          [](Fitted& f, const FloatArray& x, const std::string& branch) {
            auto q = to_query_dataset(x, f.train);
            auto& bb = branch == "ret" ? f.model->ret : f.model->cls;
            if (branch != "ret" && branch != "cls") throw ConfigError("branch must be 'cls' or 'ret'");
            auto e = embed(bb, q);
            py::array_t<float> out({static_cast<py::ssize_t>(e.dim(0)), static_cast<py::ssize_t>(e.dim(1))});
            std::copy(e.data().begin(), e.data().end(), out.mutable_data());
            return out;
          },
          py::arg("x"), py::arg("branch") = "cls")
      .def("save", [](Fitted& f, const std::string& path) { f.model->save(path); })
      .def_static(
          "load",
          [](const std::string& path, const FloatArray& x_train, const IntArray& y_train) {
            return Fitted{std::make_shared<EcrModel>(EcrModel::load(path)), to_dataset(x_train, labels_of(y_train))};
          },
          py::arg("path"), py::arg("x_train"), py::arg("y_train"));

  m.def(
      "fit",
      [](const FloatArray& x, const IntArray& y, const TrainConfig& config) {
        auto d = to_dataset(x, labels_of(y));
        TrainResult r = [&] {
          py::gil_scoped_release nogil;
          return train_ecr(d, config);
        }();
        py::list trace;
        for (const auto& e : r.trace)
          trace.append(py::dict(py::arg("epoch") = e.epoch, py::arg("cls_loss") = e.cls_loss,
                                py::arg("ret_loss") = e.ret_loss, py::arg("lr_cls") = e.lr_cls,
                                py::arg("lr_ret") = e.lr_ret));
        return py::make_tuple(Fitted{std::make_shared<EcrModel>(std::move(r.model)), std::move(d)}, trace, r.seconds);
      },
      py::arg("x"), py::arg("y"), py::arg("config") = TrainConfig{},
      "Trains one model; returns (model, per-epoch trace, seconds).");

  m.def(
      "ensemble_predict",
      [](std::vector<Fitted*> models, const FloatArray& x, bool vote, double temperature) {
        if (models.empty()) throw ShapeError("empty ensemble");
        const Dataset& train = models.front()->train;
        std::vector<EcrModel*> raw;
        for (auto* f : models) raw.push_back(f->model.get());
        auto q = to_query_dataset(x, train);
        auto p = ecrtime_predict_dataset(raw, train, q, vote ? EnsembleVoting::HardVote : EnsembleVoting::Probability,
                                         temperature);
        return original_labels(p, train);
      },
      py::arg("models"), py::arg("x"), py::arg("vote") = false, py::arg("temperature") = kDefaultTemperature);

  m.def(
      "euclidean_1nn",
      [](const FloatArray& x_train, const IntArray& y_train, const FloatArray& x_test) {
        auto train = to_dataset(x_train, labels_of(y_train));
        return original_labels(euclidean_1nn(train, to_query_dataset(x_test, train)), train);
      },
      py::arg("x_train"), py::arg("y_train"), py::arg("x_test"));

  m.def(
      "load_ucr",
      [](const std::string& path) {
        auto d = load_ucr_file(path);
        py::array_t<float> x({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.length)});
        std::copy(d.values.begin(), d.values.end(), x.mutable_data());
        return py::make_tuple(x, d.labels, d.class_names);
      },
      py::arg("path"), "Reads one UCR split; returns (X, dense labels, original class tokens).");

  m.def("cross_entropy", [](const DoubleArray& logits, const IntArray& y) {
    return loss_tuple(cross_entropy(to_tensor(logits), int_labels(y)));
  });
  m.def(
      "triplet_loss",
      [](const DoubleArray& e, const IntArray& y, double margin) {
        return loss_tuple(triplet_loss(to_tensor(e), int_labels(y), margin));
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 0.1);
  m.def(
      "hard_triplet_loss",
      [](const DoubleArray& e, const IntArray& y, double margin) {
        return loss_tuple(hard_triplet_loss(to_tensor(e), int_labels(y), margin));
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 0.1);

  m.def("fuse", [](std::vector<float> a, std::vector<float> b) { return ecr_fuse(a, b); });
  m.def("predict_1nn", [](std::vector<float> d, std::vector<int> labels) { return predict_1nn(d, labels); });
  m.def(
      "class_probabilities",
      [](std::vector<float> d, std::vector<int> labels, std::size_t classes, double temperature) {
        return class_probabilities(d, labels, classes, temperature);
      },
      py::arg("distances"), py::arg("labels"), py::arg("num_classes"), py::arg("temperature") = kDefaultTemperature);

  m.def(
      "mean_rank",
      [](const DoubleArray& acc) {
        if (acc.ndim() != 2) throw ShapeError("accuracy table must be 2-D (datasets x classifiers)");
        AccuracyTable t;
        const auto rows = static_cast<std::size_t>(acc.shape(0)), cols = static_cast<std::size_t>(acc.shape(1));
        for (std::size_t c = 0; c < cols; ++c) t.classifiers.push_back(std::to_string(c));
        for (std::size_t r = 0; r < rows; ++r) {
          t.datasets.push_back(std::to_string(r));
          t.values.emplace_back(acc.data() + r * cols, acc.data() + (r + 1) * cols);
        }
        return mean_rank(t).mean_ranks;
      },
      "Mean rank per column; rank 1 is the most accurate, ties share the average rank.");
  m.def("wilcoxon", [](std::vector<double> a, std::vector<double> b) {
    auto w = wilcoxon_signed_rank(a, b);
    return py::dict(py::arg("p_value") = w.p_value, py::arg("w_plus") = w.w_plus, py::arg("n") = w.n,
                    py::arg("exact") = w.exact, py::arg("degenerate") = w.degenerate);
  });
  m.def("holm", [](std::vector<double> p) { return holm_adjust(p); });
}
