#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "tscl/augment.hpp"
#include "tscl/commands.hpp"
#include "tscl/config.hpp"
#include "tscl/data.hpp"
#include "tscl/error.hpp"
#include "tscl/eval.hpp"
#include "tscl/train.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace tscl;

namespace {

// An empty std::filesystem::path round-trips through pathlib as ".", so optional
// output paths are taken as None.

// JSON results cross the boundary as Python objects via the json module.
py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

RunConfig config_from(const std::string& ini) { return RunConfig::parse(ini); }

py::dict dataset_to_python(const Dataset& ds) {
  const auto shape = ds.shape();
  py::array_t<double> values({shape.n, shape.n_ts, shape.t, shape.c});
  auto v = values.mutable_unchecked<4>();
  for (std::size_t i = 0; i < shape.n; ++i)
    for (std::size_t j = 0; j < shape.n_ts; ++j) {
      const auto& m = ds[i].series[j].values();
      for (std::size_t t = 0; t < shape.t; ++t)
        for (std::size_t c = 0; c < shape.c; ++c)
          v(i, j, t, c) = m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
    }
  py::dict out;
  out["values"] = values;
  out["labels"] = ds.has_labels() ? py::cast(ds.labels()) : py::none();
  out["n_classes"] = ds.n_classes();
  return out;
}

}  // namespace

PYBIND11_MODULE(_tscl, m) {
  m.doc() = "Bindings for the tscl core library";

  static py::exception<Error> base(m, "TsclError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<IoError> io_error(m, "IoError", base.ptr());
  static py::exception<NumericalError> numerical_error(m, "NumericalError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const IoError& e) {
      py::set_error(io_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "upsample",
      [](const SeriesMatrix& x, Eigen::Index t_up) {
        return augment::upsample(TimeSeries(x), t_up).values();
      },
      py::arg("series"), py::arg("t_up"), "Linear upsampling of a (T, C) array to t_up steps.");

  m.def(
      "resampling_pair",
      [](const SeriesMatrix& x, std::uint64_t seed) {
        RngStream rng(seed, 0);
        const TimeSeries s(x);
        auto [a, b] = augment::resampling_pair(
            s, augment::ResamplingConfig::defaults(s.length()), rng);
        return std::pair{a.values(), b.values()};
      },
      py::arg("series"), py::arg("seed"),
      "Two disjoint resampled views of a (T, C) array with default sizes.");

  m.def(
      "metrics",
      [](const std::vector<std::vector<std::uint64_t>>& counts) {
        eval::ConfusionMatrix cm(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) {
          if (counts[i].size() != counts.size())
            throw ArgumentError("confusion matrix must be square");
          for (std::size_t j = 0; j < counts.size(); ++j) cm.at(i, j) = counts[i][j];
        }
        const auto r = eval::metrics(cm);
        py::dict out;
        out["overall_accuracy"] = r.overall_accuracy;
        out["kappa"] = r.kappa;
        out["macro_f1"] = r.macro_f1;
        return out;
      },
      py::arg("confusion"), "OA, kappa and macro-F1 of a confusion matrix (rows are truth).");

  m.def(
      "one_cycle_lr",
      [](std::size_t step, std::size_t total_steps) {
        train::TrainConfig cfg;
        cfg.total_steps = total_steps;
        return train::one_cycle_lr(step, cfg);
      },
      py::arg("step"), py::arg("total_steps") = 2000);

  m.def(
      "load_dataset", [](const fs::path& p) { return dataset_to_python(load_dataset(p)); },
      py::arg("path"), "Read a dataset file into values (n, n_ts, t, c) and labels.");

  m.def(
      "synth",
      [](const std::string& ini, const std::optional<fs::path>& out, bool force) {
        return to_python(commands::synth(config_from(ini), out.value_or(fs::path()), force));
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("force") = false,
      "Generate the dataset splits described by INI text.");
  m.def(
      "pretrain",
      [](const std::string& ini, const std::optional<fs::path>& out, bool force) {
        py::gil_scoped_release release;
        const auto r = commands::pretrain(config_from(ini), out.value_or(fs::path()), force);
        py::gil_scoped_acquire acquire;
        return to_python(r);
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("force") = false);
  m.def(
      "evaluate",
      [](const std::string& ini, const fs::path& checkpoint, const std::string& mode) {
        return to_python(commands::evaluate(config_from(ini), checkpoint, mode, {}, false));
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("mode") = "linear");
  m.def(
      "report", [](const fs::path& dir) { return to_python(commands::report(dir)); },
      py::arg("dir"));
}
