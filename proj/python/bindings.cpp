#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mas3/commands.hpp"
#include "mas3/error.hpp"

namespace py = pybind11;
using namespace mas3;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Tensor::Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Tensor to_matrix(const Array& a, const char* what) {
  if (a.ndim() == 1) {
    return Tensor({static_cast<std::size_t>(a.shape(0)), 1},
                  std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw InvalidInput(std::string(what) + ": expected an n x dim array");
  return to_tensor(a);
}

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.raw(), t.raw() + t.size(), out.mutable_data());
  return out;
}

py::array_t<int> labels_to_numpy(const std::vector<int>& labels, const Tensor& images) {
  py::array_t<int> out({images.extent(0), images.extent(1), images.extent(2)});
  std::copy(labels.begin(), labels.end(), out.mutable_data());
  return out;
}

py::dict dataset_dict(const LabeledDataset& d) {
  py::dict out;
  out["images"] = to_numpy(d.images);
  out["labels"] = labels_to_numpy(d.labels, d.images);
  out["num_classes"] = d.num_classes;
  return out;
}

Json parse_config(const std::string& text) {
  try {
    return text.empty() ? Json::object() : Json::parse(text);
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_mas3, m) {
  m.doc() = "mas3 core: transport distances, GMM fitting and the adaptation pipeline";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto validation = py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<InvalidInput>(m, "InvalidInput", validation.ptr());
  py::register_exception<UnsupportedInstance>(m, "UnsupportedInstance", validation.ptr());
  py::register_exception<CorruptFile>(m, "CorruptFile", error.ptr());
  py::register_exception<SamplingStarvation>(m, "SamplingStarvation", error.ptr());
  py::register_exception<DegenerateClass>(m, "DegenerateClass", error.ptr());
  py::register_exception<Divergence>(m, "Divergence", error.ptr());

  m.attr("REPORT_SCHEMA") = kReportSchema;

  m.def(
      "wasserstein_1d",
      [](const Array& a, const Array& b, int order) {
        return wasserstein_1d(std::span(a.data(), a.size()), std::span(b.data(), b.size()), order);
      },
      py::arg("a"), py::arg("b"), py::arg("order") = 2);

  m.def(
      "exact_wasserstein",
      [](const Array& p, const Array& q, int order) {
        return exact_wasserstein(PointSet(to_matrix(p, "p")), PointSet(to_matrix(q, "q")), order);
      },
      py::arg("p"), py::arg("q"), py::arg("order") = 2);

  m.def(
      "sliced_wasserstein",
      [](const Array& p, const Array& q, std::size_t projections, int order, std::uint64_t seed) {
        return sliced_wasserstein(PointSet(to_matrix(p, "p")), PointSet(to_matrix(q, "q")),
                                  SwdConfig{projections, order, seed});
      },
      py::arg("p"), py::arg("q"), py::arg("projections") = 100, py::arg("order") = 2,
      py::arg("seed") = 0);

  m.def(
      "miou",
      [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& counts) {
        if (counts.ndim() != 2 || counts.shape(0) != counts.shape(1)) {
          throw InvalidInput("miou: confusion matrix must be K x K");
        }
        const auto k = static_cast<std::size_t>(counts.shape(0));
        const auto r = miou(ConfusionMatrix::from_counts(
            k, std::vector<std::uint64_t>(counts.data(), counts.data() + counts.size())));
        return py::make_tuple(r.mean, r.per_class);
      },
      py::arg("confusion"), "Mean IoU and per-class IoU (None for absent classes).");

  m.def(
      "fit_mixture",
      [](const Array& points, std::size_t components, std::uint64_t seed, std::size_t max_iterations,
         double tolerance, double covariance_floor, std::size_t restarts) {
        EmConfig cfg;
        cfg.components = components;
        cfg.seed = seed;
        cfg.max_iterations = max_iterations;
        cfg.tolerance = tolerance;
        cfg.covariance_floor = covariance_floor;
        cfg.restarts = restarts;
        Rng rng(seed);
        const ClassMixture mix = fit_mixture_em(to_matrix(points, "points"), cfg, rng);
        py::list means, covs;
        for (const auto& mu : mix.means) means.append(to_numpy(mu));
        for (const auto& c : mix.covariances) covs.append(to_numpy(c));
        py::dict out;
        out["weights"] = mix.weights;
        out["means"] = means;
        out["covariances"] = covs;
        out["log_likelihood_trace"] = mix.log_likelihood_trace;
        return out;
      },
      py::arg("points"), py::arg("components") = 3, py::arg("seed") = 0,
      py::arg("max_iterations") = 100, py::arg("tolerance") = 1e-6,
      py::arg("covariance_floor") = 1e-6, py::arg("restarts") = 3);

  m.def(
      "generate_domain_pair",
      [](const std::string& config_json) {
        const RunConfig cfg = run_config_from_json(parse_config(config_json));
        const DomainPair pair = generate_domain_pair(cfg.spec, cfg.n_source, cfg.n_target);
        py::dict out;
        out["source"] = dataset_dict(pair.source);
        out["target"] = dataset_dict(pair.target);
        out["separability"] = pair.separability;
        out["warnings"] = pair.warnings;
        return out;
      },
      py::arg("config_json") = "");

  m.def(
      "config_json",
      [](const std::string& config_json) {
        return run_config_to_json(run_config_from_json(parse_config(config_json), command_keys()))
            .dump();
      },
      py::arg("config_json") = "", "Complete config with defaults filled in, as JSON.");

  m.def("command_names", [] {
    std::vector<std::string> names;
    for (const auto& c : command_table()) names.push_back(c.name);
    return names;
  });

  m.def(
      "run_command",
      [](const std::string& name, const std::string& config_json, const std::string& out_dir) {
        CommandResult r;
        const Json flat = parse_config(config_json);
        {
          py::gil_scoped_release release;
          r = run_command(name, flat, out_dir);
        }
        return py::make_tuple(r.summary.dump(), r.exit_code);
      },
      py::arg("name"), py::arg("config_json"), py::arg("out_dir"),
      "Runs a pipeline command; returns (summary JSON, exit code).");
}
