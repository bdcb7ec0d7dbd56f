#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "rulesmith/cli.hpp"
#include "rulesmith/error.hpp"
#include "rulesmith/mcts.hpp"
#include "rulesmith/metrics.hpp"
#include "rulesmith/predicate.hpp"
#include "rulesmith/rulebase.hpp"
#include "rulesmith/text.hpp"

namespace py = pybind11;
using namespace rulesmith;

PYBIND11_MODULE(_core, m) {
  m.doc() = "rulesmith native core";
  py::register_exception<Error>(m, "RulesmithError", PyExc_RuntimeError);

  m.def("normalize", [](const std::string& s) { return text::normalize(s); }, py::arg("text"));

  m.def(
      "canonical_predicate", [](const std::string& s) { return render_predicate(parse_predicate(s)); },
      py::arg("text"));

  m.def(
      "weighted_f1",
      [](const std::vector<std::string>& gold, const std::vector<std::string>& pred,
         const std::vector<std::string>& labels) { return weighted_f1(gold, pred, labels); },
      py::arg("gold"), py::arg("pred"), py::arg("labels"));

  m.def(
      "uct_score",
      [](double total_value, std::size_t visits, std::size_t parent_visits, double exploration) {
        SearchNode node;
        node.total_value = total_value;
        node.visits = visits;
        return uct_score(node, parent_visits, exploration);
      },
      py::arg("total_value"), py::arg("visits"), py::arg("parent_visits"), py::arg("exploration") = std::sqrt(2.0));

  m.def(
      "evaluate_files",
      [](const std::string& predictions, const std::string& gold, const std::string& labels) {
        const auto taxonomy = load_taxonomy(labels);
        const auto samples = load_dataset(gold, taxonomy);
        const auto preds = load_predictions(predictions);
        return report_to_json(evaluate(preds, samples, taxonomy)).dump();
      },
      py::arg("predictions"), py::arg("gold"), py::arg("labels"));

  m.def(
      "load_rulebase_json", [](const std::string& path) { return rulebase_to_json(load_rulebase(path)).dump(); },
      py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int status;
        {
          py::gil_scoped_release release;
          status = run_cli(args, out, err);
        }
        return py::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"));
}
