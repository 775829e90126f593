#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hybridbench/assemble.hpp"
#include "hybridbench/config.hpp"
#include "hybridbench/corpus.hpp"
#include "hybridbench/distract.hpp"
#include "hybridbench/error.hpp"
#include "hybridbench/evaluate.hpp"
#include "hybridbench/pipeline.hpp"
#include "hybridbench/score.hpp"

namespace py = pybind11;
using namespace hybridbench;

namespace {

// Structured values cross the boundary as JSON text; the Python package
// decodes them.
std::string stage_result_json(const StageResult& r) {
  Json j;
  j["stage"] = to_string(r.stage);
  j["executed"] = r.executed;
  j["outputs"] = r.outputs;
  j["notes"] = r.notes;
  return j.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the hybrid-question benchmark builder";

  auto base = py::register_exception<Error>(m, "HybridbenchError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<CorpusError>(m, "CorpusError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<CapabilityError>(m, "CapabilityError", base.ptr());
  py::register_exception<ProviderError>(m, "ProviderError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  m.def("parse_corpus_json",
        [](const std::string& text, const std::string& document) {
          auto parsed = parse_corpus(text, document);
          Json j;
          j["items"] = Json::array();
          for (const auto& item : parsed.items) j["items"].push_back(to_json(item));
          j["diagnostics"] = Json::array();
          for (const auto& d : parsed.diagnostics) {
            j["diagnostics"].push_back({{"offset", d.offset}, {"message", d.message}});
          }
          return j.dump();
        },
        py::arg("text"), py::arg("document") = "<corpus>");

  m.def("normalize_fingerprint", [](const std::string& s) { return normalize_fingerprint(s); });

  m.def("extract_picks",
        [](const std::string& response, int n, int mm) -> std::optional<std::vector<std::string>> {
          auto p = extract_picks(response, n, mm);
          if (!p) return std::nullopt;
          return std::vector<std::string>(p->begin(), p->end());
        },
        py::arg("response"), py::arg("n"), py::arg("m"));

  m.def("loose_score",
        [](std::optional<std::set<std::string>> picks, const std::set<std::string>& truth,
           int mm) { return loose_score(picks, truth, mm); },
        py::arg("picks"), py::arg("truth"), py::arg("m"));
  m.def("tight_score",
        [](std::optional<std::set<std::string>> picks, const std::set<std::string>& truth) {
          return tight_score(picks, truth);
        },
        py::arg("picks"), py::arg("truth"));
  m.def("guess_baseline", &guess_baseline, py::arg("m"), py::arg("n"));
  m.def("weighted_mcq_scores",
        [](const std::vector<int>& counts) { return weighted_mcq_scores(counts); },
        py::arg("option_counts"));

  m.def("option_perplexity",
        [](const std::vector<double>& logprobs) {
          TokenScore s;
          s.logprobs = logprobs;
          return option_perplexity(s);
        },
        py::arg("logprobs"));
  m.def("choose_lowest",
        [](const std::vector<double>& values) {
          const Choice c = choose_lowest(values);
          return py::make_tuple(c.index, c.tie);
        },
        py::arg("perplexities"));

  m.def("load_config_json",
        [](const std::filesystem::path& path) { return to_json(load_config(path)).dump(); });
  m.def("config_hash",
        [](const std::filesystem::path& path) { return config_hash(load_config(path)); });

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const std::filesystem::path& config, const std::filesystem::path& run_dir,
                       std::optional<std::string> mock_script) {
             return std::make_unique<Pipeline>(load_config(config), run_dir,
                                               std::move(mock_script));
           }),
           py::arg("config"), py::arg("run_dir"), py::arg("mock_script") = std::nullopt)
      .def("run_stage_json",
           [](Pipeline& p, const std::string& stage, bool force) {
             py::gil_scoped_release release;
             return stage_result_json(p.run_stage(parse_stage(stage), force));
           },
           py::arg("stage"), py::arg("force") = false)
      .def("run_all_json",
           [](Pipeline& p) {
             py::gil_scoped_release release;
             std::string out = "[";
             for (const auto& r : p.run_all()) {
               if (out.size() > 1) out += ",";
               out += stage_result_json(r);
             }
             return out + "]";
           })
      .def("export_public",
           [](Pipeline& p, std::optional<std::filesystem::path> out) {
             return p.export_public(out);
           },
           py::arg("out") = std::nullopt)
      .def_property_readonly("run_dir", &Pipeline::run_dir);

  py::list stages;
  for (Stage s : kAllStages) stages.append(std::string(to_string(s)));
  m.attr("STAGES") = py::tuple(stages);
}
