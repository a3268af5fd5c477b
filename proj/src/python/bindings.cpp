#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "etcon/consolidate/reward.hpp"
#include "etcon/consolidate/grpo.hpp"
#include "etcon/harness/report.hpp"
#include "etcon/harness/run.hpp"
#include "etcon/io.hpp"

namespace py = pybind11;
using namespace etcon;

namespace {

// Models and vocabularies travel together in the bindings.
struct LoadedModel {
  lm::ModelState model;
  lm::Vocab vocab;
};

LoadedModel load_model(const std::string& checkpoint, const std::string& vocab_path) {
  return {lm::ModelState::load(checkpoint), lm::Vocab::from_json(nlohmann::json::parse(io::read_file(vocab_path)))};
}

std::string answer(const LoadedModel& m, const std::string& question, std::size_t max_new_tokens) {
  lm::DecodeParams dp;
  dp.temperature = 0.0;
  dp.max_new_tokens = max_new_tokens;
  const auto g = lm::generate(m.model, m.vocab.encode(data::eval_prompt(question)), dp);
  return m.vocab.decode(g.tokens);
}

std::string run(const std::string& config, const std::string& run_dir, const std::vector<std::string>& overrides,
                bool fresh, std::size_t stop_after) {
  const auto cfg = harness::load_config(config, overrides);
  harness::RunOptions opt;
  opt.resume = !fresh;
  opt.stop_after = stop_after;
  py::gil_scoped_release nogil;
  const auto s = harness::run_sequential(cfg, run_dir, opt);
  nlohmann::json out = {{"checkpoints", s.checkpoints}, {"complete", s.complete}, {"metrics", s.metrics}};
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "edit-then-consolidate lab";

  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<harness::RunAborted>(m, "RunAborted");

  m.def("grade", [](const std::string& q, const std::string& gold, const std::string& predicted) {
    const auto v = judge::grade(q, gold, predicted);
    return py::make_tuple(judge::to_string(v.grade), judge::to_string(v.reason));
  }, py::arg("question"), py::arg("gold"), py::arg("predicted"));

  m.def("extract", [](const std::string& text) -> py::object {
    const auto ex = judge::extract_candidate(text);
    py::dict d;
    d["status"] = judge::to_string(ex.status);
    d["candidate"] = ex.candidate ? py::cast(*ex.candidate) : py::none();
    d["fallback"] = ex.fallback;
    d["self_correction"] = ex.self_correction;
    return d;
  });

  m.def("normalize", [](const std::string& s) { return judge::normalize(s); });

  m.def("rewards_json", [](const std::string& question, const std::string& gold, const std::string& text,
                           const std::string& old_answer, std::size_t length, bool truncated) {
    consolidate::RewardInput in{question, gold, old_answer, text, length, truncated};
    return consolidate::compute_rewards(in).to_json().dump();
  }, py::arg("question"), py::arg("gold"), py::arg("text"), py::arg("old_answer") = "", py::arg("length") = 0,
     py::arg("truncated") = false);

  m.def("group_advantages", [](const std::vector<double>& r) { return consolidate::group_advantages(r); });

  m.def("default_config_json", [] { return harness::default_config().dump(); });
  m.def("effective_config_json", [](const std::string& path, const std::vector<std::string>& overrides) {
    return harness::load_config(path, overrides).snapshot.dump();
  }, py::arg("path") = "", py::arg("overrides") = std::vector<std::string>{});

  m.def("run_json", &run, py::arg("config"), py::arg("run_dir"), py::arg("overrides") = std::vector<std::string>{},
        py::arg("fresh") = false, py::arg("stop_after") = 0);
  m.def("write_report", [](const std::string& run_dir) { harness::write_report(run_dir); });

  py::class_<LoadedModel>(m, "Model")
      .def_static("load", &load_model, py::arg("checkpoint"), py::arg("vocab"))
      .def("answer", &answer, py::arg("question"), py::arg("max_new_tokens") = 64)
      .def_property_readonly("parameter_count", [](const LoadedModel& lm) { return lm.model.parameter_count(); })
      .def_property_readonly("vocab_size", [](const LoadedModel& lm) { return lm.vocab.size(); });
}
