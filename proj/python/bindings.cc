#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "commands.h"
#include "kaqa/anchoring.h"
#include "kaqa/checkpoint.h"
#include "kaqa/dataset.h"
#include "kaqa/json_io.h"
#include "kaqa/kg.h"
#include "kaqa/metrics.h"
#include "kaqa/ntd.h"
#include "kaqa/synthetic.h"
#include "kaqa/text.h"
#include "kaqa/trainer.h"

namespace py = pybind11;

namespace kaqa {
namespace {

// Query/title scoring with a trained matcher checkpoint.
class MatchSession {
 public:
  MatchSession(const KnowledgeGraph& kg, const AnchorConfig& config,
               std::optional<NtdModel> ntd, const std::filesystem::path& checkpoint)
      : kg_(kg),
        config_(config),
        ntd_(std::move(ntd)),
        loaded_(MatcherFromCheckpoint(LoadCheckpoint(checkpoint))) {}

  std::array<double, 3> Predict(const std::string& query, const std::string& title) const {
    return loaded_.model.Predict(Encode(query), Encode(title));
  }

 private:
  ChannelizedInput Encode(const std::string& text) const {
    const AnchorSet anchors = Anchor(text, kg_, ntd_ ? &*ntd_ : nullptr, config_);
    return EncodeChannels(text, anchors, loaded_.vocab, loaded_.entities,
                          loaded_.model.config().dims, loaded_.mode);
  }

  KnowledgeGraph kg_;
  AnchorConfig config_;
  std::optional<NtdModel> ntd_;
  LoadedMatcher loaded_;
};

std::string AnchorJson(const std::string& text, const KnowledgeGraph& kg,
                       const AnchorConfig& config, const NtdModel* ntd, bool explain) {
  const AnchorTrace trace = AnchorDetailed(text, kg, ntd, config);
  return (explain ? ExplainJson(trace, config.threshold) : AnchorSetToJson(trace.anchors))
      .dump();
}

}  // namespace
}  // namespace kaqa

PYBIND11_MODULE(_kaqa, m) {
  using namespace kaqa;
  m.doc() = "Knowledge-anchor FAQ matching: KG, anchoring and matchers";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  py::class_<KnowledgeGraph>(m, "KnowledgeGraph")
      .def("resolve_alias", &KnowledgeGraph::ResolveAlias, py::arg("surface"))
      .def("normalize", &KnowledgeGraph::Normalize, py::arg("id"))
      .def("component_ancestors", &KnowledgeGraph::ComponentAncestors, py::arg("id"))
      .def("canonical_name",
           [](const KnowledgeGraph& kg, EntityId id) { return kg.entity(id).canonical_name; })
      .def("stats", [](const KnowledgeGraph& kg) {
        const KgStats s = ComputeStats(kg);
        py::dict d;
        d["entities"] = s.entities;
        d["normalized_entities"] = s.normalized_entities;
        d["triples"] = s.triples;
        d["per_relation"] = s.per_relation;
        return d;
      });

  m.def("load_kg", &LoadKg, py::arg("entities"), py::arg("triples"));
  m.def("synthetic_kg", &SyntheticKg);

  py::class_<AnchorConfig>(m, "AnchorConfig")
      .def_readwrite("threshold", &AnchorConfig::threshold)
      .def_readwrite("rb_weight", &AnchorConfig::rb_weight)
      .def_readwrite("ntd_weight", &AnchorConfig::ntd_weight);
  m.def("load_anchor_config", &LoadAnchorConfig, py::arg("path"));

  py::class_<NtdModel>(m, "NtdModel").def_static("load", &NtdModel::Load, py::arg("path"));

  m.def(
      "tokenize",
      [](const std::string& text, const std::string& mode) {
        std::vector<std::tuple<std::string, std::size_t, std::size_t>> out;
        for (const TokenSpan& t : Tokenize(text, ParseTokenizerMode(mode))) {
          out.emplace_back(t.text, t.start, t.end);
        }
        return out;
      },
      py::arg("text"), py::arg("mode") = "whitespace");

  m.def(
      "anchor_json",
      [](const std::string& text, const KnowledgeGraph& kg, const AnchorConfig& config,
         const NtdModel* ntd, bool explain) { return AnchorJson(text, kg, config, ntd, explain); },
      py::arg("text"), py::arg("kg"), py::arg("config"), py::arg("ntd") = nullptr,
      py::arg("explain") = false);

  py::class_<MatchSession>(m, "MatchSession")
      .def(py::init<const KnowledgeGraph&, const AnchorConfig&, std::optional<NtdModel>,
                    const std::filesystem::path&>(),
           py::arg("kg"), py::arg("config"), py::arg("ntd"), py::arg("checkpoint"))
      .def("predict", &MatchSession::Predict, py::arg("query"), py::arg("title"));

  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return Auc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "split_sizes",
      [](std::size_t n) {
        const SplitSizes s = ComputeSplitSizes(n);
        return std::make_tuple(s.train, s.valid, s.test);
      },
      py::arg("n"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args, const std::string& input) {
        std::istringstream in(input);
        std::ostringstream out, err;
        const int code = cli::Run(args, in, out, err);
        return std::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), py::arg("input") = "");
}
