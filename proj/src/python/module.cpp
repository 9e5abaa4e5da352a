// Python bindings. Long-running calls release the GIL.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <memory>

#include "cqr/affinity.h"
#include "cqr/eval.h"
#include "cqr/graph.h"
#include "cqr/link_prediction.h"
#include "cqr/log_io.h"
#include "cqr/retrieval.h"
#include "cqr/stages.h"
#include "cqr/text.h"

namespace py = pybind11;
using namespace cqr;

namespace {

// Settings values may be str, int, float or bool; they go through the same
// parser as config files.
PipelineConfig make_config(const std::filesystem::path& work_dir, const py::dict& settings) {
  PipelineConfig c;
  if (!work_dir.empty()) c.work_dir = work_dir;
  for (const auto& [k, v] : settings) {
    const auto key = py::str(k).cast<std::string>();
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::float_>(v)) {
      value = format_double(v.cast<double>());
    } else {
      value = py::str(v).cast<std::string>();
    }
    if (!set_config_item(c, key, value)) throw py::key_error("unknown config key '" + key + "'");
  }
  c.validate();
  return c.resolved();
}

py::dict candidate_dict(const RewriteCandidate& c) {
  py::dict d;
  d["utterance"] = c.utterance;
  d["rewrite_target"] = c.rewrite_target ? py::cast(*c.rewrite_target) : py::none();
  d["source_user_id"] = c.source_user_id;
  d["source_entity_id"] = c.source_entity_id;
  d["entity_class"] = std::string(to_string(c.entity_class));
  d["hop"] = c.hop;
  d["impression"] = c.signals.impression;
  d["defect_rate"] = c.signals.defect_rate;
  d["unique_path_count"] = c.affinity.unique_path_count;
  d["path_impression_sum"] = c.affinity.path_impression_sum;
  d["degree_difference"] = c.affinity.degree_difference;
  d["neighborhood_jaccard_distance"] = c.affinity.neighborhood_jaccard_distance;
  d["affinity_impression"] = c.affinity.affinity_impression;
  return d;
}

py::list candidate_list(const std::vector<RewriteCandidate>& cs) {
  py::list out;
  for (const auto& c : cs) out.append(candidate_dict(c));
  return out;
}

std::vector<LogRecord> read_log(const std::filesystem::path& path) { return parse_log_file(path).records; }

IndexMode mode_of(const std::string& name) { return parse_index_mode(name); }

}  // namespace

PYBIND11_MODULE(_cqr, m) {
  m.doc() = "Collaborative query rewriting core";

  m.def("normalize_utterance", [](const std::string& s) { return normalize_utterance(s); });
  m.def("normalized_edit_distance",
        [](const std::string& a, const std::string& b) { return normalized_edit_distance(a, b); });
  m.def("token_set_jaccard", [](const std::string& a, const std::string& b) { return token_set_jaccard(a, b); });

  m.def("encode",
        [](const std::string& text, std::size_t dimension, std::uint64_t seed) {
          return HashingEncoder({dimension, seed}).encode(text).values;
        },
        py::arg("text"), py::arg("dimension") = kDefaultEmbeddingDim, py::arg("seed") = kDefaultHashSeed);
  m.def("similarity",
        [](const std::string& a, const std::string& b) {
          const HashingEncoder enc;
          return cosine(enc.encode(a), enc.encode(b));
        },
        "Cosine similarity of two utterances under the default encoder.");

  m.def("config_items",
        [](const std::filesystem::path& work_dir, const py::dict& settings) {
          return config_items(make_config(work_dir, settings));
        },
        py::arg("work_dir") = std::filesystem::path{}, py::arg("settings") = py::dict());

  // Pipeline stages: each takes the work directory and optional settings.
  auto stage = [&m](const char* name, auto fn, const char* doc) {
    m.def(
        name,
        [fn](const std::filesystem::path& work_dir, const py::dict& settings) {
          const auto c = make_config(work_dir, settings);
          py::gil_scoped_release unlock;
          return fn(c);
        },
        py::arg("work_dir"), py::arg("settings") = py::dict(), doc);
  };
  stage("synth", [](const PipelineConfig& c) { return synth_stage(c); }, "Generate the synthetic world and logs.");
  stage("build_graph", [](const PipelineConfig& c) { return build_graph_stage(c); }, "Build the history graph.");
  stage("export_finetune", [](const PipelineConfig& c) { return export_finetune_stage(c); },
        "Write fine-tuning examples.");

  m.def(
      "predict_links",
      [](const std::filesystem::path& work_dir, const py::dict& settings, bool export_requests) {
        const auto c = make_config(work_dir, settings);
        py::gil_scoped_release unlock;
        return predict_links_stage(c, export_requests);
      },
      py::arg("work_dir"), py::arg("settings") = py::dict(), py::arg("export_requests") = false);
  m.def(
      "build_index",
      [](const std::filesystem::path& work_dir, const py::dict& settings, const std::string& mode,
         std::optional<std::size_t> cap, const std::filesystem::path& predictions) {
        const auto c = make_config(work_dir, settings);
        const auto md = mode_of(mode);
        const std::size_t n = cap ? *cap : (md == IndexMode::kTraversal ? c.traversal_cap : c.prediction_cap);
        py::gil_scoped_release unlock;
        return build_index_stage(c, md, n, predictions);
      },
      py::arg("work_dir"), py::arg("settings") = py::dict(), py::arg("mode") = "cooccurrence",
      py::arg("cap") = py::none(), py::arg("predictions") = std::filesystem::path{});
  m.def(
      "evaluate",
      [](const std::filesystem::path& work_dir, const py::dict& settings, bool coverage, bool metrics,
         const std::string& format) {
        const auto c = make_config(work_dir, settings);
        if (format != "table" && format != "jsonl") throw py::value_error("format must be 'table' or 'jsonl'");
        const auto f = format == "table" ? ReportFormat::kTable : ReportFormat::kJsonl;
        py::gil_scoped_release unlock;
        return evaluate_stage(c, coverage, metrics, f).report;
      },
      py::arg("work_dir"), py::arg("settings") = py::dict(), py::arg("coverage") = true, py::arg("metrics") = true,
      py::arg("format") = "jsonl");

  py::class_<RewriteService>(m, "RewriteService")
      .def(py::init([](const std::filesystem::path& work_dir, const py::dict& settings) {
             const auto c = make_config(work_dir, settings);
             py::gil_scoped_release unlock;
             return std::make_unique<RewriteService>(c);
           }),
           py::arg("work_dir"), py::arg("settings") = py::dict())
      .def("answer",
           [](const RewriteService& s, const std::string& user_id, const std::string& query) {
             RewriteReply r;
             {
               py::gil_scoped_release unlock;
               r = s.answer(user_id, query);
             }
             py::dict d;
             d["triggered"] = r.triggered;
             d["rewrite"] = r.rewrite;
             d["score"] = r.score;
             return d;
           })
      .def_property_readonly("default_weights_used", &RewriteService::default_weights_used);

  py::class_<Fig, std::shared_ptr<Fig>>(m, "Graph")
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<Fig>(load_graph_file(p)); })
      .def_static("from_log", [](const std::filesystem::path& p) { return std::make_shared<Fig>(build_graph(read_log(p))); })
      .def("save", [](const Fig& g, const std::filesystem::path& p) { save_graph_file(p, g); })
      .def_property_readonly("num_users", &Fig::num_users)
      .def_property_readonly("num_entities", &Fig::num_entities)
      .def_property_readonly("num_edges", &Fig::num_edges)
      .def("users", [](const Fig& g) { return std::vector<std::string>(g.users().begin(), g.users().end()); })
      .def("history_index",
           [](const Fig& g, const std::string& user, std::size_t cap) {
             return candidate_list(build_user_history_index(g, user, cap).entries);
           },
           py::arg("user_id"), py::arg("cap") = kDefaultHistoryCap)
      .def("collect_candidates",
           [](const Fig& g, const std::string& user) { return candidate_list(collect_candidates(g, user)); })
      .def("collaborative_index",
           [](const Fig& g, const std::string& user, const std::string& mode, std::size_t cap) {
             return candidate_list(build_collaborative_index(g, user, mode_of(mode), cap).entries);
           },
           py::arg("user_id"), py::arg("mode") = "traversal", py::arg("cap") = kTraversalOnlyCap)
      .def("n_hop_entities", [](const Fig& g, const std::string& user, int n) {
        return n_hop_affinity_entities(g, user, n);
      });

  m.def("mine_opportunity_pairs", [](const std::filesystem::path& log_path) {
    py::list out;
    for (const auto& p : mine_opportunity_pairs(read_log(log_path))) {
      py::dict d;
      d["user_id"] = p.user_id;
      d["session_id"] = p.session_id;
      d["timestamp"] = p.timestamp;
      d["defective_utterance"] = p.defective_utterance;
      d["rewrite_label"] = p.rewrite_label;
      d["label_entity_id"] = p.label_entity_id;
      out.append(d);
    }
    return out;
  });

  // Interchange with an external link predictor.
  m.def("read_prediction_requests", [](const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    py::list out;
    for (const auto& r : read_predictions_request(in)) {
      py::dict d;
      d["user_id"] = r.user_id;
      d["domain"] = std::string(to_string(r.domain));
      d["history"] = r.history;
      out.append(d);
    }
    return out;
  });
  m.def("write_prediction_response",
        [](const std::filesystem::path& path,
           const std::vector<std::tuple<std::string, std::string, std::vector<std::string>>>& lines) {
          std::vector<std::pair<std::string, PredictedNames>> rows;
          for (const auto& [user, domain, names] : lines) rows.push_back({user, {parse_domain(domain), names}});
          std::ofstream out(path);
          if (!out) throw std::runtime_error("cannot write " + path.string());
          write_predictions_response(out, rows);
        },
        py::arg("path"), py::arg("lines"), "lines: (user_id, domain, [names]) tuples");
  m.def("read_predictions", [](const std::filesystem::path& path) {
    const auto f = read_predictions_file(path);
    py::dict by_user;
    for (const auto& [user, rows] : f.by_user) {
      py::list l;
      for (const auto& r : rows) l.append(py::make_tuple(std::string(to_string(r.domain)), r.names));
      by_user[py::str(user)] = l;
    }
    py::list rejects;
    for (const auto& r : f.rejects) rejects.append(py::make_tuple(r.line_number, r.reason));
    return py::make_tuple(by_user, rejects);
  });

  py::register_exception<MissingArtifact>(m, "MissingArtifact", PyExc_FileNotFoundError);
}
