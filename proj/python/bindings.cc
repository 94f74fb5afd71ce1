// Copyright 2026 The Textmark Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Python bindings: numeric kernels, material generation, black-box
// verification against a Python callable, and the run commands.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <functional>
#include <string>
#include <vector>

#include "textmark/common.h"
#include "textmark/material.h"
#include "textmark/run.h"
#include "textmark/training.h"
#include "textmark/verification.h"

namespace py = pybind11;

namespace textmark {
namespace {

class CallableClient : public QueryClient {
 public:
  explicit CallableClient(std::function<int(const std::string&)> fn)
      : fn_(std::move(fn)) {}
  int Query(const std::string& text) override { return fn_(text); }

 private:
  std::function<int(const std::string&)> fn_;
};

std::vector<uint8_t> Bytes(const py::bytes& b) {
  std::string s = b;
  return std::vector<uint8_t>(s.begin(), s.end());
}

py::dict ReportDict(const VerificationReport& r) {
  return py::module_::import("json").attr("loads")(r.ToJson().dump());
}

RunConfig LoadConfig(const std::string& path) { return RunConfig::Load(path); }

}  // namespace
}  // namespace textmark

PYBIND11_MODULE(_textmark, m) {
  using namespace textmark;
  m.doc() = "Dual-channel watermarking for text classifiers";

  py::register_exception<IntegrityError>(m, "IntegrityError");
  py::register_exception<ParseError>(m, "ParseError");
  py::register_exception<ShapeError>(m, "ShapeError");
  py::register_exception<Error>(m, "TextmarkError");

  m.def("cross_entropy", [](const std::vector<double>& logits, int label) {
    return CrossEntropy(logits, label);
  });
  m.def("wm_regularizer",
        [](const std::vector<double>& w, const std::vector<double>& s,
           const std::vector<uint8_t>& b) { return WmRegularizer(w, s, b); });
  m.def("step_f", &StepF);
  m.def(
      "extract_delta",
      [](const std::vector<double>& w, const std::vector<double>& s,
         const std::vector<uint8_t>& b, const std::string& mode) {
        if (mode != "selected_only" && mode != "literal") {
          throw Error("mode must be selected_only or literal");
        }
        return ExtractDelta(w, s, b,
                            mode == "literal" ? DeltaMode::kLiteral
                                              : DeltaMode::kSelectedOnly);
      },
      py::arg("w"), py::arg("s"), py::arg("kappa2"),
      py::arg("mode") = "selected_only");

  m.def("compute_digest", [](const py::bytes& kappa1, const std::string& info) {
    return ComputeDigest(Bytes(kappa1), info).Rendered();
  });
  m.def(
      "generate_keys",
      [](int rows, int cols, double density, uint64_t seed) {
        WatermarkKeys k = GenerateKeys({rows, cols}, density, seed);
        py::dict d;
        d["S"] = k.s;
        d["kappa2"] = k.kappa2;
        d["shape"] = py::make_tuple(k.rows, k.cols);
        d["fingerprint"] = k.Fingerprint();
        return d;
      },
      py::arg("rows"), py::arg("cols"), py::arg("density") = 0.5,
      py::arg("owner_seed") = 0);
  m.def("make_corpus_files", &MakeCorpusFiles, py::arg("kind"),
        py::arg("seed"), py::arg("n_train"), py::arg("n_test"),
        py::arg("n_extra"), py::arg("out_dir"));
  m.def("write_key_file", [](const std::string& path, uint64_t seed) {
    WriteKeyFile(path, GenerateKappa1(seed));
  });

  m.def(
      "verify_blackbox",
      [](const std::function<int(const std::string&)>& query,
         const std::string& triggers_jsonl, double epsilon) {
        CallableClient client(query);
        return ReportDict(
            VerifyBlackbox(client, TriggerSet::FromJsonl(triggers_jsonl),
                           epsilon));
      },
      py::arg("query"), py::arg("triggers_jsonl"),
      py::arg("epsilon") = kBlackboxEpsilon,
      "Queries `query(text) -> label` for every trigger.");

  m.def("train_clean",
        [](const std::string& cfg) { return CmdTrainClean(LoadConfig(cfg)); });
  m.def("gen_material",
        [](const std::string& cfg) { return CmdGenMaterial(LoadConfig(cfg)); });
  m.def("embed",
        [](const std::string& cfg) { return CmdEmbed(LoadConfig(cfg)); });
  m.def(
      "verify",
      [](const std::string& cfg, const std::string& channel,
         const std::string& suspect) {
        VerifyOptions options;
        options.channel = channel;
        options.suspect = suspect;
        VerificationReport report;
        int code = CmdVerify(LoadConfig(cfg), options, &report);
        return py::make_tuple(code, ReportDict(report));
      },
      py::arg("config"), py::arg("channel") = "blackbox",
      py::arg("suspect") = "");
  m.def(
      "attack",
      [](const std::string& cfg, const std::string& attack) {
        return CmdAttack(LoadConfig(cfg), attack);
      },
      py::arg("config"), py::arg("attack") = "all");
  m.def("conceal",
        [](const std::string& cfg) { return CmdConceal(LoadConfig(cfg)); });
  m.def("report", &CmdReport, py::arg("run_dir"));
}
