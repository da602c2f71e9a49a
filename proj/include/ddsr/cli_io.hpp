// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command layer: config files, metrics stream, run manifest and the five
// commands (synth, run, fuse, eval, ablate). Commands throw; run_cli maps
// exceptions to exit codes and prints a final status line.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ddsr/benchmark.hpp"
#include "ddsr/config.hpp"
#include "ddsr/fusion.hpp"
#include "ddsr/pipeline.hpp"

namespace ddsr {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kMetricsSchemaVersion = 1;

enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
  kExitIo = 5,
};

json config_to_json(const PipelineConfig& cfg);
// Keys absent from `j` keep their value from `base`. Unknown keys are a config_error.
PipelineConfig config_from_json(const json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);

json to_json(const FusionReport& r);
json to_json(const LossBreakdown& b);
json to_json(const MetricsRecord& m);
json to_json(const AblationRow& r);

json teacher_to_json(const SyntheticBayesTeacher& t);
SyntheticBayesTeacher teacher_from_json(const json& j);

json benchmark_to_json(const BenchmarkParams& p, std::uint64_t seed, const Benchmark& b);
// Teachers come from the explicit blocks, so hand-edited files are honoured.
struct BenchmarkFile {
  BenchmarkParams params;
  std::uint64_t seed = 0;
  SyntheticBayesTeacher teacher_b;
  SyntheticBayesTeacher teacher_c;
};
BenchmarkFile load_benchmark(const std::filesystem::path& path);

struct RunManifest {
  json config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // role, path
};
json to_json(const RunManifest& m);

// ---------------------------------------------------------------------------

struct SynthOptions {
  BenchmarkParams params;
  std::uint64_t seed = 0;
  std::filesystem::path out = "bench";
};
// Writes target.csv, source.csv, benchmark.json, teacher_b.csv, teacher_c.csv.
void cmd_synth(const SynthOptions& o, std::ostream& log);

struct RunOptions {
  PipelineConfig config;
  std::filesystem::path data;
  std::optional<std::filesystem::path> benchmark;  // synthetic teachers
  std::optional<std::filesystem::path> teacher_b;  // file-backed teachers
  std::optional<std::filesystem::path> teacher_c;
  std::filesystem::path out = "run";
  bool plot = false;
};
// Outputs in `out`: manifest.json, metrics.ndjson, fused_epoch1.csv,
// stage_one.ckpt, final.ckpt (full runs), predictions.csv, plot/*.dat.
PipelineResult cmd_run(const RunOptions& o, std::ostream& log);

struct FuseOptions {
  std::filesystem::path teacher_b;
  std::filesystem::path teacher_c;
  double threshold = kDefaultGuThreshold;
  std::optional<double> clip_weight;
  std::filesystem::path out = "fused.csv";
  std::optional<std::filesystem::path> report;
};
FusionReport cmd_fuse(const FuseOptions& o, std::ostream& log);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::optional<std::filesystem::path> out;
  unsigned threads = 1;
};
double cmd_eval(const EvalOptions& o, std::ostream& log);

struct AblateOptions {
  RunOptions run;
  AblationAxis axis;
};
// Writes ablation.json and ablation.dat into run.out.
std::vector<AblationRow> cmd_ablate(const AblateOptions& o, std::ostream& log);

// Full command line, argv[0] excluded. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ddsr
