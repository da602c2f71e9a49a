// SPDX-License-Identifier: Apache-2.0
#include "ddsr/cli_io.hpp"

#include <fstream>
#include <map>
#include <ostream>

#include "ddsr/errors.hpp"
#include "ddsr/formats.hpp"

namespace ddsr {
namespace fs = std::filesystem;

namespace {

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw config_error("config key '" + key + "' has the wrong type");
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot write " + path.string());
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
  if (!f) throw io_error("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw io_error("cannot create directory " + dir.string());
}

void require_input(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw invalid_input(std::string(what) + " not found: " + p.string());
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) throw invalid_input(key + ": expected a non-empty array of rows");
  const std::size_t cols = j[0].size();
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw invalid_input(key + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

struct Teachers {
  TeacherOracle b;
  PromptedTeacher c;
};

Teachers load_teachers(const RunOptions& o, std::size_t classes) {
  if (o.benchmark) {
    BenchmarkFile bf = load_benchmark(*o.benchmark);
    return {TeacherOracle{bf.teacher_b}, PromptedTeacher(bf.teacher_c, o.config.prompt_lr)};
  }
  FileTeacher b = load_file_teacher(*o.teacher_b, classes);
  FileTeacher c = load_file_teacher(*o.teacher_c, classes);
  return {TeacherOracle{std::move(b)}, PromptedTeacher(std::move(c), o.config.prompt_lr)};
}

void check_teacher_source(const RunOptions& o) {
  const bool files = o.teacher_b || o.teacher_c;
  if (o.benchmark && files) throw config_error("give either --benchmark or --teacher-b/--teacher-c, not both");
  if (!o.benchmark && !(o.teacher_b && o.teacher_c))
    throw config_error("teachers required: --benchmark, or both --teacher-b and --teacher-c");
  require_input(o.data, "dataset");
  if (o.benchmark) require_input(*o.benchmark, "benchmark file");
  if (o.teacher_b) require_input(*o.teacher_b, "teacher_b predictions");
  if (o.teacher_c) require_input(*o.teacher_c, "teacher_c predictions");
}

std::vector<std::pair<std::string, std::string>> input_digests(const RunOptions& o) {
  std::vector<std::pair<std::string, std::string>> d;
  d.emplace_back(o.data.string(), file_digest(o.data));
  if (o.benchmark) d.emplace_back(o.benchmark->string(), file_digest(*o.benchmark));
  if (o.teacher_b) d.emplace_back(o.teacher_b->string(), file_digest(*o.teacher_b));
  if (o.teacher_c) d.emplace_back(o.teacher_c->string(), file_digest(*o.teacher_c));
  return d;
}

void write_plot_series(const fs::path& dir, const std::vector<MetricsRecord>& metrics) {
  ensure_dir(dir);
  const std::vector<std::pair<std::string, double LossBreakdown::*>> losses = {
      {"loss_total", &LossBreakdown::total}, {"loss_kd", &LossBreakdown::kd},   {"loss_mix", &LossBreakdown::mix},
      {"loss_im", &LossBreakdown::im},       {"loss_od", &LossBreakdown::od},   {"loss_wg", &LossBreakdown::wg},
      {"loss_cm", &LossBreakdown::cm},       {"loss_self", &LossBreakdown::self_ce}};
  for (const auto& [name, field] : losses) {
    std::string text = "# epoch " + name + "\n";
    for (const auto& m : metrics) text += std::to_string(m.epoch) + " " + format_double(m.loss.*field) + "\n";
    write_text(dir / (name + ".dat"), text);
  }
  std::string gu = "# epoch gu_of_target\n", acc = "# epoch target_accuracy\n";
  bool any_acc = false;
  for (const auto& m : metrics) {
    gu += std::to_string(m.epoch) + " " + format_double(m.gu_of_target) + "\n";
    if (m.target_accuracy) {
      any_acc = true;
      acc += std::to_string(m.epoch) + " " + format_double(*m.target_accuracy) + "\n";
    }
  }
  write_text(dir / "gu_of_target.dat", gu);
  if (any_acc) write_text(dir / "target_accuracy.dat", acc);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

json config_to_json(const PipelineConfig& c) {
  json j;
  j["total_epochs"] = c.total_epochs;
  j["stage_one_epochs"] = c.stage_one_epochs;
  j["batch_size"] = c.batch_size;
  j["epsilon"] = c.epsilon;
  j["zeta"] = c.zeta;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["gu_threshold"] = c.gu_threshold;
  j["prompt_period"] = c.prompt_period;
  j["prompt_steps"] = c.prompt_steps;
  j["prompt_lr"] = c.prompt_lr;
  j["lr0"] = c.lr0;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  j["fusion_schedule"] = to_string(c.fusion_schedule);
  j["wg_form"] = to_string(c.wg_form);
  j["prototype_mode"] = to_string(c.prototype_mode);
  j["stage"] = to_string(c.stage);
  j["ablate"] = c.ablation.disabled();
  j["fixed_clip_weight"] = c.fixed_clip_weight ? json(*c.fixed_clip_weight) : json(nullptr);
  j["hidden"] = c.hidden;
  j["activation"] = to_string(c.activation);
  j["threads"] = c.threads;
  return j;
}

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  if (!j.is_object()) throw config_error("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "total_epochs") c.total_epochs = get_as<int>(v, key);
    else if (key == "stage_one_epochs") c.stage_one_epochs = get_as<int>(v, key);
    else if (key == "batch_size") c.batch_size = get_as<std::size_t>(v, key);
    else if (key == "epsilon") c.epsilon = get_as<double>(v, key);
    else if (key == "zeta") c.zeta = get_as<double>(v, key);
    else if (key == "beta") c.beta = get_as<double>(v, key);
    else if (key == "gamma") c.gamma = get_as<double>(v, key);
    else if (key == "gu_threshold") c.gu_threshold = get_as<double>(v, key);
    else if (key == "prompt_period") c.prompt_period = get_as<int>(v, key);
    else if (key == "prompt_steps") c.prompt_steps = get_as<int>(v, key);
    else if (key == "prompt_lr") c.prompt_lr = get_as<double>(v, key);
    else if (key == "lr0") c.lr0 = get_as<double>(v, key);
    else if (key == "momentum") c.momentum = get_as<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = get_as<double>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "fusion_schedule") c.fusion_schedule = fusion_schedule_from_string(get_as<std::string>(v, key));
    else if (key == "wg_form") {
      try {
        c.wg_form = wg_form_from_string(get_as<std::string>(v, key));
      } catch (const invalid_input& e) {
        throw config_error(e.what());
      }
    } else if (key == "prototype_mode") c.prototype_mode = prototype_mode_from_string(get_as<std::string>(v, key));
    else if (key == "stage") c.stage = stage_mode_from_string(get_as<std::string>(v, key));
    else if (key == "ablate") {
      c.ablation = AblationSwitches{};
      for (const auto& name : get_as<std::vector<std::string>>(v, key)) c.ablation.disable(name);
    } else if (key == "fixed_clip_weight") {
      if (v.is_null()) c.fixed_clip_weight.reset();
      else c.fixed_clip_weight = get_as<double>(v, key);
    } else if (key == "hidden") c.hidden = get_as<std::vector<std::size_t>>(v, key);
    else if (key == "activation") {
      try {
        c.activation = activation_from_string(get_as<std::string>(v, key));
      } catch (const invalid_input& e) {
        throw config_error(e.what());
      }
    } else if (key == "threads") c.threads = get_as<unsigned>(v, key);
    else throw config_error("unknown config key '" + key + "'");
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw config_error(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Records

json to_json(const FusionReport& r) {
  return {{"iu_b", r.iu_b},       {"iu_c", r.iu_c},   {"gu_b", r.gu_b},           {"gu_c", r.gu_c},
          {"delta_gu", r.delta_gu}, {"alpha", r.alpha}, {"threshold", r.threshold}, {"branch", to_string(r.branch)},
          {"weight_c", r.weight_c}};
}

json to_json(const LossBreakdown& b) {
  return {{"kd", b.kd}, {"mix", b.mix}, {"im", b.im},     {"dt", b.dt},           {"od", b.od},
          {"wg", b.wg}, {"sr", b.sr},   {"cm", b.cm},     {"self", b.self_ce}, {"total", b.total}};
}

json to_json(const MetricsRecord& m) {
  json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["epoch"] = m.epoch;
  j["stage"] = m.stage;
  j["loss"] = to_json(m.loss);
  if (m.fusion) j["fusion"] = to_json(*m.fusion);
  if (m.target_accuracy) j["target_accuracy"] = *m.target_accuracy;
  j["gu_of_target"] = m.gu_of_target;
  if (m.stage == 1) j["prompt_bias"] = m.prompt_bias;
  if (m.stage == 2) j["empty_prototypes"] = m.empty_prototypes;
  j["max_abs_od"] = m.max_abs_od;
  j["max_abs_wg"] = m.max_abs_wg;
  return j;
}

json to_json(const AblationRow& r) {
  return {{"axis", r.axis},
          {"label", r.label},
          {"value", r.value},
          {"stage_one_accuracy", r.stage_one_accuracy},
          {"final_accuracy", r.final_accuracy},
          {"gu_of_target", r.gu_of_target},
          {"max_abs_od", r.max_abs_od},
          {"max_abs_wg", r.max_abs_wg}};
}

json teacher_to_json(const SyntheticBayesTeacher& t) {
  return {{"class_means", matrix_to_json(t.class_means)},
          {"cov_scale", t.cov_scale},
          {"temperature", t.temperature},
          {"label_bias", t.label_bias}};
}

SyntheticBayesTeacher teacher_from_json(const json& j) {
  try {
    SyntheticBayesTeacher t;
    t.class_means = matrix_from_json(j.at("class_means"), "class_means");
    t.cov_scale = j.at("cov_scale").get<double>();
    t.temperature = j.at("temperature").get<double>();
    t.label_bias = j.at("label_bias").get<std::vector<double>>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw invalid_input(std::string("teacher block: ") + e.what());
  }
}

json benchmark_to_json(const BenchmarkParams& p, std::uint64_t seed, const Benchmark& b) {
  json params = {{"classes", p.classes},   {"dim", p.dim},         {"radius", p.radius},
                 {"noise", p.noise},       {"angle", p.angle},     {"n_target", p.n_target},
                 {"n_source", p.n_source}, {"b_bias", p.b_bias},   {"c_track", p.c_track},
                 {"c_bias", p.c_bias},     {"c_temperature", p.c_temperature}};
  return {{"format", "ddsr-benchmark"},
          {"version", 1},
          {"seed", seed},
          {"params", params},
          {"target_means", matrix_to_json(b.pair.target.class_means)},
          {"teacher_b", teacher_to_json(b.teacher_b)},
          {"teacher_c", teacher_to_json(b.teacher_c)}};
}

BenchmarkFile load_benchmark(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw invalid_input("cannot read benchmark file " + path.string());
  try {
    const json j = json::parse(f);
    if (j.value("format", "") != "ddsr-benchmark") throw invalid_input(path.string() + ": not a benchmark file");
    BenchmarkFile out;
    const json& p = j.at("params");
    out.params.classes = p.at("classes").get<std::size_t>();
    out.params.dim = p.at("dim").get<std::size_t>();
    out.params.radius = p.at("radius").get<double>();
    out.params.noise = p.at("noise").get<double>();
    out.params.angle = p.at("angle").get<double>();
    out.params.n_target = p.at("n_target").get<std::size_t>();
    out.params.n_source = p.at("n_source").get<std::size_t>();
    out.params.b_bias = p.at("b_bias").get<double>();
    out.params.c_track = p.at("c_track").get<double>();
    out.params.c_bias = p.at("c_bias").get<double>();
    out.params.c_temperature = p.at("c_temperature").get<double>();
    out.seed = j.at("seed").get<std::uint64_t>();
    out.teacher_b = teacher_from_json(j.at("teacher_b"));
    out.teacher_c = teacher_from_json(j.at("teacher_c"));
    return out;
  } catch (const json::exception& e) {
    throw invalid_input(path.string() + ": " + e.what());
  }
}

json to_json(const RunManifest& m) {
  json inputs = json::array(), outputs = json::object();
  for (const auto& [path, digest] : m.inputs) inputs.push_back({{"path", path}, {"sha256", digest}});
  for (const auto& [role, path] : m.outputs) outputs[role] = path;
  return {{"format", "ddsr-manifest"},
          {"tool_version", kToolVersion},
          {"metrics_schema_version", kMetricsSchemaVersion},
          {"config", m.config},
          {"seeds", {{"pipeline", m.seed}}},
          {"inputs", inputs},
          {"outputs", outputs}};
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const SynthOptions& o, std::ostream& log) {
  const Benchmark b = make_benchmark(o.params, o.seed);
  const Dataset target = generate(b.pair);
  const Dataset source = generate_source(b.pair);
  ensure_dir(o.out);
  write_dataset(o.out / "target.csv", target, true);
  write_dataset(o.out / "source.csv", source, true);
  write_text(o.out / "benchmark.json", benchmark_to_json(o.params, o.seed, b).dump(2) + "\n");
  write_prediction_matrix(o.out / "teacher_b.csv", query(b.teacher_b, target));
  write_prediction_matrix(o.out / "teacher_c.csv", query(PromptedTeacher(b.teacher_c, 0.0), target));
  log << "wrote " << target.size() << " target and " << source.size() << " source samples to " << o.out.string()
      << "\n";
}

PipelineResult cmd_run(const RunOptions& o, std::ostream& log) {
  o.config.validate();
  check_teacher_source(o);
  const Dataset data = read_dataset(o.data);
  Teachers t = load_teachers(o, data.class_count);
  // Surface id coverage problems before anything is written.
  query(t.b, data);
  query(t.c, data);

  ensure_dir(o.out);
  RunManifest manifest{config_to_json(o.config), o.config.seed, input_digests(o), {}};
  manifest.outputs = {{"metrics", (o.out / "metrics.ndjson").string()},
                      {"fused_epoch1", (o.out / "fused_epoch1.csv").string()},
                      {"stage_one_checkpoint", (o.out / "stage_one.ckpt").string()},
                      {"predictions", (o.out / "predictions.csv").string()}};
  if (o.config.stage == StageMode::full) manifest.outputs.emplace_back("final_checkpoint", (o.out / "final.ckpt").string());
  if (o.plot) manifest.outputs.emplace_back("plot_dir", (o.out / "plot").string());
  write_text(o.out / "manifest.json", to_json(manifest).dump(2) + "\n");

  auto metrics = open_out(o.out / "metrics.ndjson");
  PipelineResult r = run_pipeline(o.config, data, t.b, t.c, [&](const MetricsRecord& m) {
    metrics << to_json(m).dump() << "\n";
    metrics.flush();
    log << "epoch " << m.epoch << " stage " << m.stage << " loss " << format_double(m.loss.total);
    if (m.target_accuracy) log << " acc " << format_double(*m.target_accuracy);
    log << "\n";
  });
  if (!metrics) throw io_error("write failed: metrics.ndjson");

  write_prediction_matrix(o.out / "fused_epoch1.csv", r.stage_one.first_fusion);
  save_checkpoint(o.out / "stage_one.ckpt", r.stage_one_model);
  if (o.config.stage == StageMode::full) save_checkpoint(o.out / "final.ckpt", r.final_model);
  write_prediction_matrix(o.out / "predictions.csv", predict(r.final_model, data, o.config.threads));
  if (o.plot) write_plot_series(o.out / "plot", r.metrics);
  return r;
}

FusionReport cmd_fuse(const FuseOptions& o, std::ostream& log) {
  require_input(o.teacher_b, "teacher_b predictions");
  require_input(o.teacher_c, "teacher_c predictions");
  const PredictionMatrix yb = read_prediction_matrix(o.teacher_b);
  const PredictionMatrix yc = read_prediction_matrix(o.teacher_c, yb.class_count());
  if (yb.size() != yc.size()) throw invalid_input("prediction files cover different id sets");
  const FusionResult f = o.clip_weight ? fuse_fixed(yb, yc, *o.clip_weight) : fuse(yb, yc, o.threshold);
  write_prediction_matrix(o.out, f.labels);
  if (o.report) write_text(*o.report, to_json(f.report).dump(2) + "\n");
  log << to_json(f.report).dump() << "\n";
  return f.report;
}

double cmd_eval(const EvalOptions& o, std::ostream& log) {
  require_input(o.checkpoint, "checkpoint");
  require_input(o.data, "dataset");
  const NetworkWeights w = load_checkpoint(o.checkpoint);
  const Dataset data = read_dataset(o.data);
  if (w.layout.input_dim() != data.dim() || w.layout.class_count() != data.class_count)
    throw invalid_input("checkpoint shape does not match the dataset");
  const double acc = evaluate(w, data, o.threads);
  if (o.out)
    write_text(*o.out, json{{"accuracy", acc},
                            {"n", data.size()},
                            {"checkpoint_sha256", file_digest(o.checkpoint)},
                            {"data_sha256", file_digest(o.data)}}
                           .dump(2) +
                           "\n");
  log << "accuracy " << format_double(acc) << "\n";
  return acc;
}

std::vector<AblationRow> cmd_ablate(const AblateOptions& o, std::ostream& log) {
  o.run.config.validate();
  check_teacher_source(o.run);
  const Dataset data = read_dataset(o.run.data);
  Teachers t = load_teachers(o.run, data.class_count);
  ensure_dir(o.run.out);
  const auto rows = run_ablation_grid(o.run.config, o.axis, data, t.b, t.c);

  json table = json::array();
  std::string dat = "# value stage_one_accuracy final_accuracy gu_of_target max_abs_od max_abs_wg label\n";
  for (const auto& r : rows) {
    table.push_back(to_json(r));
    dat += format_double(r.value) + " " + format_double(r.stage_one_accuracy) + " " +
           format_double(r.final_accuracy) + " " + format_double(r.gu_of_target) + " " +
           format_double(r.max_abs_od) + " " + format_double(r.max_abs_wg) + " " + r.label + "\n";
    log << o.axis.name << "=" << r.label << " stage_one " << format_double(r.stage_one_accuracy) << " final "
        << format_double(r.final_accuracy) << "\n";
  }
  write_text(o.run.out / "ablation.json", table.dump(2) + "\n");
  write_text(o.run.out / "ablation.dat", dat);
  return rows;
}

}  // namespace ddsr
