// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "ddsr/cli_io.hpp"
#include "ddsr/errors.hpp"

namespace ddsr {
namespace {

// Flags mirroring every config key; unset flags leave the file's value alone.
struct ConfigFlags {
  std::optional<std::string> config_path;
  std::optional<int> total_epochs, stage_one_epochs, prompt_period, prompt_steps;
  std::optional<std::size_t> batch_size;
  std::optional<double> epsilon, zeta, beta, gamma, gu_threshold, prompt_lr, lr0, momentum, weight_decay, clip_weight;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> fusion_schedule, wg_form, prototype_mode, stage, activation, hidden;
  std::vector<std::string> ablate;
  std::optional<unsigned> threads;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON config file; flags override its keys");
    app.add_option("--epochs", total_epochs, "total epochs T");
    app.add_option("--stage-one-epochs", stage_one_epochs, "Stage One epochs T1");
    app.add_option("--batch-size", batch_size);
    app.add_option("--epsilon", epsilon, "weight of L_od");
    app.add_option("--zeta", zeta, "weight of L_wg");
    app.add_option("--beta", beta, "EMA coefficient");
    app.add_option("--gamma", gamma, "subnetwork width ratio");
    app.add_option("--gu-threshold", gu_threshold, "fusion branch threshold (nats)");
    app.add_option("--prompt-period", prompt_period);
    app.add_option("--prompt-steps", prompt_steps);
    app.add_option("--prompt-lr", prompt_lr);
    app.add_option("--lr", lr0);
    app.add_option("--momentum", momentum);
    app.add_option("--weight-decay", weight_decay);
    app.add_option("--seed", seed);
    app.add_option("--fusion-schedule", fusion_schedule, "on-prompt-refresh | every-epoch");
    app.add_option("--wg-form", wg_form, "cosine | one-minus-cosine");
    app.add_option("--prototype-mode", prototype_mode, "soft | hard");
    app.add_option("--stage", stage, "full | one-only");
    app.add_option("--ablate", ablate, "drop a loss: kd, mix, im, sr, self (repeatable)");
    app.add_option("--clip-weight", clip_weight, "fixed fusion weight on teacher_c");
    app.add_option("--hidden", hidden, "hidden widths, e.g. 64,32");
    app.add_option("--activation", activation, "relu | tanh");
    app.add_option("--threads", threads);
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path ? load_config(*config_path) : PipelineConfig{};
    json j = json::object();
    if (total_epochs) j["total_epochs"] = *total_epochs;
    if (stage_one_epochs) j["stage_one_epochs"] = *stage_one_epochs;
    if (batch_size) j["batch_size"] = *batch_size;
    if (epsilon) j["epsilon"] = *epsilon;
    if (zeta) j["zeta"] = *zeta;
    if (beta) j["beta"] = *beta;
    if (gamma) j["gamma"] = *gamma;
    if (gu_threshold) j["gu_threshold"] = *gu_threshold;
    if (prompt_period) j["prompt_period"] = *prompt_period;
    if (prompt_steps) j["prompt_steps"] = *prompt_steps;
    if (prompt_lr) j["prompt_lr"] = *prompt_lr;
    if (lr0) j["lr0"] = *lr0;
    if (momentum) j["momentum"] = *momentum;
    if (weight_decay) j["weight_decay"] = *weight_decay;
    if (seed) j["seed"] = *seed;
    if (fusion_schedule) j["fusion_schedule"] = *fusion_schedule;
    if (wg_form) j["wg_form"] = *wg_form;
    if (prototype_mode) j["prototype_mode"] = *prototype_mode;
    if (stage) j["stage"] = *stage;
    if (clip_weight) j["fixed_clip_weight"] = *clip_weight;
    if (activation) j["activation"] = *activation;
    if (threads) j["threads"] = *threads;
    if (hidden) {
      std::vector<std::size_t> widths;
      std::stringstream ss(*hidden);
      for (std::string item; std::getline(ss, item, ',');) {
        try {
          widths.push_back(std::stoul(item));
        } catch (const std::exception&) {
          throw config_error("bad --hidden value '" + *hidden + "'");
        }
      }
      j["hidden"] = widths;
    }
    c = config_from_json(j, c);
    for (const auto& name : ablate) c.ablation.disable(name);
    c.validate();
    return c;
  }
};

struct RunFlags {
  std::string data;
  std::optional<std::string> benchmark, teacher_b, teacher_c;
  std::string out = "run";
  bool plot = false;

  void attach(CLI::App& app) {
    app.add_option("--data", data, "target dataset CSV")->required();
    app.add_option("--benchmark", benchmark, "benchmark.json with synthetic teachers");
    app.add_option("--teacher-b", teacher_b, "teacher_b prediction CSV");
    app.add_option("--teacher-c", teacher_c, "teacher_c prediction CSV (prompted through ln p)");
    app.add_option("--out", out, "output directory");
    app.add_flag("--plot", plot, "also write plot/*.dat series");
  }

  RunOptions resolve(const PipelineConfig& cfg) const {
    RunOptions o;
    o.config = cfg;
    o.data = data;
    if (benchmark) o.benchmark = *benchmark;
    if (teacher_b) o.teacher_b = *teacher_b;
    if (teacher_c) o.teacher_c = *teacher_c;
    o.out = out;
    o.plot = plot;
    return o;
  }
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '"', '\'');
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage black-box domain adaptation on synthetic and file-backed predictions", "ddsr"};
  app.require_subcommand(1);

  SynthOptions synth;
  std::string synth_out = "bench";
  auto* s = app.add_subcommand("synth", "generate the synthetic benchmark and teacher predictions");
  s->add_option("--classes", synth.params.classes);
  s->add_option("--dim", synth.params.dim);
  s->add_option("--n", synth.params.n_target, "target samples");
  s->add_option("--n-source", synth.params.n_source);
  s->add_option("--angle", synth.params.angle, "rotation angle (radians)");
  s->add_option("--noise", synth.params.noise);
  s->add_option("--radius", synth.params.radius);
  s->add_option("--seed", synth.seed);
  s->add_option("--out", synth_out, "output directory");

  ConfigFlags run_cfg;
  RunFlags run_flags;
  auto* r = app.add_subcommand("run", "train the target network");
  run_cfg.attach(*r);
  run_flags.attach(*r);

  FuseOptions fuse;
  std::string fuse_b, fuse_c, fuse_out = "fused.csv", fuse_report;
  std::optional<double> fuse_weight;
  auto* f = app.add_subcommand("fuse", "fuse two prediction files");
  f->add_option("--teacher-b", fuse_b)->required();
  f->add_option("--teacher-c", fuse_c)->required();
  f->add_option("--gu-threshold", fuse.threshold);
  f->add_option("--clip-weight", fuse_weight, "fixed weight on teacher_c instead of adaptive fusion");
  f->add_option("--out", fuse_out);
  f->add_option("--report", fuse_report, "write the fusion report as JSON");

  EvalOptions eval;
  std::string eval_ckpt, eval_data, eval_out;
  auto* e = app.add_subcommand("eval", "accuracy of a checkpoint on a labelled dataset");
  e->add_option("--checkpoint", eval_ckpt)->required();
  e->add_option("--data", eval_data)->required();
  e->add_option("--out", eval_out, "write the accuracy report as JSON");
  e->add_option("--threads", eval.threads);

  ConfigFlags ab_cfg;
  RunFlags ab_flags;
  std::string axis = "loss", values;
  auto* a = app.add_subcommand("ablate", "one run per setting along an ablation axis");
  ab_cfg.attach(*a);
  ab_flags.attach(*a);
  a->add_option("--axis", axis, "loss | gamma | gu_threshold | epsilon | zeta | clip_weight");
  a->add_option("--values", values, "comma-separated settings (loss axis: full,kd,mix,im,sr,self)");

  std::string command = "?";
  int code = kExitOk;
  std::string kind = "ok", message;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& pe) {
      throw config_error(pe.what());
    }
    command = app.get_subcommands().front()->get_name();

    if (command == "synth") {
      synth.out = synth_out;
      cmd_synth(synth, err);
    } else if (command == "run") {
      cmd_run(run_flags.resolve(run_cfg.resolve()), err);
    } else if (command == "fuse") {
      fuse.teacher_b = fuse_b;
      fuse.teacher_c = fuse_c;
      fuse.out = fuse_out;
      fuse.clip_weight = fuse_weight;
      if (!fuse_report.empty()) fuse.report = fuse_report;
      cmd_fuse(fuse, out);
    } else if (command == "eval") {
      eval.checkpoint = eval_ckpt;
      eval.data = eval_data;
      if (!eval_out.empty()) eval.out = eval_out;
      cmd_eval(eval, out);
    } else if (command == "ablate") {
      AblateOptions o{ab_flags.resolve(ab_cfg.resolve()), {}};
      o.axis.name = axis;
      const auto items = split(values.empty() && axis == "loss" ? "full,kd,mix,im,sr,self" : values);
      if (items.empty()) throw config_error("--values is required for axis " + axis);
      if (axis == "loss") {
        o.axis.labels = items;
      } else {
        for (const auto& v : items) {
          try {
            o.axis.values.push_back(std::stod(v));
          } catch (const std::exception&) {
            throw config_error("bad axis value '" + v + "'");
          }
        }
      }
      cmd_ablate(o, out);
    }
  } catch (const config_error& ex) {
    code = kExitConfig, kind = "config", message = ex.what();
  } catch (const training_divergence& ex) {
    code = kExitDivergence, kind = "divergence", message = ex.what();
  } catch (const io_error& ex) {
    code = kExitIo, kind = "io", message = ex.what();
  } catch (const invalid_input& ex) {
    code = kExitData, kind = "data", message = ex.what();
  } catch (const parse_error& ex) {
    code = kExitData, kind = "data", message = ex.what();
  } catch (const missing_prediction& ex) {
    code = kExitData, kind = "data", message = ex.what();
  } catch (const unsupported_evaluation& ex) {
    code = kExitData, kind = "data", message = ex.what();
  } catch (const degenerate_state& ex) {
    code = kExitData, kind = "data", message = ex.what();
  } catch (const std::exception& ex) {
    code = kExitOther, kind = "error", message = ex.what();
  }

  if (code != kExitOk) err << "ddsr: " << message << "\n";
  out << "status=" << (code == kExitOk ? "ok" : "error") << " command=" << command << " exit=" << code
      << " kind=" << kind;
  if (code != kExitOk) out << " message=\"" << one_line(message) << "\"";
  out << "\n";
  return code;
}

}  // namespace ddsr
