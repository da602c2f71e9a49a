// SPDX-License-Identifier: Apache-2.0
#include "ddsr/config.hpp"

#include <cmath>

#include "ddsr/errors.hpp"

namespace ddsr {

std::string to_string(FusionSchedule s) {
  return s == FusionSchedule::on_prompt_refresh ? "on-prompt-refresh" : "every-epoch";
}
std::string to_string(PrototypeMode m) { return m == PrototypeMode::soft ? "soft" : "hard"; }
std::string to_string(StageMode m) { return m == StageMode::full ? "full" : "one-only"; }

FusionSchedule fusion_schedule_from_string(const std::string& s) {
  if (s == "on-prompt-refresh") return FusionSchedule::on_prompt_refresh;
  if (s == "every-epoch") return FusionSchedule::every_epoch;
  throw config_error("unknown fusion_schedule '" + s + "'");
}

PrototypeMode prototype_mode_from_string(const std::string& s) {
  if (s == "soft") return PrototypeMode::soft;
  if (s == "hard") return PrototypeMode::hard;
  throw config_error("unknown prototype_mode '" + s + "'");
}

StageMode stage_mode_from_string(const std::string& s) {
  if (s == "full") return StageMode::full;
  if (s == "one-only") return StageMode::one_only;
  throw config_error("unknown stage '" + s + "'");
}

void AblationSwitches::disable(const std::string& name) {
  if (name == "kd") kd = false;
  else if (name == "mix") mix = false;
  else if (name == "im") im = false;
  else if (name == "sr") sr = false;
  else if (name == "self") self = false;
  else throw config_error("unknown ablation switch '" + name + "' (expected kd, mix, im, sr, self)");
}

std::vector<std::string> AblationSwitches::disabled() const {
  std::vector<std::string> out;
  if (!kd) out.emplace_back("kd");
  if (!mix) out.emplace_back("mix");
  if (!im) out.emplace_back("im");
  if (!sr) out.emplace_back("sr");
  if (!self) out.emplace_back("self");
  return out;
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw config_error(what);
  };
  require(stage_one_epochs > 0 && stage_one_epochs < total_epochs, "need 0 < stage_one_epochs < total_epochs");
  require(batch_size >= 2, "batch_size must be >= 2");
  require(beta >= 0.0 && beta <= 1.0, "beta must be in [0, 1]");
  require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
  require(std::isfinite(epsilon) && std::isfinite(zeta), "epsilon and zeta must be finite");
  require(std::isfinite(gu_threshold), "gu_threshold must be finite");
  require(prompt_period >= 1, "prompt_period must be >= 1");
  require(prompt_steps >= 0, "prompt_steps must be >= 0");
  require(prompt_lr >= 0.0 && std::isfinite(prompt_lr), "prompt_lr must be >= 0");
  require(lr0 > 0.0 && std::isfinite(lr0), "lr0 must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay must be >= 0");
  require(!hidden.empty(), "at least one hidden layer is required");
  for (auto h : hidden) require(h >= 1, "hidden widths must be >= 1");
  if (fixed_clip_weight) require(*fixed_clip_weight >= 0.0 && *fixed_clip_weight <= 1.0, "clip weight must be in [0, 1]");
  require(threads >= 1, "threads must be >= 1");
}

}  // namespace ddsr
