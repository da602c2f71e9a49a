// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddsr/losses.hpp"
#include "ddsr/target_net.hpp"

namespace ddsr {

enum class FusionSchedule { on_prompt_refresh, every_epoch };
enum class PrototypeMode { soft, hard };
enum class StageMode { full, one_only };

std::string to_string(FusionSchedule s);
std::string to_string(PrototypeMode m);
std::string to_string(StageMode m);
FusionSchedule fusion_schedule_from_string(const std::string& s);
PrototypeMode prototype_mode_from_string(const std::string& s);
StageMode stage_mode_from_string(const std::string& s);

struct AblationSwitches {
  bool kd = true;
  bool mix = true;
  bool im = true;
  bool sr = true;
  bool self = true;

  // Turns one loss off by name (kd, mix, im, sr, self).
  void disable(const std::string& name);
  std::vector<std::string> disabled() const;
};

struct PipelineConfig {
  int total_epochs = 35;       // T
  int stage_one_epochs = 25;   // T1
  std::size_t batch_size = 64;
  double epsilon = kDefaultEpsilon;
  double zeta = kDefaultZeta;
  double beta = 0.9;
  double gamma = 0.84;
  double gu_threshold = 0.05;
  int prompt_period = 5;
  int prompt_steps = 50;
  double prompt_lr = 0.01;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::uint64_t seed = 0;
  FusionSchedule fusion_schedule = FusionSchedule::on_prompt_refresh;
  WgForm wg_form = WgForm::cosine;
  PrototypeMode prototype_mode = PrototypeMode::soft;
  StageMode stage = StageMode::full;
  AblationSwitches ablation;
  std::optional<double> fixed_clip_weight;  // replaces adaptive fusion when set
  std::vector<std::size_t> hidden = {64, 32};
  Activation activation = Activation::relu;
  unsigned threads = 1;

  // Throws config_error.
  void validate() const;
  int trained_epochs() const { return stage == StageMode::one_only ? stage_one_epochs : total_epochs; }
};

}  // namespace ddsr
