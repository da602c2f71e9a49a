// SPDX-License-Identifier: Apache-2.0
#include "ddsr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "ddsr/errors.hpp"
#include "ddsr/prob_core.hpp"

namespace ddsr {
namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw so the order does not depend on the standard library.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Splits a permutation into batches of batch_size; a trailing remainder of one sample is dropped.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

[[noreturn]] void diverged(int epoch, std::size_t batch, const std::string& component) {
  throw training_divergence("non-finite " + component + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch));
}

void check_finite(const ParamLoss& l, int epoch, std::size_t batch, const char* name) {
  if (!std::isfinite(l.value)) diverged(epoch, batch, std::string("L_") + name);
  for (double g : l.gradient)
    if (!std::isfinite(g)) diverged(epoch, batch, std::string("grad L_") + name);
}

void step(RunState& state, std::span<const double> gradient, int epoch, std::size_t batch) {
  try {
    sgd_step(state.optimizer, state.model, gradient);
  } catch (const training_divergence&) {
    diverged(epoch, batch, "gradient");
  }
  for (double v : state.model.theta)
    if (!std::isfinite(v)) diverged(epoch, batch, "parameters");
}

// Inputs are validated before training starts, so a domain error raised
// mid-run comes from the numbers blowing up.
template <class F>
auto guarded(int epoch, std::size_t batch, const char* where, F&& f) {
  try {
    return f();
  } catch (const invalid_input& e) {
    diverged(epoch, batch, std::string(where) + " (" + e.what() + ")");
  }
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double w) {
  acc.kd += w * b.kd;
  acc.mix += w * b.mix;
  acc.im += w * b.im;
  acc.dt += w * b.dt;
  acc.od += w * b.od;
  acc.wg += w * b.wg;
  acc.sr += w * b.sr;
  acc.cm += w * b.cm;
  acc.self_ce += w * b.self_ce;
  acc.total += w * b.total;
}

FusionResult fuse_teachers(const PipelineConfig& cfg, const Dataset& data, const TeacherOracle& teacher_b,
                           const PromptedTeacher& teacher_c) {
  const PredictionMatrix yb = query(teacher_b, data).aligned_to(data.ids);
  const PredictionMatrix yc = query(teacher_c, data);
  if (cfg.fixed_clip_weight) return fuse_fixed(yb, yc, *cfg.fixed_clip_weight);
  return fuse(yb, yc, cfg.gu_threshold);
}

void check_store(const PseudoLabelStore& store, int epoch) {
  const Matrix& m = store.labels.rows();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    try {
      validate_prob_vector(m.row(i));
    } catch (const invalid_input&) {
      diverged(epoch, 0, "pseudo-label row " + store.labels.ids()[i]);
    }
  }
}

void finish_record(MetricsRecord& rec, const Dataset& data, const PredictionMatrix& yt) {
  rec.gu_of_target = global_uncertainty(yt);
  if (data.labels) rec.target_accuracy = accuracy_of(yt, data);
}

}  // namespace

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  if (batch_size < 2) throw invalid_input("batch_size must be >= 2");
  return n / batch_size + (n % batch_size >= 2 ? 1 : 0);
}

RunState make_run_state(const PipelineConfig& cfg, const Dataset& data) {
  cfg.validate();
  validate_dataset(data);
  if (data.size() < 2) throw invalid_input("need at least 2 target samples");
  std::vector<std::size_t> sizes{data.dim()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(data.class_count);
  RunState s{init_weights(LayerLayout::with_activation(sizes, cfg.activation), cfg.seed), {},
             std::mt19937_64(cfg.seed ^ 0x5eed5eed5eed5eedULL)};
  const std::size_t total =
      batches_per_epoch(data.size(), cfg.batch_size) * static_cast<std::size_t>(cfg.trained_epochs());
  s.optimizer = make_optimizer(s.model, cfg.lr0, cfg.momentum, cfg.weight_decay, total);
  return s;
}

StageOneResult run_stage_one(const PipelineConfig& cfg, const Dataset& data, const TeacherOracle& teacher_b,
                             PromptedTeacher& teacher_c, RunState& state, const MetricsCallback& on_epoch) {
  cfg.validate();
  if (class_count(teacher_b) != data.class_count || teacher_c.class_count() != data.class_count)
    throw invalid_input("teacher class count does not match the dataset");

  FusionResult first = fuse_teachers(cfg, data, teacher_b, teacher_c);
  StageOneResult out{PseudoLabelStore{first.labels, cfg.beta, first.report, 1}, first.labels, {}};

  const SubnetworkMask mask = SubnetworkMask::make(state.model.layout, cfg.gamma);
  const StageOneSwitches on{cfg.ablation.kd, cfg.ablation.mix, cfg.ablation.im, cfg.ablation.sr};
  std::optional<FusionReport> pending = first.report;

  for (int epoch = 1; epoch <= cfg.stage_one_epochs; ++epoch) {
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.stage = 1;
    if (cfg.fusion_schedule == FusionSchedule::every_epoch && epoch > 1) {
      FusionResult f = fuse_teachers(cfg, data, teacher_b, teacher_c);
      out.store.labels = std::move(f.labels);
      out.store.report = f.report;
      out.store.epoch_of_last_fusion = epoch;
      pending = f.report;
    }
    rec.fusion = pending;
    pending.reset();

    const auto batches = make_batches(shuffled_indices(data.size(), state.rng), cfg.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const Matrix x = data.features.gather(idx);
      const Matrix y = out.store.labels.rows().gather(idx);
      const MixPlan plan = draw_mix_plan(idx.size(), state.rng);
      const StageOneComponents c = guarded(epoch, b, "stage one losses", [&] {
        return stage_one_components(state.model, mask, x, y, plan, on, cfg.wg_form);
      });
      check_finite(c.kd, epoch, b, "kd");
      check_finite(c.mix, epoch, b, "mix");
      check_finite(c.im, epoch, b, "im");
      check_finite(c.od, epoch, b, "od");
      check_finite(c.wg, epoch, b, "wg");
      const StageOneLoss total = stage_one_total(c, cfg.epsilon, cfg.zeta);
      accumulate(rec.loss, total.breakdown, 1.0 / static_cast<double>(batches.size()));
      rec.max_abs_od = std::max(rec.max_abs_od, std::abs(c.od.value));
      rec.max_abs_wg = std::max(rec.max_abs_wg, std::abs(c.wg.value));
      step(state, total.gradient, epoch, b);
    }

    PredictionMatrix yt = guarded(epoch, 0, "target predictions", [&] { return predict(state.model, data, cfg.threads); });
    ema_refine(out.store, yt);

    if (epoch % cfg.prompt_period == 0) {
      double cm = 0.0;
      for (int k = 0; k < cfg.prompt_steps; ++k) cm = prompt_step(teacher_c, data, yt.rows());
      rec.loss.cm = cm;
      if (cfg.fusion_schedule == FusionSchedule::on_prompt_refresh && epoch < cfg.stage_one_epochs) {
        FusionResult f = fuse_teachers(cfg, data, teacher_b, teacher_c);
        out.store.labels = std::move(f.labels);
        out.store.report = f.report;
        out.store.epoch_of_last_fusion = epoch;
        rec.fusion = f.report;
      }
    }
    check_store(out.store, epoch);

    finish_record(rec, data, yt);
    rec.prompt_bias = teacher_c.prompt_bias();
    out.metrics.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return out;
}

std::vector<MetricsRecord> run_stage_two(const PipelineConfig& cfg, const Dataset& data, RunState& state,
                                         const MetricsCallback& on_epoch) {
  cfg.validate();
  std::vector<MetricsRecord> metrics;
  for (int epoch = cfg.stage_one_epochs + 1; epoch <= cfg.total_epochs; ++epoch) {
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.stage = 2;

    const ForwardResult full = forward_full(state.model, data.features, cfg.threads);
    const PrototypeSet protos = guarded(epoch, 0, "prototypes", [&] {
      return compute_prototypes(full.features, softmax_rows(full.logits), cfg.prototype_mode);
    });
    rec.empty_prototypes = static_cast<std::size_t>(std::count(protos.empty.begin(), protos.empty.end(), true));
    if (rec.empty_prototypes > 0)
      std::clog << "ddsr: epoch " << epoch << ": " << rec.empty_prototypes << " empty prototype(s) excluded\n";
    const PrototypeAssignment assigned = assign_nearest_prototype(full.features, protos);
    if (assigned.zero_norm_features > 0)
      std::clog << "ddsr: epoch " << epoch << ": " << assigned.zero_norm_features
                << " zero-norm feature(s) assigned by tie-break\n";

    const auto batches = make_batches(shuffled_indices(data.size(), state.rng), cfg.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      if (!cfg.ablation.self) break;
      const auto& idx = batches[b];
      const Matrix x = data.features.gather(idx);
      std::vector<std::size_t> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = assigned.labels[idx[i]];
      const LogitLoss l =
          guarded(epoch, b, "L_self", [&] { return loss_self(labels, forward_full(state.model, x).logits); });
      ParamLoss p{l.value, backward(state.model, nullptr, x, l.dlogits)};
      check_finite(p, epoch, b, "self");
      rec.loss.self_ce += p.value / static_cast<double>(batches.size());
      step(state, p.gradient, epoch, b);
    }
    rec.loss.total = rec.loss.self_ce;

    const PredictionMatrix yt =
        guarded(epoch, 0, "target predictions", [&] { return predict(state.model, data, cfg.threads); });
    finish_record(rec, data, yt);
    metrics.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return metrics;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const Dataset& data, const TeacherOracle& teacher_b,
                            const PromptedTeacher& teacher_c, const MetricsCallback& on_epoch) {
  RunState state = make_run_state(cfg, data);
  PromptedTeacher tc = teacher_c;
  StageOneResult s1 = run_stage_one(cfg, data, teacher_b, tc, state, on_epoch);
  NetworkWeights stage_one_model = state.model;
  std::vector<MetricsRecord> metrics = s1.metrics;
  if (cfg.stage == StageMode::full) {
    auto s2 = run_stage_two(cfg, data, state, on_epoch);
    metrics.insert(metrics.end(), s2.begin(), s2.end());
  }
  return PipelineResult{std::move(stage_one_model), std::move(state.model), std::move(s1), std::move(metrics),
                        std::move(tc)};
}

PrototypeSet compute_prototypes(const Matrix& features, const Matrix& predictions, PrototypeMode mode) {
  if (features.rows() != predictions.rows()) throw invalid_input("compute_prototypes: features and predictions differ in length");
  if (features.empty()) throw invalid_input("compute_prototypes: empty feature set");
  const std::size_t n = features.rows(), c = predictions.cols(), f = features.cols();
  PrototypeSet out{Matrix(c, f, 0.0), std::vector<double>(c, 0.0), std::vector<bool>(c, false)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = predictions.row(i);
    const std::size_t top = argmax(p);
    for (std::size_t k = 0; k < c; ++k) {
      if (mode == PrototypeMode::hard && k != top) continue;
      out.soft_counts[k] += p[k];
      for (std::size_t j = 0; j < f; ++j) out.mu(k, j) += p[k] * features(i, j);
    }
  }
  std::size_t empty = 0;
  for (std::size_t k = 0; k < c; ++k) {
    if (out.soft_counts[k] < kEmptyPrototypeMass) {
      out.empty[k] = true;
      ++empty;
      for (std::size_t j = 0; j < f; ++j) out.mu(k, j) = 0.0;
      continue;
    }
    for (std::size_t j = 0; j < f; ++j) out.mu(k, j) /= out.soft_counts[k];
  }
  if (empty == c) throw degenerate_state("compute_prototypes: every class is empty");
  return out;
}

PrototypeAssignment assign_nearest_prototype(const Matrix& features, const PrototypeSet& protos) {
  if (features.cols() != protos.mu.cols()) throw invalid_input("assign_nearest_prototype: feature width mismatch");
  PrototypeAssignment out;
  out.labels.resize(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto q = features.row(i);
    double norm = 0.0;
    for (double v : q) norm += v * v;
    if (std::sqrt(norm) < kCosineZeroNorm) ++out.zero_norm_features;
    double best = std::numeric_limits<double>::infinity();
    std::size_t label = 0;
    for (std::size_t k = 0; k < protos.mu.rows(); ++k) {
      if (protos.empty[k]) continue;
      const double d = 1.0 - cosine(q, protos.mu.row(k));
      if (d < best) {
        best = d;
        label = k;
      }
    }
    out.labels[i] = label;
  }
  return out;
}

PredictionMatrix predict(const NetworkWeights& model, const Dataset& data, unsigned threads) {
  return PredictionMatrix(data.ids, softmax_rows(forward_full(model, data.features, threads).logits));
}

double accuracy_of(const PredictionMatrix& predictions, const Dataset& data) {
  if (!data.labels) throw unsupported_evaluation("dataset carries no ground-truth labels");
  if (data.size() == 0) throw unsupported_evaluation("empty dataset");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (argmax(predictions.row_for(data.ids[i])) == (*data.labels)[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

double evaluate(const NetworkWeights& model, const Dataset& data, unsigned threads) {
  if (!data.labels) throw unsupported_evaluation("dataset carries no ground-truth labels");
  return accuracy_of(predict(model, data, threads), data);
}

std::vector<AblationRow> run_ablation_grid(const PipelineConfig& base, const AblationAxis& axis, const Dataset& data,
                                           const TeacherOracle& teacher_b, const PromptedTeacher& teacher_c) {
  std::vector<std::pair<std::string, PipelineConfig>> runs;
  if (axis.name == "loss") {
    for (const auto& label : axis.labels) {
      PipelineConfig cfg = base;
      if (label != "full") cfg.ablation.disable(label);
      runs.emplace_back(label, cfg);
    }
  } else {
    for (double v : axis.values) {
      if (!std::isfinite(v)) throw config_error("ablation axis values must be finite");
      PipelineConfig cfg = base;
      if (axis.name == "gamma") cfg.gamma = v;
      else if (axis.name == "gu_threshold") cfg.gu_threshold = v;
      else if (axis.name == "epsilon") cfg.epsilon = v;
      else if (axis.name == "zeta") cfg.zeta = v;
      else if (axis.name == "clip_weight") cfg.fixed_clip_weight = v;
      else throw config_error("unknown ablation axis '" + axis.name + "'");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", v);
      runs.emplace_back(buf, cfg);
    }
  }

  std::vector<AblationRow> rows;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& [label, cfg] = runs[r];
    AblationRow row;
    row.axis = axis.name;
    row.label = label;
    row.value = axis.name == "loss" ? static_cast<double>(r) : axis.values[r];
    PipelineResult res = run_pipeline(cfg, data, teacher_b, teacher_c, [&](const MetricsRecord& m) {
      row.max_abs_od = std::max(row.max_abs_od, m.max_abs_od);
      row.max_abs_wg = std::max(row.max_abs_wg, m.max_abs_wg);
    });
    if (data.labels) {
      row.stage_one_accuracy = evaluate(res.stage_one_model, data, cfg.threads);
      row.final_accuracy = evaluate(res.final_model, data, cfg.threads);
    }
    row.gu_of_target = res.metrics.back().gu_of_target;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ddsr
