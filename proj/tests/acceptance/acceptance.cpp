// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"

#include "ddsr/benchmark.hpp"
#include "ddsr/cli_io.hpp"
#include "ddsr/formats.hpp"
#include "ddsr/fusion.hpp"
#include "ddsr/losses.hpp"
#include "ddsr/od_objective.hpp"
#include "ddsr/pipeline.hpp"
#include "ddsr/target_net.hpp"
#include "ddsr/teachers.hpp"

using namespace ddsr;
namespace fs = std::filesystem;
using V = std::vector<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json golden() {
  std::ifstream f(std::string(DDSR_GOLDEN_DIR) + "/default_benchmark.json");
  if (!f) throw std::runtime_error("golden file missing");
  return nlohmann::json::parse(f);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::cerr << out.str() << err.str();
  return code;
}

NetworkWeights with_theta(const NetworkWeights& w, const V& th) { return {w.layout, th}; }

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

// 0.5 |A theta - b|^2 with gradient A^T (A theta - b).
struct Quadratic {
  Matrix a;
  V b;
  template <class T>
  std::vector<T> gradient(std::span<const T> theta) const {
    std::vector<T> r(a.rows(), T(0.0)), g(a.cols(), T(0.0));
    for (std::size_t i = 0; i < a.rows(); ++i) {
      r[i] = T(-b[i]);
      for (std::size_t j = 0; j < a.cols(); ++j) r[i] = r[i] + T(a(i, j)) * theta[j];
    }
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t i = 0; i < a.rows(); ++i) g[j] = g[j] + T(a(i, j)) * r[i];
    return g;
  }
};

// ---------------------------------------------------------------------------

void gradients(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 prng(17);
  const MixPlan plan = draw_mix_plan(8, prng);
  auto mixed = [&](const Matrix& x) {
    Matrix xm(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t k = 0; k < x.cols(); ++k)
        xm(i, k) = plan.lambda[i] * x(i, k) + (1.0 - plan.lambda[i]) * x(plan.partner[i], k);
    return xm;
  };
  const auto f = oracle::kink_free_fixture(5e-3, 1, mixed);
  const auto mask = SubnetworkMask::make(f.w.layout, 0.75);
  const Matrix y = oracle::random_simplex_rows(8, 4, 6), targets = oracle::random_simplex_rows(8, 4, 7);
  const std::vector<std::size_t> labels{0, 1, 2, 3, 3, 2, 1, 0};

  auto check = [&](const std::string& name, auto loss, double tol) {
    const V g = loss(f.w).second;
    const V fd = oracle::fd_gradient([&](const V& th) { return loss(with_theta(f.w, th)).first; }, f.w.theta);
    const double e = oracle::relative_error(g, fd);
    o.detail << " " << name << "=" << e;
    o.require(e < tol, name);
  };
  auto logit_loss = [&](auto fn) {
    return [&, fn](const NetworkWeights& w) {
      const auto l = fn(forward_full(w, f.x).logits);
      return std::make_pair(l.value, backward(w, nullptr, f.x, l.dlogits));
    };
  };
  auto param_loss = [](auto fn) {
    return [fn](const NetworkWeights& w) {
      const auto l = fn(w);
      return std::make_pair(l.value, l.gradient);
    };
  };
  check("kd", logit_loss([&](const Matrix& z) { return loss_kd(y, z); }), 1e-4);
  check("im", logit_loss([](const Matrix& z) { return loss_im(z); }), 1e-4);
  check("self", logit_loss([&](const Matrix& z) { return loss_self(labels, z); }), 1e-4);
  check("mix", param_loss([&](const NetworkWeights& w) { return loss_mix(w, f.x, targets, plan); }), 1e-4);
  check("od", param_loss([&](const NetworkWeights& w) { return loss_od(w, mask, f.x); }), 1e-4);

  // wg: the entropy weight is a constant of the step.
  const WgLoss at = loss_wg(f.w, mask, f.x);
  check("wg",
        [&](const NetworkWeights& w) {
          return std::make_pair(at.weight * loss_wg(w, mask, f.x).cosine, at.gradient);
        },
        1e-3);

  // cm over the prompt bias.
  SyntheticBayesTeacher base;
  base.class_means = oracle::random_matrix(4, 2, 9, 3.0);
  base.label_bias = V(4, 0.0);
  base.temperature = 2.0;
  PromptedTeacher pt(base, 0.01);
  pt.set_prompt_bias({0.2, -0.1, 0.05, 0.3});
  Dataset d;
  d.features = f.x;
  d.class_count = 4;
  for (std::size_t i = 0; i < 8; ++i) d.ids.push_back("s" + std::to_string(i));
  const auto cm = consistency_loss(pt, d, y);
  const V fd_cm = oracle::fd_gradient(
      [&](const V& b) {
        PromptedTeacher u = pt;
        u.set_prompt_bias(b);
        return consistency_loss(u, d, y).value;
      },
      pt.prompt_bias());
  const double e_cm = oracle::relative_error(cm.gradient, fd_cm);
  o.detail << " cm=" << e_cm;
  o.require(e_cm < 1e-4, "cm");

  // hvp: closed form on a quadratic, then differences of gradients on the od objective.
  const Quadratic q{oracle::random_matrix(5, 4, 1), {0.5, -1.0, 2.0, 0.0, 1.5}};
  const V qt{0.1, -0.3, 0.7, 1.1}, qv{1.0, 2.0, -1.0, 0.5};
  const V qh = hvp(std::span<const double>(qt), std::span<const double>(qv), q);
  bool exact = true;
  for (std::size_t j = 0; j < 4; ++j) {
    V av(5, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t k = 0; k < 4; ++k) av[i] = av[i] + q.a(i, k) * qv[k];
    double expect = 0.0;
    for (std::size_t i = 0; i < 5; ++i) expect = expect + q.a(i, j) * av[i];
    exact = exact && qh[j] == expect;
  }
  o.require(exact, "hvp quadratic");

  const auto hf = oracle::kink_free_fixture(2e-3);
  const auto hmask = SubnetworkMask::make(hf.w.layout, 0.75);
  const OdObjective obj(hf.w.layout, hmask, hf.x);
  const std::size_t n = hf.w.theta.size();
  V theta(2 * n), v(2 * n);
  std::copy(hf.w.theta.begin(), hf.w.theta.end(), theta.begin());
  std::copy(hf.w.theta.begin(), hf.w.theta.end(), theta.begin() + static_cast<std::ptrdiff_t>(n));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& e : v) e = nd(rng);
  const V hv = hvp(std::span<const double>(theta), std::span<const double>(v), obj);
  V plus = theta, minus = theta;
  for (std::size_t i = 0; i < 2 * n; ++i) plus[i] += 1e-4 * v[i], minus[i] -= 1e-4 * v[i];
  const V gp = obj.gradient<double>(plus), gm = obj.gradient<double>(minus);
  V fd(2 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) fd[i] = (gp[i] - gm[i]) / 2e-4;
  const double e_hvp = oracle::relative_error(hv, fd);
  o.detail << " hvp=" << e_hvp;
  o.require(e_hvp < 1e-3, "hvp fd");

  const double s = seconds_since(t0);
  o.detail << " time=" << s << "s";
  o.require(s < 60.0, "runtime");
}

void fusion(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int branch_mismatch = 0;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng() % 40, c = 2 + rng() % 9;
    const Matrix b = oracle::random_simplex_rows(n, c, rng()), cc = oracle::random_simplex_rows(n, c, rng());
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
    const double thr = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    const auto r = fuse(PredictionMatrix(ids, b), PredictionMatrix(ids, cc), thr);
    const auto want = oracle::naive_fuse(b, cc, thr);
    for (double e : {r.report.iu_b - want.iu_b, r.report.iu_c - want.iu_c, r.report.gu_b - want.gu_b,
                     r.report.gu_c - want.gu_c, r.report.alpha - want.alpha})
      worst = std::max(worst, std::abs(e));
    for (std::size_t k = 0; k < n * c; ++k)
      worst = std::max(worst, std::abs(r.labels.rows().data()[k] - want.fused.data()[k]));
    if ((r.report.branch == FusionBranch::clip_dominant) != want.clip_dominant) ++branch_mismatch;
  }
  o.detail << " max_abs_diff=" << worst << " branch_mismatch=" << branch_mismatch;
  o.require(worst <= 1e-12, "fused values");
  o.require(branch_mismatch == 0, "branch");

  // yb uniform in marginal, yc with a marginal entropy 0.07 nats lower.
  Matrix b(4, 4, 0.1), c(4, 4);
  for (std::size_t i = 0; i < 4; ++i) b(i, i) = 0.7;
  const V q = oracle::distribution_with_entropy(4, std::log(4.0) - 0.07);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) c(i, j) = q[j];
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  const auto lo = fuse(PredictionMatrix(ids, b), PredictionMatrix(ids, c), 0.05);
  const auto hi = fuse(PredictionMatrix(ids, b), PredictionMatrix(ids, c), 0.08);
  o.detail << " delta_gu=" << lo.report.delta_gu << " @0.05:" << to_string(lo.report.branch)
           << " @0.08:" << to_string(hi.report.branch);
  o.require(std::abs(lo.report.delta_gu - 0.07) < 1e-12, "gap");
  o.require(lo.report.branch == FusionBranch::alpha_weighted, "0.05 branch");
  o.require(hi.report.branch == FusionBranch::clip_dominant, "0.08 branch");

  const double s = seconds_since(t0);
  o.detail << " time=" << s << "s";
  o.require(s < 30.0, "runtime");
}

void full_mask(Outcome& o) {
  bool identical = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto layout = LayerLayout::with_activation({8, 64, 32, 4}, s % 2 ? Activation::tanh : Activation::relu);
    const auto w = init_weights(layout, s);
    const Matrix x = oracle::random_matrix(16, 8, s + 100, 3.0);
    const auto full = forward_full(w, x), sub = forward_sub(w, SubnetworkMask::make(layout, 1.0), x);
    identical = identical && same_bits(full.logits, sub.logits) && same_bits(full.features, sub.features);
  }
  o.require(identical, "forward identity");

  const auto bench = default_benchmark(0);
  const Dataset d = generate(bench.pair);
  PipelineConfig c;
  c.gamma = 1.0;
  c.stage_one_epochs = 3;
  c.total_epochs = 4;
  c.stage = StageMode::one_only;
  const auto r = run_pipeline(c, d, TeacherOracle{bench.teacher_b}, PromptedTeacher(bench.teacher_c, c.prompt_lr));
  double od = 0.0, wg = 0.0;
  for (const auto& m : r.metrics) od = std::max(od, m.max_abs_od), wg = std::max(wg, m.max_abs_wg);
  o.detail << " epochs=" << r.metrics.size() << " max|od|=" << od << " max|wg|=" << wg;
  o.require(r.metrics.size() == 3, "epoch count");
  o.require(od == 0.0 && wg == 0.0, "od/wg zero");
}

void end_to_end(Outcome& o, const nlohmann::json& g) {
  const auto t0 = Clock::now();
  const auto bench = default_benchmark(0);
  const Dataset d = generate(bench.pair);
  const double tb = accuracy_of(query(bench.teacher_b, d), d);
  const double tc = accuracy_of(query(bench.teacher_c, d), d);
  const auto& base = g["baselines"];
  o.require(tb == base["teacher_b_accuracy"].get<double>() && tc == base["teacher_c_accuracy"].get<double>(),
            "teacher accuracies match the oracle pins");
  const auto r = run_pipeline(PipelineConfig{}, d, TeacherOracle{bench.teacher_b}, PromptedTeacher(bench.teacher_c, 0.01));
  const double s1 = evaluate(r.stage_one_model, d), fin = evaluate(r.final_model, d);
  const double s = seconds_since(t0);
  const double best = std::max(base["teacher_b_accuracy"].get<double>(), base["teacher_c_accuracy"].get<double>());
  o.detail << " teacher_b=" << tb << " teacher_c=" << tc << " stage_one=" << s1 << " full=" << fin
           << " margin=" << fin - best << " time=" << s << "s";
  o.require(fin >= best + 0.02, "full >= best teacher + 2 points");
  o.require(fin >= s1 - 0.005, "full >= stage one - 0.5 points");
  o.require(s < 120.0, "runtime");
}

void ablations(Outcome& o, const nlohmann::json& g) {
  const auto bench = default_benchmark(0);
  const Dataset d = generate(bench.pair);
  const auto rows = run_ablation_grid(PipelineConfig{}, AblationAxis{"loss", {}, {"full", "kd", "mix", "im", "sr", "self"}},
                                      d, TeacherOracle{bench.teacher_b}, PromptedTeacher(bench.teacher_c, 0.01));
  const auto& full = rows.front();
  const auto& pins = g["pipeline"]["loss_ablation"];
  double worst_gain = -1.0;
  bool pinned = true;
  for (const auto& r : rows) {
    o.detail << " " << r.label << "=" << r.final_accuracy;
    if (r.label != "full") worst_gain = std::max(worst_gain, r.final_accuracy - full.final_accuracy);
    const auto& p = pins[r.label];
    pinned = pinned && std::abs(r.final_accuracy - p["final_accuracy"].get<double>()) < 1e-12 &&
             std::abs(r.stage_one_accuracy - p["stage_one_accuracy"].get<double>()) < 1e-12 &&
             std::abs(r.gu_of_target - p["gu_of_target"].get<double>()) < 1e-9;
  }
  const auto im = std::find_if(rows.begin(), rows.end(), [](const AblationRow& r) { return r.label == "im"; });
  o.detail << " gu_full=" << full.gu_of_target << " gu_no_im=" << im->gu_of_target << " max_gain=" << worst_gain;
  o.require(im->gu_of_target < full.gu_of_target, "dropping im lowers gu_of_target");
  o.require(worst_gain <= 0.005, "no single drop gains more than 0.5 points");
  o.require(pinned, "golden deltas");
}

void defaults(Outcome& o) {
  const auto check = [&](const PipelineConfig& c, const std::string& where) {
    o.require(c.epsilon == 0.6, where + " epsilon");
    o.require(c.zeta == 0.3, where + " zeta");
    o.require(c.beta == 0.9, where + " beta");
    o.require(c.gamma == 0.84, where + " gamma");
    o.require(c.gu_threshold == 0.05, where + " gu_threshold");
    o.require(c.batch_size == 64, where + " batch_size");
    o.require(c.momentum == 0.9, where + " momentum");
    o.require(c.weight_decay == 1e-3, where + " weight_decay");
    o.require(c.prompt_period == 5, where + " prompt_period");
  };
  check(PipelineConfig{}, "struct");
  check(config_from_json(nlohmann::json::object()), "empty json");
  check(config_from_json(nlohmann::json::parse(config_to_json(PipelineConfig{}).dump())), "round trip");
  o.detail << " eps=0.6 zeta=0.3 beta=0.9 gamma=0.84 gu=0.05 batch=64 momentum=0.9 wd=1e-3 period=5";
}

void determinism(Outcome& o, const fs::path& dir) {
  const auto bench = dir / "bench";
  o.require(cli({"synth", "--out", bench.string()}) == 0, "synth");
  for (const char* run : {"a", "b"})
    o.require(cli({"run", "--data", (bench / "target.csv").string(), "--benchmark", (bench / "benchmark.json").string(),
                   "--out", (dir / run).string()}) == 0,
              std::string("run ") + run);
  for (const char* file : {"metrics.ndjson", "stage_one.ckpt", "final.ckpt"}) {
    const auto a = slurp(dir / "a" / file), b = slurp(dir / "b" / file);
    o.detail << " " << file << "=" << a.size() << "B";
    o.require(!a.empty() && a == b, file);
  }
}

void interchange(Outcome& o, const fs::path& dir) {
  const auto bench = dir / "bench";
  if (!fs::exists(bench / "teacher_b.csv")) o.require(cli({"synth", "--out", bench.string()}) == 0, "synth");
  const auto tb = (bench / "teacher_b.csv").string(), tc = (bench / "teacher_c.csv").string();
  o.require(cli({"fuse", "--teacher-b", tb, "--teacher-c", tc, "--out", (dir / "fused.csv").string()}) == 0, "fuse");
  o.require(cli({"run", "--data", (bench / "target.csv").string(), "--teacher-b", tb, "--teacher-c", tc, "--epochs", "2",
                 "--stage-one-epochs", "1", "--stage", "one-only", "--out", (dir / "file_run").string()}) == 0,
            "file-backed run");

  const Dataset d = read_dataset(bench / "target.csv");
  const auto bf = load_benchmark(bench / "benchmark.json");
  PipelineConfig c;
  c.total_epochs = 2;
  c.stage_one_epochs = 1;
  c.stage = StageMode::one_only;
  const auto mem = run_pipeline(c, d, TeacherOracle{bf.teacher_b}, PromptedTeacher(bf.teacher_c, c.prompt_lr));
  const auto& want = mem.stage_one.first_fusion;

  double worst = 0.0;
  for (const auto& path : {dir / "fused.csv", dir / "file_run" / "fused_epoch1.csv"}) {
    const auto got = read_prediction_matrix(path, want.class_count());
    if (got.ids() != want.ids()) {
      o.require(false, "row ids of " + path.filename().string());
      continue;
    }
    for (std::size_t k = 0; k < want.rows().data().size(); ++k)
      worst = std::max(worst, std::abs(got.rows().data()[k] - want.rows().data()[k]));
  }
  o.detail << " rows=" << want.size() << " max_abs_diff=" << worst;
  o.require(worst <= 1e-12, "within 1e-12");
}

}  // namespace

int main() {
  std::cout.precision(6);
  char tmpl[] = "/tmp/ddsr_acceptance_XXXXXX";
  const char* made = mkdtemp(tmpl);
  if (!made) {
    std::cerr << "cannot create a temp dir\n";
    return 1;
  }
  const fs::path dir(made);

  nlohmann::json g;
  try {
    g = golden();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gradient oracles", gradients},
      {"fusion against the naive oracle", fusion},
      {"full subnetwork identity", full_mask},
      {"end-to-end synthetic adaptation", [&](Outcome& o) { end_to_end(o, g); }},
      {"loss ablations", [&](Outcome& o) { ablations(o, g); }},
      {"hyperparameter defaults", defaults},
      {"cmd_run determinism", [&](Outcome& o) { determinism(o, dir); }},
      {"interchange round trip", [&](Outcome& o) { interchange(o, dir); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << " |"
              << o.detail.str() << std::endl;
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  std::cout << (failed == 0 ? "acceptance: all criteria pass" : "acceptance: " + std::to_string(failed) + " failing")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
