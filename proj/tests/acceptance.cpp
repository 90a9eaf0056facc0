// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "app.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "vce/config.hpp"
#include "vce/ensemble.hpp"
#include "vce/error.hpp"
#include "vce/metrics.hpp"
#include "vce/training.hpp"
#include "vce/tsne.hpp"

namespace fs = std::filesystem;
using namespace vce;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------- metrics

struct MetricSweep {
  int instances = 0;
  double worst_auc = 0.0;
  double worst_report = 0.0;
  int curves = 0;
  int micro_mismatches = 0;
  double seconds = 0.0;
};

// Shared by the oracle and the micro-F1 criteria: both run over the same
// generated instances.
const MetricSweep& metric_sweep() {
  static const MetricSweep sweep = [] {
    MetricSweep s;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(20240917);
    for (int trial = 0; trial < 1200; ++trial) {
      const int k = 2 + static_cast<int>(rng.below(9));
      const int n = 1 + static_cast<int>(rng.below(200));
      const int levels = 1 + static_cast<int>(rng.below(12));  // coarse grid -> many ties
      Matrix scores(n, k);
      std::vector<int> labels(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::size_t>(k)));
        for (int c = 0; c < k; ++c) scores(i, c) = static_cast<double>(rng.below(static_cast<std::size_t>(levels + 1))) / levels;
        // nudge the true class up sometimes so accuracy varies
        if (rng.uniform() < 0.5) scores(i, labels[static_cast<std::size_t>(i)]) += 1.0;
      }
      const auto eval = evaluate_predictions(scores, labels);

      testing::LabelInstance inst{k, labels, {}};
      for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int c = 1; c < k; ++c)
          if (scores(i, c) > scores(i, best)) best = c;
        inst.y_pred.push_back(best);
      }
      s.worst_report = std::max(s.worst_report, testing::report_deviation(eval.report, testing::recount(inst)));
      s.micro_mismatches += eval.report.micro_f1 == eval.report.accuracy ? 0 : 1;

      std::size_t next_curve = 0;
      for (int c = 0; c < k; ++c) {
        std::vector<double> col(static_cast<std::size_t>(n));
        auto pos = std::make_unique<bool[]>(static_cast<std::size_t>(n));
        int npos = 0;
        for (int i = 0; i < n; ++i) {
          col[static_cast<std::size_t>(i)] = scores(i, c);
          pos[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == c;
          npos += pos[static_cast<std::size_t>(i)];
        }
        if (npos == 0 || npos == n) continue;
        const double oracle = auc_pairwise_oracle(col, std::span<const bool>(pos.get(), static_cast<std::size_t>(n)));
        if (next_curve >= eval.roc.size() || eval.roc[next_curve].class_index != c) {
          s.worst_auc = std::numeric_limits<double>::infinity();
          continue;
        }
        s.worst_auc = std::max(s.worst_auc, std::abs(eval.roc[next_curve++].auc - oracle));
        ++s.curves;
      }
      if (next_curve != eval.roc.size()) s.worst_auc = std::numeric_limits<double>::infinity();
      ++s.instances;
    }
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
  }();
  return sweep;
}

Outcome metric_oracle() {
  const auto& s = metric_sweep();
  const bool ok = s.instances >= 1000 && s.worst_auc <= 1e-9 && s.worst_report <= 1e-12 && s.seconds < 30.0;
  return {ok, fmt("%d instances, %d ROC curves, max |auc - oracle| %.2e (tol 1e-9), max report dev %.2e (tol 1e-12), %.2f s",
                  s.instances, s.curves, s.worst_auc, s.worst_report, s.seconds)};
}

Outcome micro_f1_identity() {
  const auto& s = metric_sweep();
  return {s.micro_mismatches == 0, fmt("micro_f1 != accuracy on %d of %d instances", s.micro_mismatches, s.instances)};
}

// ---------------------------------------------------------------- shapes

Outcome shape_algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto classes = ClassSet::defaults();
  Rng rng(5);
  std::string detail;
  bool ok = true;
  auto check = [&](const char* name, ModelVariant variant, int input, int want_a, int want_b) {
    const auto cfg = ModelConfig::make(variant, classes, Fusion::MeanProb, input);
    EnsembleModel model(cfg, 1);
    const auto out = model.forward(testing::random_tensor(2, 3, input, input, rng), Mode::Eval);
    const auto fa = model.densenet().forward(testing::random_tensor(2, 3, input, input, rng), Mode::Eval).features.cols();
    const auto fb = model.resnet().forward(testing::random_tensor(2, 3, input, input, rng), Mode::Eval).features.cols();
    const bool good = fa == want_a && fb == want_b && out.features.cols() == want_a + want_b &&
                      cfg.feature_dim() == want_a + want_b && out.probs.rows() == 2 && out.probs.cols() == 10;
    ok = ok && good;
    detail += fmt("%s %ld+%ld=%ld%s; ", name, static_cast<long>(fa), static_cast<long>(fb),
                  static_cast<long>(out.features.cols()), good ? "" : " (MISMATCH)");
  };
  check("full@32", ModelVariant::Full, 32, 1024, 2048);
  check("tiny@16", ModelVariant::Tiny, 16, 16, 16);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs < 120.0;
  return {ok, detail + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------- gradients

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  EnsembleModel model(ModelConfig::make(ModelVariant::Tiny, ClassSet({"a", "b", "c", "d"}), Fusion::MeanProb, 16), 31);
  Rng rng(32);
  const Tensor x = testing::random_tensor(4, 3, 16, 16, rng);
  const std::vector<int> labels{2, 0, 3, 1};
  auto loss_at = [&] { return ensemble_loss(model.forward(x, Mode::Train), labels, Fusion::MeanProb, true).loss; };

  model.zero_grad();
  const auto lg = ensemble_loss(model.forward(x, Mode::Train), labels, Fusion::MeanProb, true);
  model.backward(lg.grad_a, lg.grad_b);

  auto params = model.trainable_parameters();
  constexpr double h = 1e-4;
  constexpr int samples = 40;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    auto& p = params[rng.below(params.size())];
    const std::size_t idx = rng.below(p.value->size());
    double& slot = p.value->values()[idx];
    const double saved = slot;
    slot = saved + h;
    const double up = loss_at();
    slot = saved - h;
    const double down = loss_at();
    slot = saved;
    worst = std::max(worst, testing::relative_error(p.grad->values()[idx], (up - down) / (2 * h)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-3 && secs < 60.0,
          fmt("%d sampled parameters, worst relative error %.2e (tol 1e-3), %.1f s", samples, worst, secs)};
}

// ---------------------------------------------------------------- overfit

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TempDir dir;
  generate_synthetic_dataset(dir.path(), {6, 77, 24});
  const auto frames = scan_dataset(dir.path(), ClassSet::defaults()).manifest.frames;  // 60 samples

  EnsembleModel model(ModelConfig::make(ModelVariant::Tiny, ClassSet::defaults(), Fusion::MeanProb, 16), 78);
  PreprocessConfig pre;
  pre.input_size = 16;
  pre.augment.enabled = false;
  FrameLoader loader(pre);
  TrainingConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch_size = 16;
  cfg.seed = 79;
  Adam adam(cfg);
  double acc = 0.0;
  int epoch = 0;
  while (epoch < 200 && acc < 0.95) {
    ++epoch;
    train_epoch(model, adam, loader, frames, cfg, epoch);
    acc = validate_epoch(model, loader, frames, 32).accuracy;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {acc >= 0.95 && secs < 300.0,
          fmt("%zu samples, train accuracy %.4f after %d epochs (need >= 0.95 within 200), %.1f s", frames.size(), acc,
              epoch, secs)};
}

// ---------------------------------------------------------------- end to end

struct PipelineRun {
  int synth = -1, train = -1, evaluate = -1, visualize = -1, predict = -1;
  std::vector<std::string> missing;
  double val_acc = -1.0;
  std::string history_csv, report_json;
  double seconds = 0.0;
};

// synth 10x20 -> train (tiny, 80:20) -> evaluate -> visualize -> predict, via
// the same entry points the executable dispatches to.
PipelineRun run_pipeline(const fs::path& root) {
  PipelineRun r;
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream out, err;
  const fs::path data = root / "data", run = root / "run";
  r.synth = app::cmd_synth(data, 20, 0, 64, out, err);

  // The shipped example config with paths redirected into the scratch root.
  auto cfg = load_config(fs::path(VCE_SOURCE_DIR) / "configs" / "synthetic_tiny.cfg");
  cfg.data_root = data.string();
  cfg.output_dir = run.string();
  std::ofstream(root / "run.cfg") << dump_config(cfg);

  r.train = app::cmd_train(root / "run.cfg", out, err);
  if (r.train == 0) {
    r.evaluate = app::cmd_evaluate(run / "best.ckpt", data, "val", std::nullopt, out, err);
    r.visualize = app::cmd_visualize(run / "best.ckpt", data, "val", std::nullopt, out, err);
    r.predict = app::cmd_predict(run / "best.ckpt", data / "Polyp", root / "pred", out, err);
  }
  for (const char* f : {"best.ckpt", "history.csv", "history.json", "curves.png", "curves.csv", "report.json",
                        "confusion.png", "confusion.csv", "roc.png", "roc.json", "tsne.png", "tsne.csv"})
    if (!fs::exists(run / f)) r.missing.emplace_back(f);
  for (const char* f : {"predictions.csv", "probabilities.json"})
    if (!fs::exists(root / "pred" / f)) r.missing.emplace_back(f);
  if (fs::exists(run / "report.json")) {
    r.report_json = slurp(run / "report.json");
    r.val_acc = nlohmann::json::parse(r.report_json)["accuracy"].get<double>();
  }
  if (fs::exists(run / "history.csv")) r.history_csv = slurp(run / "history.csv");
  if (!err.str().empty()) std::fprintf(stderr, "%s", err.str().c_str());
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

testing::TempDir& e2e_dir(int which) {
  static testing::TempDir dirs[2];
  return dirs[which];
}

const PipelineRun& pipeline(int which) {
  static const PipelineRun runs[2] = {run_pipeline(e2e_dir(0).path()), run_pipeline(e2e_dir(1).path())};
  return runs[which];
}

Outcome end_to_end() {
  const auto& r = pipeline(0);
  std::string missing;
  for (const auto& m : r.missing) missing += " " + m;
  const bool ok = r.synth == 0 && r.train == 0 && r.evaluate == 0 && r.visualize == 0 && r.predict == 0 &&
                  r.missing.empty() && r.val_acc >= 0.8 && r.seconds < 600.0;
  return {ok, fmt("exit codes synth %d train %d evaluate %d visualize %d predict %d, missing artifacts:%s, "
                  "val accuracy %.4f (need >= 0.8), %.1f s",
                  r.synth, r.train, r.evaluate, r.visualize, r.predict, missing.empty() ? " none" : missing.c_str(),
                  r.val_acc, r.seconds)};
}

Outcome determinism() {
  const auto& a = pipeline(0);
  const auto& b = pipeline(1);
  const bool history = !a.history_csv.empty() && a.history_csv == b.history_csv;
  const bool report = !a.report_json.empty() && a.report_json == b.report_json;
  return {history && report, fmt("history.csv %s, report.json %s across two seeded runs",
                                 history ? "identical" : "DIFFERS", report ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------- t-SNE

Outcome tsne_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(41);
  constexpr int n = 200, d = 16;
  Matrix x(n, d);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = i < n / 2 ? 0 : 1;
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal() + (i < n / 2 ? 0.0 : 6.0);
  }
  TsneConfig cfg;
  cfg.seed = 42;
  const Matrix P = pairwise_affinities(x, effective_perplexity(cfg.perplexity, n));
  const double sum_err = std::abs(P.sum() - 1.0);
  const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
  const double diag = P.diagonal().cwiseAbs().maxCoeff();
  const bool nonneg = P.minCoeff() >= 0.0;
  const auto emb = tsne_embed(x, labels, cfg);
  const double purity = testing::two_means_purity(emb.coords, labels);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = sum_err <= 1e-6 && asym == 0.0 && diag == 0.0 && nonneg && emb.final_kl < emb.initial_kl &&
                  purity >= 0.9 && secs < 60.0;
  return {ok, fmt("N=%d: |sum P - 1| %.1e, max|P - P^T| %.1e, max diag %.1e, min %s 0; KL %.4f -> %.4f; "
                  "2-means purity %.3f (need >= 0.9); %.1f s",
                  n, sum_err, asym, diag, nonneg ? ">=" : "<", emb.initial_kl, emb.final_kl, purity, secs)};
}

// ---------------------------------------------------------------- defaults

Outcome adam_and_defaults() {
  TrainingConfig cfg;
  cfg.weight_decay = 0.0;
  std::vector<double> p{0.0}, g{1.0}, m{0.0}, v{0.0};
  adam_update(p, g, m, v, cfg, 1);
  const double step = std::abs(p[0]);
  const bool step_ok = std::abs(step - cfg.lr) <= 1e-6;

  const std::string golden = slurp(fs::path(VCE_GOLDEN_DIR) / "default_config.txt");
  const std::string dumped = dump_config(RunConfig{});
  const bool golden_ok = !golden.empty() && golden == dumped;
  const RunConfig def;
  const bool table_ok = def.train.lr == 1e-4 && def.train.batch_size == 32 && def.train.epochs == 50 &&
                        def.train.weight_decay == 1e-4;
  return {step_ok && golden_ok && table_ok,
          fmt("first step %.10g vs lr %.10g (tol 1e-6); default dump %s golden file (%zu bytes); "
              "lr/batch/epochs/wd = %g/%d/%d/%g",
              step, cfg.lr, golden_ok ? "byte-identical to" : "DIFFERS from", golden.size(), def.train.lr,
              def.train.batch_size, def.train.epochs, def.train.weight_decay)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"metric-oracle equivalence", metric_oracle},
      {"micro-F1 identity", micro_f1_identity},
      {"shape algebra", shape_algebra},
      {"gradient check", gradient_check},
      {"overfit smoke test", overfit},
      {"end-to-end synthetic run", end_to_end},
      {"determinism", determinism},
      {"t-SNE properties", tsne_properties},
      {"Adam first step + default-config golden", adam_and_defaults},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
