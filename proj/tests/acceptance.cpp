// Acceptance suite: one PASS/FAIL line per criterion. Thresholds and run
// sizes are fixed here; the process exits non-zero if any criterion fails.
//
//   acceptance            run everything
//   acceptance NAME...    run the named criteria only

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "test_support.hpp"
#include "wbk/checkpoint.hpp"
#include "wbk/gradcheck.hpp"
#include "wbk/losses.hpp"
#include "wbk/metrics.hpp"
#include "wbk/report.hpp"
#include "wbk/synth.hpp"
#include "wbk/train.hpp"
#include "wbk/weakbox.hpp"

using namespace wbk;
using wbk::testing::random_binary;
using wbk::testing::random_dim;
using wbk::testing::random_soft;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---------------------------------------------------------------------------

constexpr int kOracleMasks = 1000;
constexpr int kOracleMaxSide = 32;
constexpr double kOracleSeconds = 10.0;

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  CounterRng rng(0x0A11CE);
  int mismatches = 0;
  for (int k = 0; k < kOracleMasks; ++k) {
    const int h = random_dim(rng, 1, kOracleMaxSide);
    const int w = random_dim(rng, 1, kOracleMaxSide);
    const Grid p = random_binary(rng, h, w, rng.uniform(0.01f, 0.3f));
    const Grid expect = oracle::indicator_outer(p);
    const Grid grid_path = backproject_min(project(p)).grid;
    const Grid tensor_path = backproject_min(project(Tensor::from_grid(p))).to_grid();
    bool ok = grid_path == expect && tensor_path == expect;
    if (has_foreground(p)) {
      const Mm2bResult m = mm2b(p);
      if (m.status.status == CenterKind::Foreground) ok = ok && m.box.grid == expect;
    }
    if (!ok) ++mismatches;
  }
  const double s = seconds_since(t0);
  return {mismatches == 0 && s < kOracleSeconds,
          fmt("%d/%d masks differ, %.2f s (limit %.0f s)", mismatches, kOracleMasks, s, kOracleSeconds)};
}

constexpr int kAlgebraMasks = 1000;

Outcome algebraic_suite() {
  CounterRng rng(0xB0C5);
  auto t1 = [](const Grid& g) { return backproject_min(project(g)).grid; };
  int idem = 0, mono = 0, thresh = 0, cover = 0;
  for (int k = 0; k < kAlgebraMasks; ++k) {
    const int h = random_dim(rng, 1, kOracleMaxSide);
    const int w = random_dim(rng, 1, kOracleMaxSide);

    const Grid binary = random_binary(rng, h, w, rng.uniform(0.01f, 0.3f));
    if (t1(t1(binary)) != t1(binary)) ++idem;

    const Grid p = random_soft(rng, h, w);
    Grid q = p;
    for (float& v : q.data) {
      if (rng.uniform() < 0.3f) v = std::min(1.0f, v + rng.uniform());
    }
    const Grid tp = t1(p), tq = t1(q);
    for (std::size_t i = 0; i < tp.size(); ++i) {
      if (tp.data[i] > tq.data[i]) {
        ++mono;
        break;
      }
    }

    const float t = rng.uniform(0.01f, 0.99f);
    if (t1(threshold_grid(p, t)) != threshold_grid(tp, t)) ++thresh;

    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.data[i] > tp.data[i]) {
        ++cover;
        break;
      }
    }
  }
  const int total = idem + mono + thresh + cover;
  return {total == 0, fmt("violations: idempotence %d, monotonicity %d, threshold %d, coverage %d over %d masks each",
                          idem, mono, thresh, cover, kAlgebraMasks)};
}

constexpr int kGradInstances = 20;
constexpr double kGradTolerance = 1e-3;
constexpr double kGradSeconds = 60.0;

Outcome gradient_suite() {
  GradcheckOptions opt;
  opt.instances = kGradInstances;
  opt.tolerance = kGradTolerance;
  const GradcheckReport r = run_gradcheck(opt);
  std::string failed;
  double worst = 0.0;
  bool counts_ok = true;
  for (const GradcheckCase& c : r.cases) {
    worst = std::max(worst, c.max_error);
    if (!c.passed) failed += " " + c.name;
    if (c.instances != kGradInstances) counts_ok = false;
  }
  const bool pass = r.all_passed() && counts_ok && r.seconds < kGradSeconds;
  return {pass, fmt("%zu cases x %d instances, worst rel error %.2e (limit %.0e), %.2f s%s%s", r.cases.size(),
                    kGradInstances, worst, kGradTolerance, r.seconds, failed.empty() ? "" : ", failed:",
                    failed.c_str())};
}

constexpr int kHdPairs = 200;
constexpr double kHdTolerance = 1e-9;

Outcome hd95_oracle() {
  CounterRng rng(0x4D95);
  int bad = 0;
  double worst = 0.0;
  for (int k = 0; k < kHdPairs; ++k) {
    const int h = random_dim(rng, 1, 64);
    const int w = random_dim(rng, 1, 64);
    Grid a = random_binary(rng, h, w, rng.uniform(0.005f, 0.2f));
    Grid b = random_binary(rng, h, w, rng.uniform(0.005f, 0.2f));
    a.at(random_dim(rng, 0, h - 1), random_dim(rng, 0, w - 1)) = 1.0f;
    b.at(random_dim(rng, 0, h - 1), random_dim(rng, 0, w - 1)) = 1.0f;
    const double err = std::abs(hd95(a, b) - oracle::hd95_brute(a, b));
    worst = std::max(worst, err);
    if (!(err <= kHdTolerance)) ++bad;
  }
  return {bad == 0, fmt("%d/%d pairs off, worst |diff| %.1e (limit %.0e)", bad, kHdPairs, worst, kHdTolerance)};
}

Outcome loss_unit_values() {
  const Grid target(4, 4, {1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 0, 0, 1, 1});
  const double bce = bce_loss(Tensor(Shape{1, 1, 4, 4}, 0.5f), target).item();

  Grid pred(8, 8), disjoint(8, 8);
  for (int j = 0; j < 8; ++j) {
    pred.at(0, j) = 1.0f;
    disjoint.at(7, j) = 1.0f;
  }
  const double dice = dice_loss(Tensor::from_grid(pred), disjoint, 1.0f).item();

  const LossConfig defaults;
  const double refine = defaults.lambda1 * 0.5 + defaults.lambda2 * 0.6931;

  const bool pass = std::abs(bce - std::numbers::ln2) <= 1e-6 && std::abs(dice - 0.9412) <= 1e-4 &&
                    std::abs(refine - 0.53862) <= 1e-5;
  return {pass, fmt("bce(0.5) = %.8f (ln2 %.8f), dice disjoint = %.6f (0.9412), refine(0.5, 0.6931) = %.6f (0.53862)",
                    bce, std::numbers::ln2, dice, refine)};
}

// ---------------------------------------------------------------------------
// Training-based criteria.

std::vector<Sample> dataset(std::uint64_t seed, int count, int first, int max_objects) {
  DatasetSpec spec;
  spec.seed = seed;
  spec.count = count;
  spec.first = first;
  spec.min_objects = 1;
  spec.max_objects = max_objects;
  return generate_dataset(spec);
}

constexpr int kTrainSamples = 200;
constexpr int kHeldOut = 50;
constexpr int kEpochs = 30;
constexpr double kMinDsc = 0.80;
constexpr double kLossRatio = 0.5;
constexpr double kEndToEndSeconds = 15 * 60;

Outcome end_to_end() {
  const auto t0 = Clock::now();
  const std::vector<Sample> train = dataset(42, kTrainSamples, 0, 1);
  const std::vector<Sample> held = dataset(42, kHeldOut, kTrainSamples, 1);
  RunConfig cfg;
  cfg.seed = 42;
  cfg.epochs = kEpochs;
  Checkpoint ck = train_weak(cfg, train);
  const double dsc = mean_row(evaluate(ck.params, cfg.net, held).coarse).dsc;
  const double s = seconds_since(t0);
  const double first = ck.epoch_losses.front(), last = ck.epoch_losses.back();
  const bool pass = dsc >= kMinDsc && last < kLossRatio * first && s < kEndToEndSeconds;
  return {pass, fmt("held-out DSC %.4f (>= %.2f), loss %.4f -> %.4f (ratio %.3f < %.1f), %.0f s (limit %.0f s)", dsc,
                    kMinDsc, first, last, last / first, kLossRatio, s, kEndToEndSeconds)};
}

// Ablations run at a reduced scale: 10 seeds x several runs each would not
// fit the single-core budget at the full size.
constexpr int kAblationSeeds = 10;
constexpr int kAblationTrain = 100;
constexpr int kAblationEpochs = 10;
constexpr int kAblationMaxObjects = 3;

struct SeedRuns {
  double dsc_full = 0, dsc_no_cnn = 0;
  double dsc_refined = 0, hd_coarse = 0, hd_refined = 0;
  double dsc_box = 0;
  double gap_sc = 0, gap_no_sc = 0;
};

std::vector<SeedRuns>& ablation_runs() {
  static std::vector<SeedRuns> runs;
  if (!runs.empty()) return runs;
  for (int s = 0; s < kAblationSeeds; ++s) {
    const auto t0 = Clock::now();
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);
    const std::vector<Sample> train = dataset(seed, kAblationTrain, 0, kAblationMaxObjects);
    const std::vector<Sample> held = dataset(seed, kHeldOut, kAblationTrain, kAblationMaxObjects);
    RunConfig cfg;
    cfg.seed = seed;
    cfg.epochs = kAblationEpochs;
    SeedRuns r;

    const Checkpoint refiner = train_refine(cfg, train);
    WeakOptions wo;
    wo.refine = &refiner.params;
    Checkpoint full = train_weak(cfg, train, wo);
    const Evaluation ev = evaluate(full.params, cfg.net, held);
    r.dsc_full = mean_row(ev.coarse).dsc;
    r.hd_coarse = mean_row(ev.coarse).hd95;
    r.dsc_refined = mean_row(ev.refined).dsc;
    r.hd_refined = mean_row(ev.refined).hd95;
    r.gap_sc = scale_gap(full.params, cfg, held);

    RunConfig no_cnn = cfg;
    no_cnn.net.use_cnn = false;
    Checkpoint plain = train_weak(no_cnn, train);
    r.dsc_no_cnn = mean_row(evaluate(plain.params, no_cnn.net, held).coarse).dsc;

    RunConfig no_sc = cfg;
    no_sc.sc_weight = 0.0f;
    Checkpoint unreg = train_weak(no_sc, train);
    r.gap_no_sc = scale_gap(unreg.params, no_sc, held);

    RunConfig box = cfg;
    box.supervision = Supervision::Box;
    box.sc_weight = 0.0f;
    Checkpoint naive = train_weak(box, train);
    r.dsc_box = mean_row(evaluate(naive.params, box.net, held).coarse).dsc;

    std::printf("  seed %llu: dsc %.4f no-cnn %.4f refined %.4f box %.4f | hd95 %.3f -> %.3f | gap %.4f no-sc %.4f (%.0f s)\n",
                static_cast<unsigned long long>(seed), r.dsc_full, r.dsc_no_cnn, r.dsc_refined, r.dsc_box,
                r.hd_coarse, r.hd_refined, r.gap_sc, r.gap_no_sc, seconds_since(t0));
    std::fflush(stdout);
    runs.push_back(r);
  }
  return runs;
}

constexpr int kCnnSeedsNeeded = 7;
constexpr int kRefineSeedsNeeded = 8;
constexpr double kBoxMargin = 0.03;
constexpr int kScSeedsNeeded = 8;

Outcome ablation_cnn() {
  int ok = 0;
  for (const SeedRuns& r : ablation_runs()) ok += r.dsc_full >= r.dsc_no_cnn;
  return {ok >= kCnnSeedsNeeded, fmt("CNN block + gate keeps DSC in %d/%d seeds (need %d)", ok, kAblationSeeds,
                                     kCnnSeedsNeeded)};
}

Outcome ablation_refine() {
  int ok = 0;
  for (const SeedRuns& r : ablation_runs()) ok += r.hd_refined < r.hd_coarse && r.dsc_refined >= r.dsc_full;
  return {ok >= kRefineSeedsNeeded, fmt("frozen refiner lowers HD95 without lowering DSC in %d/%d seeds (need %d)", ok,
                                        kAblationSeeds, kRefineSeedsNeeded)};
}

Outcome ablation_box_baseline() {
  double mm2b = 0, box = 0;
  for (const SeedRuns& r : ablation_runs()) {
    mm2b += r.dsc_full;
    box += r.dsc_box;
  }
  mm2b /= kAblationSeeds;
  box /= kAblationSeeds;
  return {mm2b - box >= kBoxMargin,
          fmt("MM2B+SC DSC %.4f vs box-as-mask %.4f, margin %.4f (need %.2f), 1-%d objects per image", mm2b, box,
              mm2b - box, kBoxMargin, kAblationMaxObjects)};
}

Outcome scale_consistency() {
  int ok = 0;
  for (const SeedRuns& r : ablation_runs()) ok += r.gap_sc < r.gap_no_sc;
  return {ok >= kScSeedsNeeded, fmt("sc_loss lowers in-box |P1 - P2| in %d/%d seeds (need %d)", ok, kAblationSeeds,
                                    kScSeedsNeeded)};
}

Outcome determinism() {
  const std::vector<Sample> train = dataset(7, 40, 0, 2);
  const std::vector<Sample> held = dataset(7, 12, 40, 2);
  RunConfig cfg;
  cfg.seed = 7;
  cfg.epochs = 4;
  cfg.refine_epochs = 5;
  cfg.refine_label_fraction = 0.2f;

  auto run = [&]() {
    const Checkpoint refiner = train_refine(cfg, train);
    WeakOptions wo;
    wo.refine = &refiner.params;
    Checkpoint weak = train_weak(cfg, train, wo);
    const Evaluation ev = evaluate(weak.params, cfg.net, held);
    return std::vector<std::string>{encode_checkpoint(refiner), encode_checkpoint(weak),
                                    format_metrics_report(ev.coarse, ReportFormat::Csv),
                                    format_metrics_report(ev.refined, ReportFormat::Jsonl)};
  };
  const bool same_runs = run() == run();

  const Checkpoint straight = train_weak(cfg, train);
  WeakOptions first;
  first.stop_after = 2;
  const Checkpoint partial = decode_checkpoint(encode_checkpoint(train_weak(cfg, train, first)));
  WeakOptions rest;
  rest.resume = &partial;
  const Checkpoint resumed = train_weak(cfg, train, rest);
  const bool same_resume = encode_checkpoint(straight) == encode_checkpoint(resumed);
  return {same_runs && same_resume, fmt("repeat run byte-identical: %s; resume at epoch 2 equals straight run: %s",
                                        same_runs ? "yes" : "no", same_resume ? "yes" : "no")};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {"oracle-equivalence", oracle_equivalence},
      {"mm2b-algebra", algebraic_suite},
      {"gradient-suite", gradient_suite},
      {"hd95-oracle", hd95_oracle},
      {"loss-unit-values", loss_unit_values},
      {"end-to-end-weak", end_to_end},
      {"ablation-cnn-gate", ablation_cnn},
      {"ablation-refiner", ablation_refine},
      {"ablation-box-baseline", ablation_box_baseline},
      {"scale-consistency", scale_consistency},
      {"determinism-persistence", determinism},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failures = 0, ran = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && !wanted.count(c.name)) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  if (ran == 0) {
    std::fprintf(stderr, "no criterion matched\n");
    return 2;
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
