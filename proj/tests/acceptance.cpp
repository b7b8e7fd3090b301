// Acceptance runner: one PASS/FAIL line per criterion.
//   mvhgnn_acceptance [criterion ...]   (no arguments runs all of them)
// Exit status is nonzero when any selected criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mvhgnn/gradcheck.hpp"
#include "mvhgnn/trainer.hpp"
#include "support/metric_oracle.hpp"

using namespace mvhgnn;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<std::string> kUnseen{"ellipsoid", "prism"};

struct DeskRun {
  Dataset data;
  Model model;
  MetricTable metrics;
  RetrievalRun run;
};

DeskRun desk_run(SplitMode mode, std::uint64_t seed, const std::function<void(TrainConfig&)>& tweak = {}) {
  SynthConfig sc;
  sc.seed = seed;
  DeskRun r;
  r.data = make_splits(generate_dataset(sc), mode, seed, mode == SplitMode::kZeroShot ? kUnseen : std::vector<std::string>{});
  TrainConfig c = desk_config();
  c.mode = mode;
  c.seed = seed;
  if (tweak) tweak(c);
  r.model = train(r.data, c);
  r.run = retrieval_run(r.model, r.data);
  r.metrics = compute_metrics(r.run);
  return r;
}

Verdict gradient() {
  const auto t0 = Clock::now();
  const auto cases = run_gradcheck_suite("all", 20, 1e-4);
  const double t = seconds_since(t0);
  std::size_t ok = 0;
  double worst = 0.0;
  std::string failed;
  for (const auto& c : cases) {
    ok += c.passed;
    worst = std::max(worst, c.worst_error);
    if (!c.passed) failed += " " + c.name;
  }
  const bool pass = ok == cases.size() && t < 120.0;
  return {pass, fmt("%zu/%zu cases over 20 seeds, worst rel err %.2e, %.1fs%s", ok, cases.size(), worst, t,
                    failed.empty() ? "" : (" failed:" + failed).c_str())};
}

double stochastic_error(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) {
      if (v < 0.0) worst = std::max(worst, -v);
      s += v;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

Verdict structural() {
  const auto t0 = Clock::now();
  const EncoderConfig cfg = desk_config().encoder;
  const CameraRig rig = build_camera_rig(12);
  std::mt19937_64 rng(99);
  double row_err = 0.0, perm_err = 0.0;
  bool trace_ok = true;
  std::size_t perms = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const ParamSet p = init_shape_encoder(cfg, rng);
    const Matrix f = random_matrix(12, cfg.feature_dim, rng, -1.0, 1.0);
    EncodeTrace trace;
    const ShapeEmbedding base = encode_shape(ViewSet{f, rig}, p, cfg, &trace);
    trace_ok = trace_ok && trace.node_counts == std::vector<std::size_t>{12, 6, 3};
    for (const auto* group : {&trace.local_attention, &trace.global_attention, &trace.assignments})
      for (const Matrix& m : *group) row_err = std::max(row_err, stochastic_error(m));
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (int k = 0; k < 10; ++k, ++perms) {
      std::shuffle(perm.begin(), perm.end(), rng);
      const ShapeEmbedding e = encode_shape(ViewSet{gather_rows(f, perm), rig.permuted(perm)}, p, cfg);
      perm_err = std::max(perm_err, max_abs_diff(e.vector, base.vector));
    }
  }
  const double t = seconds_since(t0);
  const bool pass = row_err <= 1e-9 && perm_err <= 1e-9 && trace_ok && t < 60.0;
  return {pass, fmt("row-sum err %.1e, %zu permutations max diff %.1e, node trace %s, %.1fs", row_err, perms, perm_err,
                    trace_ok ? "[12, 6, 3]" : "WRONG", t)};
}

Verdict metric_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t exact = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const RetrievalRun run = oracle::random_instance(rng);
    exact += oracle::equals(oracle::evaluate(run), compute_metrics(run));
  }
  RetrievalRun hand;
  hand.queries = Matrix{{1, 0}};
  hand.query_labels = {0};
  hand.gallery = Matrix{{1, 0}, {0.9, 0.5}, {0.5, 0.9}, {0, 1}};
  hand.gallery_labels = {0, 1, 0, 1};
  const double ap = compute_metrics(hand).map;
  const bool hand_ok = std::round(ap * 100.0) / 100.0 == 83.33 && ap == oracle::evaluate(hand).map;
  const double t = seconds_since(t0);
  return {exact == 200 && hand_ok && t < 60.0,
          fmt("%zu/200 instances exact, hand AP %.4f, %.1fs", exact, ap, t)};
}

Verdict category() {
  const auto t0 = Clock::now();
  const DeskRun r = desk_run(SplitMode::kCategory, 0);
  const double t = seconds_since(t0);
  const bool pass = r.metrics.map >= 90.0 && r.metrics.nn >= 90.0 && t < 900.0;
  return {pass, fmt("mAP %.2f NN %.2f (need >= 90 each) on %zu queries, %.1fs", r.metrics.map, r.metrics.nn,
                    r.run.queries.rows(), t)};
}

Verdict zeroshot() {
  const auto t0 = Clock::now();
  const DeskRun r = desk_run(SplitMode::kZeroShot, 0);
  const double baseline = random_map_baseline(r.run, 100, 1);
  const double t = seconds_since(t0);
  const bool pass = r.metrics.map >= 2.0 * baseline && t < 900.0;
  return {pass, fmt("unseen mAP %.2f vs random %.2f (ratio %.2f, need >= 2), %.1fs", r.metrics.map, baseline,
                    r.metrics.map / baseline, t)};
}

Verdict ablations() {
  const auto t0 = Clock::now();
  struct Check {
    const char* name;
    SplitMode mode;
    std::function<void(TrainConfig&)> variant;  // the full run must beat it
  };
  const std::vector<Check> checks = {
      {"hierarchy>level1", SplitMode::kCategory, [](TrainConfig& c) { c.encoder.schedule = {12}; }},
      {"12views>1view", SplitMode::kCategory,
       [](TrainConfig& c) {
         c.views = 1;
         c.encoder.schedule = {1};
       }},
      {"quad helps category", SplitMode::kCategory, [](TrainConfig& c) { c.losses.w_quad = 0.0; }},
      {"quad helps zero-shot", SplitMode::kZeroShot, [](TrainConfig& c) { c.losses.w_quad = 0.0; }},
      {"two-stage>one-stage (category)", SplitMode::kCategory,
       [](TrainConfig& c) { c.strategy = Strategy::kOneStage; }},
      {"one-stage>two-stage (zero-shot)", SplitMode::kZeroShot,
       [](TrainConfig& c) { c.strategy = Strategy::kTwoStage; }},
  };
  std::vector<double> full_cat, full_zs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    full_cat.push_back(desk_run(SplitMode::kCategory, s).metrics.map);
    full_zs.push_back(desk_run(SplitMode::kZeroShot, s).metrics.map);
  }
  bool all = true;
  std::string detail;
  for (const auto& c : checks) {
    int wins = 0;
    std::string scores;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const double full = c.mode == SplitMode::kCategory ? full_cat[s] : full_zs[s];
      const double ablated = desk_run(c.mode, s, c.variant).metrics.map;
      wins += full > ablated;
      scores += fmt(" %.1f/%.1f", full, ablated);
    }
    const bool ok = wins >= 2;
    all = all && ok;
    detail += fmt("\n    %-4s %-32s %d/3 seeds, mAP full/ablated:%s", ok ? "ok" : "MISS", c.name, wins, scores.c_str());
  }
  return {all, fmt("%.1fs", seconds_since(t0)) + detail};
}

Verdict separation() {
  const DeskRun r = desk_run(SplitMode::kCategory, 0);
  TrainConfig c = desk_config();
  const Model untrained = init_model(r.data, c);
  const auto idx = r.data.shape_indices(Split::kTest);
  std::vector<std::size_t> labels;
  for (std::size_t i : idx) labels.push_back(r.data.shapes[i].label);
  const double trained = margin_statistic(embed_shapes(r.model, r.data, idx), labels);
  const double random = margin_statistic(embed_shapes(untrained, r.data, idx), labels);
  return {trained > random, fmt("gallery margin trained %.4f vs random init %.4f", trained, random)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / "mvhgnn_acceptance_det";
  fs::create_directories(dir);
  std::string tables[2];
  for (int k = 0; k < 2; ++k) {
    const DeskRun r = desk_run(SplitMode::kCategory, 7);
    save_checkpoint(dir / ("run" + std::to_string(k) + ".mvhf"), r.model);
    tables[k] = r.metrics.to_text() + r.metrics.to_json();
  }
  const bool ckpt = slurp(dir / "run0.mvhf") == slurp(dir / "run1.mvhf") &&
                    slurp(manifest_path(dir / "run0.mvhf")) == slurp(manifest_path(dir / "run1.mvhf"));
  const bool table = tables[0] == tables[1];
  const std::size_t bytes = fs::file_size(dir / "run0.mvhf");
  fs::remove_all(dir);
  return {ckpt && table, fmt("checkpoints (%zu bytes) %s, metric tables %s", bytes, ckpt ? "identical" : "DIFFER",
                             table ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient", gradient},   {"structural", structural}, {"metric-oracle", metric_oracle},
      {"category", category},   {"zeroshot", zeroshot},     {"ablations", ablations},
      {"separation", separation}, {"determinism", determinism},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == w; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", w.c_str());
      return 2;
    }
  }
  bool all = true;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %-14s %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
