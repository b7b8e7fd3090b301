// mvhgnn: file-composable command-line front end.
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mvhgnn/gradcheck.hpp"
#include "mvhgnn/pipeline.hpp"

using namespace mvhgnn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitFile = 3;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kArgument:
      return kExitConfig;
    case ErrorCode::kIo:
    case ErrorCode::kBadMagic:
    case ErrorCode::kTruncated:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kUnlabeled:
      return kExitFile;
    default:
      return 1;
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

struct GenDataArgs {
  std::size_t classes = 8;
  std::size_t per_class = 30;
  std::size_t sketches = 20;
  std::size_t views = 12;
  std::size_t dim = 64;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string config;
  std::string mode;
  int stage = -1;
  std::string data, out, init;
  std::vector<std::string> overrides;
  bool print = false;
};

struct EncodeArgs {
  std::string ckpt, in, out, splits, role;
};

struct RetrieveArgs {
  std::string query, gallery, out;
  std::size_t top = 10;
};

struct EvalArgs {
  std::string query, gallery, hist, json;
  std::size_t bins = 40;
};

int gen_data(const GenDataArgs& a) {
  SynthConfig c;
  c.class_count = a.classes;
  c.per_class = a.per_class;
  c.sketches_per_class = a.sketches;
  c.views = a.views;
  c.feature_dim = c.sketch_dim = c.proto_dim = a.dim;
  c.sketch_noise = a.noise;
  c.seed = a.seed;
  const Dataset d = generate_dataset(c);
  save_dataset(a.out, d);
  std::cout << "wrote " << d.shapes.size() << " shapes, " << d.sketches.size() << " sketches, " << d.classes.size()
            << " classes to " << a.out << "\n";
  return 0;
}

int train_cmd(const TrainArgs& a) {
  std::string path = a.config;
  if (path.empty()) {
    if (const char* env = std::getenv("MVHGNN_CONFIG")) path = env;
  }
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (!a.mode.empty()) cfg.set("mode", a.mode);
  if (a.stage >= 0) cfg.set("stage", std::to_string(a.stage));
  if (!a.data.empty()) cfg.data = a.data;
  if (!a.out.empty()) cfg.out = a.out;
  if (!a.init.empty()) cfg.init = a.init;
  for (const auto& kv : a.overrides) apply_run_config(cfg, kv);
  cfg.validate();
  if (a.print) {
    std::cout << cfg.to_text();
    return 0;
  }
  run_training(cfg);
  std::cout << "checkpoint " << (cfg.out / "model.mvhf").string() << "\n";
  return 0;
}

int encode_cmd(const EncodeArgs& a) {
  const Model model = load_checkpoint(a.ckpt);
  const FeatureArchive in = read_archive(a.in);
  std::optional<std::vector<std::size_t>> rows;
  if (!a.splits.empty()) {
    if (a.role.empty()) throw Error(ErrorCode::kConfig, "--splits needs --role query|gallery");
    const SplitRoles roles = read_splits(a.splits);
    rows = a.role == "query" ? roles.query : roles.gallery;
  } else if (!a.role.empty()) {
    throw Error(ErrorCode::kConfig, "--role needs --splits");
  }
  const FeatureArchive out = encode_items(model, in, rows);
  write_archive(a.out, out);
  std::cout << "encoded " << out.tensor("embeddings").dims[0] << " items to " << a.out << "\n";
  return 0;
}

int retrieve_cmd(const RetrieveArgs& a) {
  const LabeledRun run = load_retrieval_run(read_archive(a.query), read_archive(a.gallery));
  const std::string text = ranked_lists_json(run, a.top);
  if (a.out.empty()) std::cout << text;
  else write_file(a.out, text);
  return 0;
}

int eval_cmd(const EvalArgs& a) {
  const LabeledRun lr = load_retrieval_run(read_archive(a.query), read_archive(a.gallery));
  const MetricTable t = compute_metrics(lr.run);
  std::cout << t.to_text();
  if (!a.json.empty()) write_file(a.json, t.to_json() + "\n");
  if (!a.hist.empty()) write_file(a.hist, distance_histograms(lr.run.gallery, lr.run.gallery_labels, a.bins).to_csv());
  return 0;
}

int gradcheck_cmd(const std::string& module) {
  bool ok = true;
  for (const auto& c : run_gradcheck_suite(module)) {
    std::printf("%-28s seeds %2d  worst %.3e  %s\n", c.name.c_str(), c.seeds, c.worst_error, c.passed ? "ok" : "FAIL");
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view hierarchical graph encoder for sketch-to-3D retrieval"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset (shapes, sketches, prototypes) as MVHF archives");
  gen->add_option("--classes", gd.classes, "Number of primitive classes (2-8)")->capture_default_str();
  gen->add_option("--per-class", gd.per_class, "Shapes per class")->capture_default_str();
  gen->add_option("--sketches-per-class", gd.sketches, "Sketches per class")->capture_default_str();
  gen->add_option("--views", gd.views, "Cameras per shape")->capture_default_str();
  gen->add_option("--dim", gd.dim, "Width of view features, sketch features and prototypes")->capture_default_str();
  gen->add_option("--noise", gd.noise, "Sketch noise in [0, 1]")->capture_default_str();
  gen->add_option("--seed", gd.seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", gd.out, "Output directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train on a gen-data directory; writes model.mvhf, train_log.jsonl, splits.json");
  train->add_option("--config", tr.config, "key = value config file (default: $MVHGNN_CONFIG if set)");
  train->add_option("--mode", tr.mode, "category or zeroshot")->check(CLI::IsMember({"category", "zeroshot"}));
  train->add_option("--stage", tr.stage, "Run only stage 1 or 2 of the two-stage schedule")->check(CLI::IsMember({1, 2}));
  train->add_option("--data", tr.data, "Dataset directory (overrides 'data')");
  train->add_option("--out", tr.out, "Run directory (overrides 'out')");
  train->add_option("--init", tr.init, "Stage-1 checkpoint for --stage 2 (overrides 'init')");
  train->add_option("--set", tr.overrides, "Extra key=value override, repeatable");
  train->add_flag("--print-config", tr.print, "Print the resolved config and exit");

  EncodeArgs en;
  auto* encode = app.add_subcommand("encode", "Embed a shape or sketch archive with a checkpoint");
  encode->add_option("--ckpt", en.ckpt, "Checkpoint (model.mvhf)")->required();
  encode->add_option("--in", en.in, "Input archive (shapes.mvhf or sketches.mvhf)")->required();
  encode->add_option("--out", en.out, "Output embedding archive")->required();
  encode->add_option("--splits", en.splits, "splits.json from train; restricts rows to --role");
  encode->add_option("--role", en.role, "query (test sketches) or gallery")->check(CLI::IsMember({"query", "gallery"}));

  RetrieveArgs re;
  auto* retrieve = app.add_subcommand("retrieve", "Ranked gallery lists per query as JSON");
  retrieve->add_option("--query", re.query, "Query embedding archive")->required();
  retrieve->add_option("--gallery", re.gallery, "Gallery embedding archive")->required();
  retrieve->add_option("--top", re.top, "Results per query")->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_option("--out", re.out, "Write JSON here instead of stdout");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Metric table NN FT ST nDCG E MRR mAP");
  eval->add_option("--query", ev.query, "Query embedding archive")->required();
  eval->add_option("--gallery", ev.gallery, "Gallery embedding archive")->required();
  eval->add_option("--hist", ev.hist, "Write gallery intra/inter-class distance histograms (CSV)");
  eval->add_option("--bins", ev.bins, "Histogram bins over [0, 2]")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--json", ev.json, "Also write the table as JSON");

  std::string module = "all";
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite; nonzero exit on failure");
  grad->add_option("--module", module, "all, core, encoder or losses")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "core", "encoder", "losses"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return gen_data(gd);
    if (*train) return train_cmd(tr);
    if (*encode) return encode_cmd(en);
    if (*retrieve) return retrieve_cmd(re);
    if (*eval) return eval_cmd(ev);
    if (*grad) return gradcheck_cmd(module);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
