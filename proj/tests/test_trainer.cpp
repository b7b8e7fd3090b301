#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mvhgnn/trainer.hpp"

using namespace mvhgnn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SynthConfig tiny_data() {
  SynthConfig c;
  c.class_count = 3;
  c.per_class = 5;
  c.sketches_per_class = 4;
  c.views = 6;
  c.feature_dim = 8;
  c.sketch_dim = 8;
  c.proto_dim = 8;
  c.seed = 3;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.epochs = 3;
  c.lr_start = 1e-2;
  c.lr_end = 1e-4;
  c.batch_size = 4;
  c.quadruplets = 8;
  c.encoder.feature_dim = 8;
  c.encoder.out_dim = 8;
  c.encoder.schedule = {6, 3};
  c.encoder.norm = NormMode::kNode;
  c.seed = 4;
  return c;
}

// Cosine nearest classifier row, recomputed from the raw weights.
double classifier_accuracy(const Model& m, const Dataset& d) {
  const auto idx = d.shape_indices(Split::kTest);
  const Matrix emb = embed_shapes(m, d, idx);
  const Matrix& w = m.params.at("classifier.weight");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t k = 0; k < w.rows(); ++k) {
      const double c = dot(emb.row(r), w.row(k)) / (l2_norm(emb.row(r)) * l2_norm(w.row(k)));
      if (c > best_cos) best_cos = c, best = k;
    }
    if (m.classifier_classes[best] == d.classes[d.shapes[idx[r]].label]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 100, 1e-4, 1e-6) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(cosine_lr(100, 100, 1e-4, 1e-6) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(cosine_lr(50, 100, 1e-4, 1e-6) == doctest::Approx(5.05e-5).epsilon(1e-12));
  for (std::size_t e = 1; e <= 100; ++e) CHECK(cosine_lr(e, 100, 1e-4, 1e-6) <= cosine_lr(e - 1, 100, 1e-4, 1e-6));
  CHECK_THROWS_AS(cosine_lr(0, 0, 1e-4, 1e-6), Error);
}

TEST_CASE("adam: zero gradient is a no-op, constant gradient steps by lr") {
  ParamSet p{{"w", Matrix{{1.0, -2.0, 0.5}}}};
  AdamState s;
  adam_step(p, {{"w", Matrix(1, 3)}}, s, 0.1);
  CHECK(p.at("w") == Matrix{{1.0, -2.0, 0.5}});

  AdamState s2;
  ParamSet q{{"w", Matrix{{0.0, 0.0}}}};
  const Matrix g{{3.0, -0.02}};
  for (int step = 1; step <= 5; ++step) {
    adam_step(q, {{"w", g}}, s2, 0.01);
    // Bias correction makes m_hat = g and v_hat = g^2 exactly.
    CHECK(q.at("w")(0, 0) == doctest::Approx(-0.01 * step).epsilon(1e-6));
    CHECK(q.at("w")(0, 1) == doctest::Approx(0.01 * step).epsilon(1e-5));
  }
  CHECK_THROWS_AS(adam_step(q, {{"missing", g}}, s2, 0.01), Error);
  CHECK_THROWS_AS(adam_step(q, {{"w", Matrix(2, 2)}}, s2, 0.01), Error);
}

TEST_CASE("quadruplet sampler respects class constraints") {
  Dataset d = generate_dataset(tiny_data());
  const auto quads = sample_quadruplets(d, 10000, 17);
  REQUIRE(quads.size() == 10000);
  for (const auto& q : quads) {
    const std::size_t c = d.sketches[q.anchor].label;
    CHECK(d.shapes[q.positive].label == c);
    CHECK(d.shapes[q.negative_shape].label != c);
    CHECK(d.sketches[q.negative_sketch].label != c);
  }
  CHECK(sample_quadruplets(d, 7, 1).size() == 7);

  std::vector<std::size_t> sk, sh;
  for (std::size_t i = 0; i < d.sketches.size(); ++i)
    if (d.sketches[i].label == 0) sk.push_back(i);
  for (std::size_t i = 0; i < d.shapes.size(); ++i)
    if (d.shapes[i].label == 0) sh.push_back(i);
  std::mt19937_64 rng(2);
  try {
    sample_quadruplets(d, sk, sh, 4, rng);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kArgument);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c = tiny_train();
  c.lr_end = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_train();
  c.mode = SplitMode::kZeroShot;
  c.stage = 2;
  CHECK_THROWS_AS(c.validate(), Error);
  c.strategy = Strategy::kTwoStage;
  CHECK_NOTHROW(c.validate());

  const Dataset d = make_splits(generate_dataset(tiny_data()), SplitMode::kCategory, 1);
  TrainConfig z = tiny_train();
  z.mode = SplitMode::kZeroShot;
  CHECK_THROWS_AS(train(d, z), Error);
}

TEST_CASE("stage 2 leaves the 3D side untouched") {
  const Dataset d = make_splits(generate_dataset(tiny_data()), SplitMode::kCategory, 1);
  const TrainConfig c = tiny_train();
  Model m = init_model(d, c);
  train_stage1(m, d, c);
  ParamSet before;
  for (const auto& [n, p] : m.params)
    if (is_stage1_param(n)) before.emplace(n, p);
  const ParamSet sketch_before{{"sketch.w1", m.params.at("sketch.w1")}};
  const StageReport r = train_stage2(m, d, c);
  CHECK(r.frozen_digest_before == r.frozen_digest_after);
  for (const auto& [n, p] : before) CHECK(m.params.at(n) == p);
  CHECK(m.params.at("sketch.w1") != sketch_before.at("sketch.w1"));
}

TEST_CASE("joint training on a zero-shot split never sees unseen classes") {
  const Dataset d = make_splits(generate_dataset(tiny_data()), SplitMode::kZeroShot, 1, {"box"});
  TrainConfig c = tiny_train();
  c.mode = SplitMode::kZeroShot;
  std::ostringstream log;
  std::vector<StageReport> reports;
  const Model m = train(d, c, &log, &reports);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].stage == "joint");
  CHECK(std::find(m.classifier_classes.begin(), m.classifier_classes.end(), "box") == m.classifier_classes.end());
  std::istringstream lines(log.str());
  std::size_t n = 0;
  for (std::string line; std::getline(lines, line);) ++n;
  CHECK(n == c.epochs);
  CHECK(log.str().find("\"stage\":\"joint\"") != std::string::npos);
  const RetrievalRun run = retrieval_run(m, d);
  CHECK(run.gallery.rows() == d.shapes.size());
  for (std::size_t y : run.query_labels) CHECK(d.classes[y] == "box");
}

TEST_CASE("checkpoint round-trips byte for byte") {
  const fs::path dir = fs::temp_directory_path() / "mvhgnn_test_trainer";
  fs::create_directories(dir);
  const Dataset d = make_splits(generate_dataset(tiny_data()), SplitMode::kCategory, 1);
  const Model m = train(d, tiny_train());
  save_checkpoint(dir / "a.mvhf", m);
  const Model back = load_checkpoint(dir / "a.mvhf");
  save_checkpoint(dir / "b.mvhf", back);
  CHECK(slurp(dir / "a.mvhf") == slurp(dir / "b.mvhf"));
  CHECK(slurp(manifest_path(dir / "a.mvhf")) == slurp(manifest_path(dir / "b.mvhf")));
  CHECK(back.encoder.norm == NormMode::kNode);
  CHECK(back.classes == m.classes);
  // Checkpoints hold float32, so reloaded embeddings agree to single precision.
  const auto idx = d.shape_indices(Split::kTest);
  CHECK(max_abs_diff(embed_shapes(m, d, idx), embed_shapes(back, d, idx)) < 1e-4);

  fs::remove(manifest_path(dir / "b.mvhf"));
  try {
    load_checkpoint(dir / "b.mvhf");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  fs::remove_all(dir);
}

TEST_CASE("desk run: loss falls, classifier generalizes") {
  const Dataset d = make_splits(generate_dataset(SynthConfig{}), SplitMode::kCategory, 0);
  std::vector<StageReport> reports;
  const Model m = train(d, desk_config(), nullptr, &reports);
  REQUIRE(reports.size() == 2);
  for (const auto& r : reports) {
    INFO(r.stage);
    REQUIRE(r.epoch_loss.size() == 40);
    CHECK(r.epoch_loss[9] < r.epoch_loss[0]);
  }
  // Stage 1 falls over every 10-epoch window. Stage 2 resamples quadruplets
  // each step, so late epochs are noisy; only its quad term trend is checked.
  for (std::size_t e = 0; e + 9 < 40; ++e) CHECK(reports[0].epoch_loss[e + 9] < reports[0].epoch_loss[e]);
  auto quad = [&](std::size_t epoch) {
    for (const auto& [n, v] : reports[1].epoch_terms[epoch])
      if (n == "quad") return v;
    return -1.0;
  };
  CHECK(quad(39) < quad(0));
  CHECK(reports[1].frozen_digest_before == reports[1].frozen_digest_after);
  CHECK(classifier_accuracy(m, d) > 0.9);
}
