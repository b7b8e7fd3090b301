#include <doctest.h>

#include <random>

#include "mvhgnn/metrics.hpp"
#include "support/metric_oracle.hpp"

using namespace mvhgnn;

namespace {

RetrievalRun run_from(Matrix q, std::vector<std::size_t> ql, Matrix g, std::vector<std::size_t> gl) {
  return RetrievalRun{std::move(q), std::move(ql), std::move(g), std::move(gl)};
}

}  // namespace

TEST_CASE("rank_gallery basics") {
  CHECK(rank_gallery(run_from(Matrix{{1, 0}}, {0}, Matrix{{0, 1}}, {0}))[0] == std::vector<std::size_t>{0});
  const auto r = rank_gallery(run_from(Matrix{{0, 1}}, {0}, Matrix{{1, 0}, {0, 2}, {1, 1}}, {0, 0, 0}));
  CHECK(r[0] == std::vector<std::size_t>{1, 2, 0});
  // exact ties resolve by gallery index
  const auto t = rank_gallery(run_from(Matrix{{1, 0}}, {0}, Matrix{{0, 1}, {0, 3}, {0, 2}}, {0, 0, 0}));
  CHECK(t[0] == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("average precision hand case") {
  // Relevant items at ranks 1 and 3 of a 4-item gallery.
  const RetrievalRun run = run_from(Matrix{{1, 0}}, {0}, Matrix{{1, 0}, {0.9, 0.5}, {0.5, 0.9}, {0, 1}}, {0, 1, 0, 1});
  REQUIRE(rank_gallery(run)[0] == std::vector<std::size_t>{0, 1, 2, 3});
  const MetricTable m = compute_metrics(run);
  CHECK(m.map == doctest::Approx(100.0 * (1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(std::round(m.map * 100.0) / 100.0 == 83.33);
  CHECK(m.nn == 100.0);
  CHECK(m.mrr == 100.0);
  CHECK(m.ft == 50.0);
  CHECK(m.st == 100.0);
}

TEST_CASE("perfect ranking") {
  Matrix g(6, 2);
  std::vector<std::size_t> gl;
  for (std::size_t i = 0; i < 6; ++i) {
    g(i, 0) = i < 3 ? 1.0 : 0.0;
    g(i, 1) = i < 3 ? 0.01 * i : 1.0;
    gl.push_back(i < 3 ? 0 : 1);
  }
  const MetricTable m = compute_metrics(run_from(Matrix{{1, 0}}, {0}, g, gl));
  CHECK(m.nn == 100.0);
  CHECK(m.ft == 100.0);
  CHECK(m.st == 100.0);
  CHECK(m.ndcg == doctest::Approx(100.0));
  CHECK(m.mrr == 100.0);
  CHECK(m.map == 100.0);
  // cut-off clipped to 6: P = 3/6, R = 1 -> F = 2/3
  CHECK(m.e == doctest::Approx(100.0 / 3.0));
}

TEST_CASE("metrics reject queries of absent classes") {
  try {
    compute_metrics(run_from(Matrix{{1, 0}}, {2}, Matrix{{1, 0}}, {0}));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocol);
  }
}

TEST_CASE("compute_metrics equals the brute-force oracle exactly") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const RetrievalRun run = oracle::random_instance(rng);
    const auto rankings = rank_gallery(run);
    for (std::size_t q = 0; q < rankings.size(); ++q) REQUIRE(rankings[q] == oracle::rank(run.gallery, run.queries.row(q)));
    const MetricTable m = compute_metrics(run, rankings);
    INFO("trial " << trial);
    CHECK(oracle::equals(oracle::evaluate(run), m));
    for (double v : m.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0 + 1e-9);
    }
  }
}

TEST_CASE("mAP and MRR survive order-preserving gallery permutations") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    RetrievalRun run = oracle::random_instance(rng);
    // drop duplicates' influence by perturbing rows slightly so the order is strict
    for (double& v : run.gallery.data()) v += 1e-6 * std::normal_distribution<double>()(rng);
    const MetricTable base = compute_metrics(run);
    std::vector<std::size_t> perm(run.gallery.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    RetrievalRun p = run;
    p.gallery = gather_rows(run.gallery, perm);
    for (std::size_t i = 0; i < perm.size(); ++i) p.gallery_labels[i] = run.gallery_labels[perm[i]];
    const MetricTable m = compute_metrics(p);
    CHECK(m.map == doctest::Approx(base.map).epsilon(1e-12));
    CHECK(m.mrr == doctest::Approx(base.mrr).epsilon(1e-12));
  }
}

TEST_CASE("distance histograms and margin") {
  const Matrix same(4, 3, 1.0);
  const auto h = distance_histograms(same, {0, 0, 1, 1}, 10);
  CHECK(h.intra[0] == 2);
  CHECK(h.inter[0] == 4);
  CHECK(margin_statistic(same, {0, 0, 1, 1}) == 0.0);

  const auto single = distance_histograms(Matrix{{1, 0}, {0, 1}, {-1, 0}}, {3, 3, 3}, 4);
  std::size_t inter = 0, intra = 0;
  for (auto c : single.inter) inter += c;
  for (auto c : single.intra) intra += c;
  CHECK(inter == 0);
  CHECK(intra == 3);
  CHECK(single.intra[3] == 1);  // antipodal pair, distance exactly 2, lands in the last bin

  const Matrix clusters{{1, 0}, {0.99, 0.1}, {-1, 0}, {-0.98, -0.1}};
  CHECK(margin_statistic(clusters, {0, 0, 1, 1}) > 1.5);
  CHECK(h.to_csv().starts_with("bin_start,intra_count,inter_count\n0,2,4\n"));
}

TEST_CASE("random baseline is near the analytic expectation") {
  // One relevant item among G: E[AP] = H_G / G.
  Matrix g(8, 2, 1.0);
  std::vector<std::size_t> gl(8, 1);
  gl[5] = 0;
  const double b = random_map_baseline(run_from(Matrix{{1, 0}}, {0}, g, gl), 4000, 1);
  double h = 0.0;
  for (int i = 1; i <= 8; ++i) h += 1.0 / i;
  CHECK(b == doctest::Approx(100.0 * h / 8.0).epsilon(0.03));
}
