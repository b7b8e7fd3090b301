#include <doctest.h>

#include <cmath>
#include <random>

#include "mvhgnn/gradcheck.hpp"
#include "mvhgnn/losses.hpp"

using namespace mvhgnn;

namespace {

PrototypeBank axis_bank(std::size_t classes, std::size_t dim) {
  std::vector<std::string> labels;
  Matrix v(classes, dim);
  for (std::size_t i = 0; i < classes; ++i) {
    labels.push_back("c" + std::to_string(i));
    v(i, i) = 1.0;
  }
  return PrototypeBank(labels, v);
}

// Straight scalar evaluation of the AM-softmax for one row.
double am_softmax_row(const std::vector<double>& cosines, std::size_t y, double t, double m) {
  double denom = 0.0;
  for (std::size_t j = 0; j < cosines.size(); ++j) denom += std::exp(t * (cosines[j] - (j == y ? m : 0.0)));
  return -(t * (cosines[y] - m) - std::log(denom));
}

}  // namespace

TEST_CASE("semantic loss hand values") {
  const PrototypeBank bank = axis_bank(3, 4);
  Tape t;
  const std::size_t y[] = {1};
  const double got = semantic_loss(t.constant(Matrix{{0, 1, 0, 0}}), bank, y, 0.07).scalar();
  const double e = std::exp(1.0 / 0.07);
  const double expect = -std::log(e / (e + 2.0));
  CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  CHECK(got == doctest::Approx(1.23e-6).epsilon(0.01));

  // Equidistant from every prototype: uniform softmax.
  const double uniform = semantic_loss(t.constant(Matrix{{0, 0, 0, 1}}), bank, y, 0.07).scalar();
  CHECK(std::abs(uniform - std::log(3.0)) < 1e-12);

  std::mt19937_64 rng(4);
  Matrix p = random_matrix(1, 4, rng);
  Matrix p3 = p;
  p3 *= 3.0;
  CHECK(semantic_loss(t.constant(p), bank, y, 0.07).scalar() == semantic_loss(t.constant(p3), bank, y, 0.07).scalar());

  try {
    semantic_loss(t.constant(Matrix(1, 4)), bank, y, 0.07);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateInput);
  }
  CHECK_THROWS_AS(semantic_loss(t.constant(p), bank, y, 0.0), Error);
}

TEST_CASE("am-softmax hand values") {
  Tape t;
  const std::size_t y[] = {0};
  const Var cls = t.constant(Matrix{{1, 0}, {0, 1}});
  const double got = am_softmax_loss(t.constant(Matrix{{2, 0}}), y, cls, 15.0, 0.3).scalar();
  CHECK(got == doctest::Approx(-std::log(std::exp(10.5) / (std::exp(10.5) + 1.0))).epsilon(1e-9));
  CHECK(got == doctest::Approx(2.75e-5).epsilon(0.01));

  const double uniform = am_softmax_loss(t.constant(Matrix{{1, 1}}), y, cls, 1.0, 0.0).scalar();
  CHECK(std::abs(uniform - std::log(2.0)) < 1e-12);

  // Batch mean against a per-row scalar oracle.
  std::mt19937_64 rng(8);
  const Matrix f = random_matrix(5, 3, rng), w = random_matrix(4, 3, rng);
  const std::size_t labels[] = {0, 3, 2, 2, 1};
  double expect = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> cos;
    for (std::size_t j = 0; j < 4; ++j) {
      cos.push_back(dot(f.row(r), w.row(j)) / (l2_norm(f.row(r)) * l2_norm(w.row(j))));
    }
    expect += am_softmax_row(cos, labels[r], 15.0, 0.3) / 5.0;
  }
  CHECK(am_softmax_loss(t.constant(f), labels, t.constant(w), 15.0, 0.3).scalar() == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(am_softmax_loss(t.constant(Matrix{{0, 0}}), y, cls, 15.0, 0.3), Error);
  CHECK_THROWS_AS(am_softmax_loss(t.constant(Matrix{{1, 0}}), y, cls, 15.0, 1.0), Error);
}

TEST_CASE("quadruplet loss hand values") {
  Tape t;
  auto c = [&t](Matrix m) { return t.constant(std::move(m)); };
  // Positive coincides with the anchor, negatives antipodal: delta = 0 vs 4.
  QuadrupletVars ok{c({{1, 0}}), c({{2, 0}}), c({{-1, 0}}), c({{-3, 0}})};
  CHECK(quadruplet_loss(ok, 1.0).scalar() == 0.0);
  // Orthogonal negatives: delta = 0 vs 2, hinge 1 + 0 - 2 < 0.
  QuadrupletVars ortho{c({{1, 0}}), c({{1, 0}}), c({{0, 1}}), c({{0, -1}})};
  CHECK(quadruplet_loss(ortho, 1.0).scalar() == 0.0);
  // All three at the same distance: each hinge sits at mu.
  QuadrupletVars tie{c({{1, 0}}), c({{0, 1}}), c({{0, -1}}), c({{0, 2}})};
  CHECK(quadruplet_loss(tie, 1.0).scalar() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(quadruplet_loss(tie, -0.1), Error);
}

TEST_CASE("losses are non-negative and bounded on random inputs") {
  std::mt19937_64 rng(12);
  const PrototypeBank bank(std::vector<std::string>{"a", "b", "c", "d"}, random_matrix(4, 6, rng));
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    const Matrix f = random_matrix(3, 6, rng);
    const std::size_t labels[] = {0, 2, 3};
    const double sem = semantic_loss(t.constant(f), bank, labels, 0.07).scalar();
    const double am = am_softmax_loss(t.constant(f), labels, t.constant(bank.vectors()), 15.0, 0.3).scalar();
    CHECK(sem >= 0.0);
    CHECK(am >= 0.0);
    // -log softmax <= log C + (max logit - true logit); logits span at most 2/tau and 2t + tm.
    CHECK(sem <= std::log(4.0) + 2.0 / 0.07);
    CHECK(am <= std::log(4.0) + 15.0 * 2.3);
    QuadrupletVars q{t.constant(random_matrix(3, 6, rng)), t.constant(random_matrix(3, 6, rng)),
                     t.constant(random_matrix(3, 6, rng)), t.constant(random_matrix(3, 6, rng))};
    const double quad = quadruplet_loss(q, 1.0).scalar();
    CHECK(quad >= 0.0);
    CHECK(quad <= 2.0 * (1.0 + 4.0));
  }
}

TEST_CASE("objectives are the weighted sums of their terms") {
  std::mt19937_64 rng(31);
  const PrototypeBank bank(std::vector<std::string>{"a", "b", "c"}, random_matrix(3, 5, rng));
  const std::size_t labels[] = {0, 1, 2, 1};
  Tape t;
  Var emb = t.variable(random_matrix(4, 6, rng));
  Var proj = t.variable(random_matrix(4, 5, rng));
  Var cls = t.variable(random_matrix(3, 6, rng));
  QuadrupletVars q{t.variable(random_matrix(4, 6, rng)), t.variable(random_matrix(4, 6, rng)),
                   t.variable(random_matrix(4, 6, rng)), t.variable(random_matrix(4, 6, rng))};
  LossSettings s;

  const Objective o1 = stage1_objective(emb, proj, labels, cls, bank, s);
  CHECK(o1.total.scalar() == doctest::Approx(o1.term("cls_shape") + o1.term("sem_shape")).epsilon(1e-14));
  CHECK(o1.term("cls_shape") == doctest::Approx(am_softmax_loss(emb, labels, cls, 15, 0.3).scalar()).epsilon(1e-15));

  const Objective o2 = stage2_objective(q, emb, proj, labels, t.constant(cls.value()), bank, s);
  CHECK(o2.total.scalar() ==
        doctest::Approx(o2.term("quad") + o2.term("cls_sketch") + o2.term("sem_sketch")).epsilon(1e-14));

  const Objective oz = zeroshot_objective(q, proj, labels, proj, labels, bank, s);
  CHECK(oz.total.scalar() == doctest::Approx(oz.term("quad") + 2.0 * oz.term("sem_shape")).epsilon(1e-14));
  CHECK_THROWS_AS(oz.term("cls_shape"), Error);

  LossSettings no_quad = s;
  no_quad.w_quad = 0.0;
  const Objective oq = zeroshot_objective(q, proj, labels, proj, labels, bank, no_quad);
  CHECK(oq.term("quad") == 0.0);
  CHECK(oq.total.scalar() == doctest::Approx(oz.total.scalar() - oz.term("quad")).epsilon(1e-14));

  LossSettings half = s;
  half.w_sem_sketch = 0.5;
  const Objective oh = zeroshot_objective(q, proj, labels, proj, labels, bank, half);
  CHECK(oh.total.scalar() == doctest::Approx(oh.term("quad") + 1.5 * oh.term("sem_shape")).epsilon(1e-14));
}

TEST_CASE("frozen classifier receives no gradient in stage 2") {
  std::mt19937_64 rng(5);
  const PrototypeBank bank(std::vector<std::string>{"a", "b"}, random_matrix(2, 4, rng));
  const std::size_t labels[] = {0, 1};
  Tape t;
  Var emb = t.variable(random_matrix(2, 4, rng));
  Var proj = t.variable(random_matrix(2, 4, rng));
  Var frozen = t.constant(random_matrix(2, 4, rng));
  QuadrupletVars q{emb, t.variable(random_matrix(2, 4, rng)), t.variable(random_matrix(2, 4, rng)),
                   t.variable(random_matrix(2, 4, rng))};
  const Objective o = stage2_objective(q, emb, proj, labels, frozen, bank, LossSettings{});
  t.backward(o.total);
  CHECK(!t.requires_grad(frozen.id()));
  CHECK(frozen.grad() == Matrix(2, 4));
  CHECK(max_abs_diff(emb.grad(), Matrix(2, 4)) > 0.0);
}

TEST_CASE("prototype bank invariants") {
  CHECK_THROWS_AS(PrototypeBank({"a"}, Matrix{{1, 0}}), Error);
  CHECK_THROWS_AS(PrototypeBank({"a", "a"}, Matrix{{1, 0}, {0, 1}}), Error);
  const PrototypeBank b({"x", "y"}, Matrix{{3, 4}, {0, 2}});
  CHECK(b.vectors()(0, 0) == doctest::Approx(0.6));
  CHECK(b.vectors()(1, 1) == 1.0);
  CHECK(b.index_of("y") == 1);
  const std::string pick[] = {"y"};
  CHECK_THROWS_AS(b.subset(pick), Error);  // a one-class bank is not a bank
}

TEST_CASE("loss gradient suite passes on every seed") {
  for (const auto& c : run_gradcheck_suite("losses", 20)) {
    INFO(c.name << " worst " << c.worst_error);
    CHECK(c.passed);
  }
}
