#include <random>

#include <doctest.h>

#include "mhal/errors.h"
#include "mhal/metrics.h"

#include "reference_metrics.h"

using namespace mhal;

TEST_CASE("perfect predictions score 1 everywhere") {
  const std::vector<int> labels{0, 1, 2, 1, 0};
  const MetricsReport r = token_micro(labels, labels, 3, 0);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 1.0);
  CHECK(r.precision_star == 1.0);
  CHECK(r.f1_star == 1.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("fbeta identities and closed form") {
  CHECK(fbeta_score(0.7, 0.7, 0.5) == doctest::Approx(0.7));
  CHECK(fbeta_score(0.7, 0.7, 2.0) == doctest::Approx(0.7));
  // P=0.5, R=0.25, beta=0.5 -> 1.25*0.125/0.375
  CHECK(fbeta_score(0.5, 0.25, 0.5) == doctest::Approx(1.25 * 0.125 / 0.375).epsilon(1e-12));
  CHECK(std::fabs(fbeta_score(0.5, 0.25, 0.5) - 5.0 / 12.0) <= 1e-9);
  CHECK(fbeta_score(0.0, 0.0, 1.0) == 0.0);
}

TEST_CASE("length mismatch is rejected") {
  CHECK_THROWS_AS(token_micro({0, 1}, {0}, 2, 0), ShapeError);
}

TEST_CASE("span extraction and exact matching") {
  // gold span at [5,7)
  std::vector<int> gold(10, 0);
  gold[5] = 1;
  gold[6] = 1;
  SUBCASE("identical prediction") {
    const SpanScores s = span_f1({gold}, {gold}, 0);
    CHECK(s.tp == 1);
    CHECK(s.f1 == 1.0);
  }
  SUBCASE("same span one position late") {
    std::vector<int> pred(10, 0);
    pred[6] = 1;
    pred[7] = 1;
    const SpanScores s = span_f1({pred}, {gold}, 0);
    CHECK(s.tp == 0);
    CHECK(s.f1 == 0.0);
  }
  SUBCASE("gold span split in two pieces") {
    std::vector<int> gold3(10, 0), pred3(10, 0);
    gold3[2] = gold3[3] = gold3[4] = 1;
    pred3[2] = 1;
    pred3[4] = 1;  // gap at 3 splits the prediction
    const SpanScores s = span_f1({pred3}, {gold3}, 0);
    CHECK(s.tp == 0);
    CHECK(s.fp == 2);
    CHECK(s.fn == 1);
  }
}

TEST_CASE("no non-default labels means 0/0 -> 0") {
  const std::vector<int> all_default(6, 0);
  const SpanScores s = span_f1({all_default}, {all_default}, 0);
  CHECK(s.precision == 0.0);
  CHECK(s.recall == 0.0);
  CHECK(s.f1 == 0.0);
  const MetricsReport r = token_micro(all_default, all_default, 3, 0);
  CHECK(r.f1_star == 0.0);
  CHECK(r.f1 == 1.0);
}

TEST_CASE("sentence metrics fixture, hand scored") {
  // gold: [1, 0, 1]; pred: [1, 1, 0]
  const MetricsReport r = sentence_metrics({1, 1, 0}, {1, 0, 1}, 2, 0);
  CHECK(r.accuracy == doctest::Approx(1.0 / 3));
  // starred (label 1): tp=1 fp=1 fn=1 -> P*=R*=F1*=0.5
  CHECK(r.precision_star == doctest::Approx(0.5));
  CHECK(r.recall_star == doctest::Approx(0.5));
  CHECK(r.f1_star == doctest::Approx(0.5));
  // all labels micro: P=R=acc
  CHECK(r.f1 == doctest::Approx(1.0 / 3));
}

TEST_CASE("starred metrics ignore default-label agreement") {
  std::vector<int> pred{1, 2, 0, 0};
  std::vector<int> gold{1, 1, 0, 0};
  const MetricsReport before = token_micro(pred, gold, 3, 0);
  // append a pile of correctly predicted default tokens
  for (int i = 0; i < 50; ++i) {
    pred.push_back(0);
    gold.push_back(0);
  }
  const MetricsReport after = token_micro(pred, gold, 3, 0);
  CHECK(after.precision_star == before.precision_star);
  CHECK(after.recall_star == before.recall_star);
  CHECK(after.f1_star == before.f1_star);
  CHECK(after.f1 > before.f1);
}

TEST_CASE("micro and span metrics equal the brute-force reference") {
  Rng rng = make_rng(97);
  std::uniform_int_distribution<int> len_dist(1, 20);
  std::uniform_int_distribution<int> tag_dist(2, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    const int tags = tag_dist(rng);
    std::uniform_int_distribution<int> lab(0, tags - 1);
    const int n = len_dist(rng);
    std::vector<int> pred(static_cast<std::size_t>(n)), gold(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      pred[static_cast<std::size_t>(i)] = lab(rng);
      gold[static_cast<std::size_t>(i)] = lab(rng);
    }
    const double beta = 0.5;
    const MetricsReport r = token_micro(pred, gold, tags, 0, beta);
    const testutil::RefMicro m = testutil::ref_micro(pred, gold, tags, 0, beta);
    CHECK(r.precision == m.p);
    CHECK(r.recall == m.r);
    CHECK(r.f1 == m.f1);
    CHECK(r.precision_star == m.p_star);
    CHECK(r.recall_star == m.r_star);
    CHECK(r.f1_star == m.f1_star);
    CHECK(r.accuracy == m.acc);
    CHECK(r.fbeta == m.fbeta);
    CHECK(r.fbeta_star == m.fbeta_star);

    const SpanScores s = span_f1({pred}, {gold}, 0);
    const testutil::RefSpanScores rs = testutil::ref_span_f1({pred}, {gold}, 0);
    CHECK(s.tp == rs.tp);
    CHECK(s.fp == rs.fp);
    CHECK(s.fn == rs.fn);
    CHECK(s.f1 == rs.f1);
  }
}

TEST_CASE("random baseline") {
  Rng rng = make_rng(101);
  SUBCASE("single-label tagset is always right") {
    const MetricsReport r = random_baseline({{0, 0, 0}}, 1, 0, 1.0, rng, 5);
    CHECK(r.accuracy == 1.0);
  }
  SUBCASE("uniform gold over 5 labels converges to 0.2 accuracy") {
    std::vector<std::vector<int>> gold;
    std::uniform_int_distribution<int> lab(0, 4);
    for (int s = 0; s < 100; ++s) {
      std::vector<int> seq(20);
      for (auto& v : seq) v = lab(rng);
      gold.push_back(seq);
    }
    const MetricsReport r = random_baseline(gold, 5, 0, 1.0, rng, 50);
    CHECK(r.accuracy == doctest::Approx(0.2).epsilon(0.05));
  }
  SUBCASE("trials must be positive") {
    CHECK_THROWS_AS(random_baseline({{0}}, 2, 0, 1.0, rng, 0), ShapeError);
  }
}
