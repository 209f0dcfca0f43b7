#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "grace/error.hpp"
#include "grace/metrics/metrics.hpp"
#include "grace/rng.hpp"

using namespace grace;
using grace::test::brute_recall;
using grace::test::pairwise_auc;

namespace {

struct Session {
  std::vector<double> score;
  std::vector<int> pos;
  std::vector<std::uint64_t> ids;
};

Session random_session(Rng& rng, std::size_t m) {
  Session s;
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 1);
  for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  std::set<std::uint64_t> used;
  for (std::size_t i = 0; i < m; ++i) {
    std::uint64_t id;
    do id = rng.uniform_index(10 * m + 10); while (!used.insert(id).second);
    s.ids.push_back(id);
    // Coarse scores so that ties are common.
    s.score.push_back(std::floor(rng.uniform(0, 8)) / 8);
  }
  s.pos = perm;
  return s;
}

ImpressionRecord rec(std::uint64_t session, std::uint64_t item, std::optional<int> pos,
                     Source src, int click = 0, int order = 0) {
  ImpressionRecord r;
  r.session_id = session;
  r.item_id = item;
  r.rank_pos = pos;
  r.source = src;
  r.click = click;
  r.order = order;
  return r;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 0.5);
  CHECK(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), MetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{}, std::vector<int>{}), MetricError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ShapeError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, NAN}, std::vector<int>{1, 0}), ShapeError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}), ShapeError);
}

TEST_CASE("auc equals the pairwise oracle on random tied instances") {
  for (std::uint64_t t = 0; t < 50; ++t) {
    Rng rng(derive_seed(21, t));
    const std::size_t n = 2 + rng.uniform_index(999);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const int levels = 1 + static_cast<int>(rng.uniform_index(30));
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform(0, levels));
      y[i] = rng.bernoulli(0.3);
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(auc(s, y) - pairwise_auc(s, y)) <= 1e-12);
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  Rng rng(22);
  std::vector<double> s(400);
  std::vector<int> y(400);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::round(rng.normal() * 4) / 4;
    y[i] = rng.bernoulli(0.4);
  }
  const double base = auc(s, y);
  std::vector<double> e(s), a(s);
  for (double& v : e) v = std::exp(v);
  for (double& v : a) v = 3.0 * v - 7.0;
  CHECK(std::abs(auc(e, y) - base) <= 1e-12);
  CHECK(std::abs(auc(a, y) - base) <= 1e-12);
}

TEST_CASE("recall examples") {
  const std::vector<double> s = {10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  const std::vector<int> same = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<int> reversed = {10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
  std::vector<std::uint64_t> ids(10);
  std::iota(ids.begin(), ids.end(), 100);
  CHECK(recall_at_k(s, same, ids, 3) == 1.0);
  CHECK(recall_at_k(s, reversed, ids, 10) == 1.0);
  CHECK(recall_at_k(s, reversed, ids, 3) == 0.0);
  CHECK(recall_at_k(s, reversed, ids, 5) == 0.0);
  CHECK(recall_at_k(s, reversed, ids, 6) == doctest::Approx(2.0 / 6.0));
  CHECK_THROWS_AS(recall_at_k(s, same, ids, 11), MetricError);
  CHECK_THROWS_AS(recall_at_k(s, same, ids, 0), MetricError);
}

TEST_CASE("recall ties break by item id") {
  const std::vector<double> s = {1.0, 1.0, 1.0};
  const std::vector<int> pos = {1, 2, 3};
  const std::vector<std::uint64_t> ids = {30, 20, 10};
  // Score top-1 is id 10 (all tied); teacher top-1 is id 30.
  CHECK(recall_at_k(s, pos, ids, 1) == 0.0);
  const std::vector<std::uint64_t> ids2 = {5, 20, 10};
  CHECK(recall_at_k(s, pos, ids2, 1) == 1.0);
}

TEST_CASE("recall equals brute-force intersection on random sessions") {
  Rng rng(23);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 1 + rng.uniform_index(100);
    const Session s = random_session(rng, m);
    const std::size_t k = 1 + rng.uniform_index(m);
    CHECK(recall_at_k(s.score, s.pos, s.ids, k) == brute_recall(s.score, s.pos, s.ids, k));
  }
}

TEST_CASE("recall is invariant to record order") {
  Rng rng(24);
  for (int t = 0; t < 100; ++t) {
    const Session s = random_session(rng, 40);
    Session p = s;
    std::vector<std::size_t> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 40; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
    for (std::size_t i = 0; i < 40; ++i) {
      p.score[i] = s.score[perm[i]];
      p.pos[i] = s.pos[perm[i]];
      p.ids[i] = s.ids[perm[i]];
    }
    for (std::size_t k : {1u, 5u, 17u, 40u}) {
      CHECK(recall_at_k(s.score, s.pos, s.ids, k) == recall_at_k(p.score, p.pos, p.ids, k));
    }
  }
}

TEST_CASE("pairwise sum is exact on integers and layout independent") {
  std::vector<double> v(1000);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(pairwise_sum(v) == 500500.0);
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
  Rng rng(25);
  std::vector<double> r(777);
  for (double& x : r) x = rng.normal();
  const double a = pairwise_sum(r);
  CHECK(pairwise_sum(std::vector<double>(r)) == a);
  double naive = 0.0;
  for (double x : r) naive += x;
  CHECK(std::abs(a - naive) < 1e-10);
}

TEST_CASE("popularity counts records and breaks ties by id") {
  const Dataset d = {rec(0, 5, 1, Source::kDisplayed), rec(0, 3, 2, Source::kDisplayed),
                     rec(1, 5, 1, Source::kDisplayed), rec(1, 9, std::nullopt, Source::kRandomNegative),
                     rec(2, 7, 1, Source::kDisplayed)};
  const Popularity p = popularity_from_records(d);
  CHECK(p.count_order == std::vector<std::uint64_t>{5, 3, 7, 9});
  CHECK(p.rank.at(5) == 0);
  CHECK(p.rank.at(9) == 3);
}

TEST_CASE("long-tail slices partition the records") {
  Dataset d;
  Rng rng(26);
  for (std::uint64_t i = 0; i < 3000; ++i) {
    // Zipf-like item draws over 200 items.
    const double u = rng.uniform();
    const auto item = static_cast<std::uint64_t>(std::floor(std::pow(200.0, u))) - 1;
    d.push_back(rec(i / 10, item, 1 + static_cast<int>(i % 10), Source::kDisplayed));
  }
  const Popularity pop = popularity_from_records(d);
  for (double hf : {0.05, 0.2, 0.5, 0.95}) {
    const auto s = slice_longtail(d, pop, hf);
    CHECK(s.head.size() + s.tail.size() == d.size());
    std::vector<std::size_t> all(s.head);
    all.insert(all.end(), s.tail.begin(), s.tail.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(d.size());
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
    const auto cutoff =
        static_cast<std::size_t>(std::ceil(hf * static_cast<double>(pop.count_order.size())));
    for (std::size_t i : s.head) CHECK(pop.rank.at(d[i].item_id) < cutoff);
    for (std::size_t i : s.tail) CHECK(pop.rank.at(d[i].item_id) >= cutoff);
  }
  // Under log-uniform draws the head share is well above the head item share.
  const auto s = slice_longtail(d, pop, 0.2);
  CHECK(static_cast<double>(s.head.size()) / d.size() > 0.5);
  CHECK(slice_longtail(d, pop, 1.0 - 1e-12).tail.empty());
  CHECK_THROWS_AS(slice_longtail(d, pop, 1.0), ConfigError);
  CHECK_THROWS_AS(slice_longtail(d, pop, 0.0), ConfigError);

  Dataset unseen = {rec(0, 12345, 1, Source::kDisplayed)};
  CHECK(slice_longtail(unseen, pop, 0.2).tail.size() == 1);
}

namespace {

// Two sessions of 10 candidates (top 4 displayed) and 2 random negatives.
Dataset eval_fixture() {
  Dataset d;
  Rng rng(27);
  for (std::uint64_t s = 0; s < 2; ++s) {
    for (int p = 1; p <= 10; ++p) {
      const bool shown = p <= 4;
      const int click = shown && (p == 1 || rng.bernoulli(0.4));
      d.push_back(rec(s, s * 100 + static_cast<std::uint64_t>(p), p,
                      shown ? Source::kDisplayed : Source::kUndisplayed, click,
                      click && rng.bernoulli(0.5)));
    }
    d.push_back(rec(s, 900 + s, std::nullopt, Source::kRandomNegative));
    d.push_back(rec(s, 950 + s, std::nullopt, Source::kRandomNegative));
  }
  d[0].order = 1;
  d[1].click = 0;
  d[1].order = 0;
  return d;
}

std::vector<RecordScore> teacher_scores(const Dataset& d) {
  std::vector<RecordScore> s;
  for (const auto& r : d) {
    const double v = r.rank_pos ? 1.0 / *r.rank_pos : 0.0;
    s.push_back({v, v, v});
  }
  return s;
}

}  // namespace

TEST_CASE("teacher scores as the pre-ranker give recall 1") {
  const Dataset d = eval_fixture();
  MetricConfig cfg;
  cfg.recall_k = {1, 3, 10};
  const EvalReport r = evaluate(d, teacher_scores(d), popularity_from_records(d), cfg);
  CHECK(r.sessions == 2);
  for (const auto& row : r.recall) CHECK(row == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(r.headline_recall(3) == 1.0);
  CHECK_THROWS_AS(r.headline_recall(4), MetricError);
  CHECK(r.head.records + r.tail.records == r.records);
  CHECK(r.records == d.size());
}

TEST_CASE("constant scores give AUC one half") {
  const Dataset d = eval_fixture();
  const std::vector<RecordScore> flat(d.size(), RecordScore{0.5, 0.5, 0.5});
  MetricConfig cfg;
  cfg.recall_k = {1, 3};
  const EvalReport r = evaluate(d, flat, popularity_from_records(d), cfg);
  REQUIRE(r.auc_ctr.has_value());
  CHECK(*r.auc_ctr == 0.5);
  CHECK(r.auc_records == 8);
  cfg.auc_include_random_negatives = true;
  CHECK(evaluate(d, flat, popularity_from_records(d), cfg).auc_records == 12);
}

TEST_CASE("AUC uses displayed records only by default") {
  const Dataset d = eval_fixture();
  auto scores = teacher_scores(d);
  // Random negatives scored highest: only hurts AUC when they are included.
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].source == Source::kRandomNegative) scores[i] = {2.0, 2.0, 2.0};
  }
  MetricConfig cfg;
  cfg.recall_k = {1};
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].source != Source::kDisplayed) continue;
    s.push_back(scores[i].ctr);
    y.push_back(d[i].click);
  }
  const EvalReport r = evaluate(d, scores, popularity_from_records(d), cfg);
  CHECK(*r.auc_ctr == auc(s, y));
  cfg.auc_include_random_negatives = true;
  CHECK(*evaluate(d, scores, popularity_from_records(d), cfg).auc_ctr < *r.auc_ctr);
}

TEST_CASE("evaluation is deterministic and independent of threads") {
  Dataset d;
  Rng rng(28);
  for (std::uint64_t s = 0; s < 97; ++s) {
    for (int p = 1; p <= 30; ++p) {
      const bool shown = p <= 6;
      const int click = shown && rng.bernoulli(0.3);
      d.push_back(rec(s, rng.uniform_index(400), p,
                      shown ? Source::kDisplayed : Source::kUndisplayed, click));
    }
  }
  // Items must be distinct within a session for recall.
  for (std::size_t i = 0; i < d.size(); ++i) d[i].item_id = d[i].session_id * 1000 + i % 30;
  std::vector<RecordScore> scores(d.size());
  for (auto& s : scores) s = {rng.uniform(), rng.uniform(), rng.uniform()};
  const Popularity pop = popularity_from_records(d);
  MetricConfig cfg;
  cfg.recall_k = {3, 5, 10, 20};
  const EvalReport one = evaluate(d, scores, pop, cfg);
  CHECK(evaluate(d, scores, pop, cfg) == one);
  cfg.threads = 4;
  CHECK(evaluate(d, scores, pop, cfg) == one);
  cfg.threads = 13;
  CHECK(evaluate(d, scores, pop, cfg) == one);
  for (const auto& row : one.recall) {
    for (double v : row) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("report serialization") {
  const Dataset d = eval_fixture();
  MetricConfig cfg;
  cfg.recall_k = {1, 3};
  const EvalReport r = evaluate(d, teacher_scores(d), popularity_from_records(d), cfg);
  const auto j = report_to_json(r);
  CHECK(report_from_json(nlohmann::json::parse(j.dump())) == r);
  const std::string text = render_report(r);
  CHECK(text.find("R@3") != std::string::npos);
  CHECK(text.find("ctr_cvr*") != std::string::npos);
  const std::string csv = report_to_csv(r);
  CHECK(csv.starts_with("metric,value\n"));
  CHECK(csv.find("recall@3.rank,1") != std::string::npos);
}

TEST_CASE("metric config validation and score kinds") {
  MetricConfig c;
  CHECK(c.recall_k == std::vector<int>{3, 5, 10, 20, 50});
  CHECK(c.headline == ScoreKind::kCtrCvr);
  c.recall_k = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_score_kind("ctr_cvr") == ScoreKind::kCtrCvr);
  CHECK(parse_score_kind("rank") == ScoreKind::kRank);
  CHECK_FALSE(parse_score_kind("cvr").has_value());
  const RecordScore s{0.5, 0.4, 0.9};
  CHECK(s.get(ScoreKind::kCtrCvr) == 0.5 * 0.4);
  CHECK(s.get(ScoreKind::kCtr) == 0.5);
  CHECK(s.get(ScoreKind::kRank) == 0.9);
}
