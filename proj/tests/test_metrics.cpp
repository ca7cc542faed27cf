#include "doctest.h"

#include <cmath>
#include <vector>

#include "clicksim/metrics.hpp"
#include "clicksim/oracle.hpp"

using namespace clicksim;

namespace {

metrics::ClickPredictions constant_preds(double p, std::size_t n_records, std::size_t t_len,
                                         std::uint8_t click = 0) {
  metrics::ClickPredictions preds;
  preds.probs.assign(n_records, std::vector<double>(t_len, p));
  preds.clicks.assign(n_records, std::vector<std::uint8_t>(t_len, click));
  return preds;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("uninformed predictions: PPL exactly 2, LL = ln 0.5") {
  auto preds = constant_preds(0.5, 10, 5);
  // Mix of clicks and skips; p = 0.5 scores identically on both.
  preds.clicks[3] = {1, 0, 1, 0, 1};
  auto ppl = metrics::perplexity(preds);
  for (double v : ppl.at_rank) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ppl.overall == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(metrics::log_likelihood(preds) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("perfect clamped predictions: PPL -> 1, LL -> 0") {
  metrics::ClickPredictions preds;
  preds.probs = {{1.0, 0.0, 1.0}, {0.0, 0.0, 1.0}};
  preds.clicks = {{1, 0, 1}, {0, 0, 1}};
  auto ppl = metrics::perplexity(preds);
  for (double v : ppl.at_rank) CHECK(v == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(metrics::log_likelihood(preds) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("PPL is at least 1 and antitone in likelihood") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    metrics::ClickPredictions preds;
    const std::size_t t_len = 4;
    for (int i = 0; i < 8; ++i) {
      std::vector<double> p(t_len);
      std::vector<std::uint8_t> c(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        p[t] = rng.uniform(0.05, 0.95);
        c[t] = rng.bernoulli(0.3) ? 1 : 0;
      }
      preds.probs.push_back(p);
      preds.clicks.push_back(c);
    }
    auto before = metrics::perplexity(preds);
    for (double v : before.at_rank) CHECK(v >= 1.0);

    // Move every probability toward the observed click.
    metrics::ClickPredictions better = preds;
    for (std::size_t i = 0; i < better.probs.size(); ++i)
      for (std::size_t t = 0; t < better.probs[i].size(); ++t) {
        const double target = better.clicks[i][t] ? 1.0 : 0.0;
        better.probs[i][t] += 0.5 * (target - better.probs[i][t]);
      }
    auto after = metrics::perplexity(better);
    for (std::size_t t = 0; t < t_len; ++t) CHECK(after.at_rank[t] < before.at_rank[t]);
  }
}

TEST_CASE("ndcg: ideal ordering scores 1") {
  metrics::ScoredList list;
  list.scores = {0.9, 0.5, 0.1};
  list.grades = {3, 2, 0};
  CHECK(metrics::ndcg_at_k(list, 3) == doctest::Approx(1.0));
  CHECK(metrics::ndcg_at_k(list, 10) == doctest::Approx(1.0));
}

TEST_CASE("ndcg worst-first example matches the direct formula") {
  metrics::ScoredList list;
  list.scores = {0.9, 0.5, 0.1};  // ranks grades worst-first
  list.grades = {0, 1, 2};
  CHECK(metrics::ndcg_at_k(list, 3) == doctest::Approx(0.58688267143572).epsilon(1e-12));
}

TEST_CASE("ndcg skips all-zero queries and is invariant to monotone transforms") {
  metrics::ScoredList zero;
  zero.scores = {0.9, 0.1};
  zero.grades = {0, 0};
  CHECK(metrics::ndcg_at_k(zero, 2) == doctest::Approx(-1.0));

  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    metrics::ScoredList list;
    for (int i = 0; i < 6; ++i) {
      list.scores.push_back(rng.uniform(0.0, 1.0));
      list.grades.push_back(rng.uniform_int(5));
    }
    const double base = metrics::ndcg_at_k(list, 4);
    metrics::ScoredList transformed = list;
    for (double& s : transformed.scores) s = std::exp(3.0 * s) + 7.0;
    CHECK(metrics::ndcg_at_k(transformed, 4) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("ndcg breaks ties by stable original order") {
  metrics::ScoredList list;
  list.scores = {0.5, 0.5, 0.5};
  list.grades = {0, 2, 1};  // ties keep presentation order
  const double dcg = 0.0 + 3.0 / std::log2(3.0) + 1.0 / 2.0;
  const double idcg = 3.0 + 1.0 / std::log2(3.0);
  CHECK(metrics::ndcg_at_k(list, 3) == doctest::Approx(dcg / idcg).epsilon(1e-12));
}

TEST_CASE("mean_ndcg counts skipped queries") {
  std::vector<metrics::ScoredList> lists(2);
  lists[0].scores = {0.9, 0.1};
  lists[0].grades = {2, 1};
  lists[1].scores = {0.9, 0.1};
  lists[1].grades = {0, 0};
  auto rep = metrics::mean_ndcg(lists, {1, 2});
  CHECK(rep.evaluated == 1);
  CHECK(rep.skipped == 1);
  CHECK(rep.at[1] == doctest::Approx(1.0));
}

TEST_CASE("generate_synthetic: counts, forced zeros, seeded replay") {
  std::vector<data::SerpRecord> base;
  for (int i = 0; i < 4; ++i) {
    data::SerpRecord r;
    r.session_id = "s" + std::to_string(i);
    r.query = 2;
    r.docs = {2, 3, 4};
    r.verticals = {2, 2, 2};
    r.clicks = {1, 0, 0};
    base.push_back(r);
  }

  metrics::ClickSampler never = [](const data::SerpRecord& r, Rng&) {
    return std::vector<std::uint8_t>(static_cast<std::size_t>(r.list_len()), 0);
  };
  Rng rng(9);
  auto synth = metrics::generate_synthetic(base, never, 7, data::PermuteMode::none, rng);
  CHECK(synth.size() == 28);
  for (const auto& r : synth)
    for (auto c : r.clicks) CHECK(c == 0);

  metrics::ClickSampler coin = [](const data::SerpRecord& r, Rng& rr) {
    std::vector<std::uint8_t> c(static_cast<std::size_t>(r.list_len()));
    for (auto& v : c) v = rr.bernoulli(0.5) ? 1 : 0;
    return c;
  };
  Rng a(10), b(10);
  auto s1 = metrics::generate_synthetic(base, coin, 3, data::PermuteMode::full, a);
  auto s2 = metrics::generate_synthetic(base, coin, 3, data::PermuteMode::full, b);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].docs == s2[i].docs);
    CHECK(s1[i].clicks == s2[i].clicks);
  }
}

TEST_CASE("reverse equals forward on identical datasets") {
  Rng rng(11);
  auto spec = oracle::OracleSpec::random_pbm(3, 4, 8, 2, {0.9, 0.5, 0.3}, 12);
  auto d = oracle::synth_generate(spec, 600, rng);

  metrics::SurrogateConfig cfg;
  cfg.kind = metrics::SurrogateKind::ubm;
  cfg.list_len = d.list_len;
  auto res = metrics::reverse_forward_ppl(d.test, d.test, cfg);
  CHECK(res.reverse_ppl == doctest::Approx(res.forward_ppl).epsilon(1e-12));

  // reverse(A,B) computes the same quantity as forward(B,A).
  auto ab = metrics::reverse_forward_ppl(d.train, d.test, cfg);
  auto ba = metrics::reverse_forward_ppl(d.test, d.train, cfg);
  CHECK(ab.reverse_ppl == doctest::Approx(ba.forward_ppl).epsilon(1e-12));
  CHECK(ab.forward_ppl == doctest::Approx(ba.reverse_ppl).epsilon(1e-12));
}

TEST_CASE("neural surrogate coverage runs and is deterministic") {
  Rng rng(13);
  auto spec = oracle::OracleSpec::random_pbm(3, 4, 8, 2, {0.9, 0.5, 0.3}, 14);
  auto d = oracle::synth_generate(spec, 400, rng);

  metrics::SurrogateConfig cfg;
  cfg.kind = metrics::SurrogateKind::neural;
  cfg.list_len = d.list_len;
  cfg.vocab_sizes.n_query = d.queries.size();
  cfg.vocab_sizes.n_doc = d.docs.size();
  cfg.vocab_sizes.n_vert = d.verticals.size();
  cfg.neural.emb = 4;
  cfg.neural.hidden = 4;
  cfg.neural.epochs = 1;

  auto r1 = metrics::reverse_forward_ppl(d.train, d.test, cfg);
  auto r2 = metrics::reverse_forward_ppl(d.train, d.test, cfg);
  CHECK(r1.reverse_ppl == doctest::Approx(r2.reverse_ppl).epsilon(1e-15));
  CHECK(r1.reverse_ppl >= 1.0);
  CHECK(r1.forward_ppl >= 1.0);
}

TEST_CASE("metric report rendering is stable") {
  metrics::MetricReport rep;
  rep.ll = -0.5;
  rep.ppl.overall = 1.5;
  rep.ppl.at_rank = {1.2, 1.8};
  auto text = rep.to_text();
  CHECK(text.find("ll = -0.5") != std::string::npos);
  CHECK(text.find("ppl@2 = 1.8") != std::string::npos);
  auto tsv = rep.to_tsv();
  CHECK(tsv.find("metric\tvalue") == 0);
}

TEST_SUITE_END();
