#include "doctest.h"

#include <cmath>
#include <set>

#include "clicksim/oracle.hpp"

using namespace clicksim;

TEST_SUITE_BEGIN("oracle");

TEST_CASE("saturated oracles produce all or no clicks") {
  auto spec = oracle::OracleSpec::random_pbm(3, 3, 6, 2, {1.0, 1.0, 1.0}, 1);
  spec.attr.setConstant(1.0);
  Rng rng(2);
  auto d = oracle::synth_generate(spec, 50, rng);
  for (const auto& r : d.train)
    for (auto c : r.clicks) CHECK(c == 1);

  spec.attr.setConstant(0.0);
  Rng rng2(3);
  auto d0 = oracle::synth_generate(spec, 50, rng2);
  for (const auto& r : d0.train)
    for (auto c : r.clicks) CHECK(c == 0);
}

TEST_CASE("empirical rank-CTR matches exam times mean attractiveness") {
  const std::vector<double> exam = {1.0, 0.8, 0.6, 0.4, 0.2};
  auto spec = oracle::OracleSpec::random_pbm(5, 10, 30, 3, exam, 4);
  Rng rng(5);
  auto d = oracle::synth_generate(spec, 50000, rng);

  const double mean_attr = spec.attr.mean();
  std::vector<double> ctr(5, 0.0);
  std::size_t n = 0;
  for (const auto& split : {&d.train, &d.valid, &d.test})
    for (const auto& r : *split) {
      for (int t = 0; t < 5; ++t) ctr[static_cast<std::size_t>(t)] += r.clicks[static_cast<std::size_t>(t)];
      ++n;
    }
  for (int t = 0; t < 5; ++t) {
    ctr[static_cast<std::size_t>(t)] /= static_cast<double>(n);
    CHECK(std::abs(ctr[static_cast<std::size_t>(t)] -
                   exam[static_cast<std::size_t>(t)] * mean_attr) < 0.01);
  }
}

TEST_CASE("synth_generate rejects vocabularies smaller than the list") {
  CHECK_THROWS_AS(oracle::OracleSpec::random_pbm(5, 3, 4, 2, {1, 1, 1, 1, 1}, 6),
                  ContractError);
}

TEST_CASE("oracle PPL floors: deterministic gives 1, uninformed gives 2") {
  auto det = oracle::OracleSpec::random_pbm(3, 3, 6, 2, {1.0, 1.0, 1.0}, 7);
  det.attr.setConstant(1.0);
  Rng rng(8);
  auto d = oracle::synth_generate(det, 200, rng);
  auto ppl = oracle::oracle_ppl(det, d, d.test);
  for (double v : ppl.at_rank) CHECK(v == doctest::Approx(1.0).epsilon(1e-5));

  auto coin = oracle::OracleSpec::random_pbm(3, 3, 6, 2, {1.0, 1.0, 1.0}, 9);
  coin.attr.setConstant(0.5);
  Rng rng2(10);
  auto d2 = oracle::synth_generate(coin, 500, rng2);
  auto ppl2 = oracle::oracle_ppl(coin, d2, d2.test);
  for (double v : ppl2.at_rank) CHECK(v == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("sdbn oracle conditionals follow the satisfaction cascade") {
  auto spec = oracle::OracleSpec::random_sdbn(3, 2, 6, 2, 11);
  spec.attr.setConstant(0.5);
  spec.sat.setConstant(0.4);
  std::vector<int> docs = {0, 1, 2};
  std::uint8_t no_clicks[3] = {0, 0, 0};
  std::uint8_t clicked[3] = {1, 0, 0};
  // Before any click the user always examines.
  CHECK(spec.conditional_click_prob(0, docs, 0, no_clicks) == doctest::Approx(0.5));
  CHECK(spec.conditional_click_prob(0, docs, 1, no_clicks) == doctest::Approx(0.5));
  // Right after a click: continue with 1 - sat.
  CHECK(spec.conditional_click_prob(0, docs, 1, clicked) == doctest::Approx(0.6 * 0.5));
  // One observed zero in between sharpens the posterior.
  const double e3 = 0.6 * 0.5 / (0.4 + 0.6 * 0.5);
  CHECK(spec.conditional_click_prob(0, docs, 2, clicked) == doctest::Approx(e3 * 0.5));
}

TEST_CASE("occupancy: single decision, uniform policy") {
  Rng rng(12);
  auto mdp = oracle::TinyMdp::random_instance(1, rng);
  Eigen::MatrixXd uniform(1, 2);
  uniform << 0.5, 0.5;
  auto rho = oracle::enumerate_occupancy(uniform, mdp);
  CHECK(rho.at(0, 0) == doctest::Approx(0.5));
  CHECK(rho.at(0, 1) == doctest::Approx(0.5));
  CHECK(rho.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("occupancy: deterministic policy visits one path") {
  Rng rng(13);
  auto mdp = oracle::TinyMdp::random_instance(3, rng);
  Eigen::MatrixXd det(mdp.n_states(), 2);
  for (int s = 0; s < mdp.n_states(); ++s) {
    det(s, 0) = 0.0;
    det(s, 1) = 1.0;
  }
  auto rho = oracle::enumerate_occupancy(det, mdp);
  int support = 0;
  for (double m : rho.mass)
    if (m > 0.0) ++support;
  CHECK(support == 3);  // one (s,a) pair per step
  CHECK(rho.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("occupancy matches a hand-enumerated table at gamma = 0.5") {
  oracle::TinyMdp mdp;
  mdp.horizon = 2;
  mdp.doc_schedule = {0, 1};
  mdp.discount = 0.5;
  mdp.expert_policy = Eigen::MatrixXd::Constant(3, 2, 0.5);
  mdp.reward = Eigen::MatrixXd::Zero(3, 2);

  Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(3, 2, 0.5);
  auto rho = oracle::enumerate_occupancy(uniform, mdp);
  // norm = (1-g)/(1-g^2) = 2/3; t=0 mass 2/3 split over two actions,
  // t=1 mass 1/3 split over four (state,action) pairs.
  CHECK(rho.at(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(rho.at(0, 1) == doctest::Approx(1.0 / 3.0));
  for (int s = 1; s < 3; ++s)
    for (int a = 0; a < 2; ++a) CHECK(rho.at(s, a) == doctest::Approx(1.0 / 12.0));
  CHECK(rho.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("utility gap identities and hand enumeration") {
  Rng rng(14);
  auto mdp = oracle::TinyMdp::random_instance(2, rng);
  CHECK(oracle::utility_gap(mdp.expert_policy, mdp.expert_policy, mdp) == doctest::Approx(0.0));

  auto zero_reward = mdp;
  zero_reward.reward.setZero();
  auto pi = oracle::random_policy(zero_reward, rng);
  CHECK(oracle::utility_gap(pi, zero_reward.expert_policy, zero_reward) ==
        doctest::Approx(0.0));

  // Independent enumeration over the four length-2 action sequences.
  auto pi2 = oracle::random_policy(mdp, rng);
  double expect = 0.0;
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 2; ++a1) {
      const int s0 = mdp.state_index(0, 0);
      const int s1 = mdp.state_index(1, static_cast<unsigned>(a0));
      const double p = pi2(s0, a0) * pi2(s1, a1);
      expect += p * (mdp.reward(s0, a0) + mdp.discount * mdp.reward(s1, a1));
    }
  CHECK(oracle::utility(pi2, mdp) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("monte-carlo utility converges to the enumerated value") {
  Rng rng(15);
  auto mdp = oracle::TinyMdp::random_instance(3, rng);
  auto pi = oracle::random_policy(mdp, rng);
  const double exact = oracle::utility(pi, mdp);
  Rng mc_rng(16);
  const double mc = oracle::mc_utility(pi, mdp, 100000, mc_rng);
  // Per-rollout returns are bounded by horizon * r_max, so 3 standard
  // errors are at most 3 * horizon * r_max / sqrt(n).
  const double three_se =
      3.0 * mdp.horizon * mdp.r_max() / std::sqrt(100000.0);
  CHECK(std::abs(mc - exact) <= three_se);
}

TEST_CASE("divergence identities") {
  Rng rng(17);
  auto mdp = oracle::TinyMdp::random_instance(3, rng);
  auto pi = oracle::random_policy(mdp, rng);
  auto rho = oracle::enumerate_occupancy(pi, mdp);
  CHECK(oracle::js_occupancy(rho, rho) == doctest::Approx(0.0));

  auto pi2 = oracle::random_policy(mdp, rng);
  auto rho2 = oracle::enumerate_occupancy(pi2, mdp);
  CHECK(oracle::js_occupancy(rho, rho2) == doctest::Approx(oracle::js_occupancy(rho2, rho)));
  CHECK(oracle::js_occupancy(rho, rho2) >= 0.0);
  CHECK(oracle::js_occupancy(rho, rho2) <= std::log(2.0) + 1e-12);
}

TEST_CASE("identical policies satisfy both bounds with zero epsilon") {
  Rng rng(18);
  auto mdp = oracle::TinyMdp::random_instance(3, rng);
  auto bc = oracle::check_bc_bound(mdp.expert_policy, mdp.expert_policy, mdp);
  CHECK(bc.gap == doctest::Approx(0.0));
  CHECK(bc.epsilon == doctest::Approx(0.0));
  CHECK(bc.holds);
  auto ga = oracle::check_gail_bound(mdp.expert_policy, mdp.expert_policy, mdp);
  CHECK(ga.gap == doctest::Approx(0.0));
  CHECK(ga.epsilon == doctest::Approx(0.0));
  CHECK(ga.holds);
}

TEST_CASE("disjoint-support policies reach the JS maximum, bound still finite") {
  Rng rng(19);
  auto mdp = oracle::TinyMdp::random_instance(2, rng);
  Eigen::MatrixXd always_click(mdp.n_states(), 2), always_skip(mdp.n_states(), 2);
  for (int s = 0; s < mdp.n_states(); ++s) {
    always_click(s, 0) = 0.0;
    always_click(s, 1) = 1.0;
    always_skip(s, 0) = 1.0;
    always_skip(s, 1) = 0.0;
  }
  auto ga = oracle::check_gail_bound(always_skip, always_click, mdp);
  CHECK(ga.epsilon == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::isfinite(ga.bound));
  CHECK(ga.holds);
}

TEST_CASE("randomized audit: both theorem bounds hold on every instance") {
  for (int horizon = 2; horizon <= 4; ++horizon) {
    auto summary = oracle::run_audit(horizon, 100, 12345);
    CHECK(summary.violations == 0);
    CHECK(summary.rows.size() == 104);  // 100 random + adversarial grid
  }
}

TEST_CASE("audit TSV is deterministic and well-formed") {
  auto a = oracle::run_audit(2, 10, 7);
  auto b = oracle::run_audit(2, 10, 7);
  CHECK(a.to_tsv() == b.to_tsv());
  CHECK(a.to_tsv().find("instance\thorizon\tgap") == 0);
}

TEST_SUITE_END();
