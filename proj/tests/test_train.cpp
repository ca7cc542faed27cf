#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "clicksim/oracle.hpp"
#include "clicksim/train.hpp"

using namespace clicksim;

namespace {

seq::ModelSizes tiny_sizes(int n_query, int n_doc, int n_vert) {
  seq::ModelSizes s;
  s.n_query = n_query;
  s.n_doc = n_doc;
  s.n_vert = n_vert;
  s.emb_q = s.emb_d = s.emb_v = s.emb_c = 3;
  s.hidden = 4;
  return s;
}

policy::GeneratorParams make_generator(std::uint64_t seed, const seq::ModelSizes& s) {
  Rng rng(seed);
  policy::GeneratorParams g;
  g.init(s, rng);
  return g;
}

critic::DiscriminatorParams make_disc(std::uint64_t seed, const seq::ModelSizes& s) {
  Rng rng(seed);
  critic::DiscriminatorParams d;
  d.init(s, rng);
  return d;
}

data::SerpRecord make_record(int query, std::vector<int> docs,
                             std::vector<std::uint8_t> clicks) {
  data::SerpRecord r;
  r.session_id = "s";
  r.query = query;
  r.docs = std::move(docs);
  r.verticals.assign(r.docs.size(), 2);
  r.clicks = std::move(clicks);
  return r;
}

bool params_equal(policy::GeneratorParams& a, policy::GeneratorParams& b, double tol) {
  num::ParamStore sa = a.params(), sb = b.params();
  for (std::size_t i = 0; i < sa.count(); ++i)
    if ((sa.param(i).value - sb.param(i).value).cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("config defaults follow the training recipe") {
  train::TrainConfig cfg;
  CHECK(cfg.batch_size == 128);
  CHECK(cfg.lr_gen == doctest::Approx(5e-4));
  CHECK(cfg.lr_disc == doctest::Approx(1e-3));
  CHECK(cfg.lr_decay == doctest::Approx(0.5));
  CHECK(cfg.lr_pretrain == doctest::Approx(1e-3));
  CHECK(cfg.l2 == doctest::Approx(1e-5));
  CHECK(cfg.dropout == doctest::Approx(0.5));
  CHECK(cfg.gamma == doctest::Approx(0.1));
  CHECK(cfg.ppo_clip == doctest::Approx(0.2));
}

TEST_CASE("config file round trip and validation") {
  auto file = std::filesystem::temp_directory_path() / "clicksim_test.conf";
  {
    std::ofstream out(file);
    out << "# comment\n";
    out << "batch_size = 32\n";
    out << "gamma = 0.25\n";
    out << "d_step = 2,5\n";
    out << "reward_sign = log_d\n";
  }
  auto cfg = train::TrainConfig::from_file(file);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.gamma == doctest::Approx(0.25));
  CHECK(cfg.d_step_m == 2);
  CHECK(cfg.d_step_n == 5);
  CHECK(cfg.reward_sign == train::RewardSign::log_d);
  CHECK(cfg.to_text().find("d_step = 2,5") != std::string::npos);

  {
    std::ofstream out(file);
    out << "unknown_key = 1\n";
  }
  CHECK_THROWS_AS(train::TrainConfig::from_file(file), DataError);
  {
    std::ofstream out(file);
    out << "batch_size = twelve\n";
  }
  CHECK_THROWS_AS(train::TrainConfig::from_file(file), DataError);
  {
    std::ofstream out(file);
    out << "gamma = 1.5\n";
  }
  CHECK_THROWS_AS(train::TrainConfig::from_file(file), DataError);
  std::filesystem::remove(file);
}

TEST_CASE("compute_returns against the uninformed discriminator") {
  auto sizes = tiny_sizes(6, 12, 4);
  auto d = make_disc(1, sizes);
  num::ParamStore store = d.params();
  for (std::size_t i = 0; i < store.count(); ++i) store.param(i).value.setZero();

  policy::Trajectory traj;
  traj.source = make_record(2, {3, 5, 7}, {0, 0, 0});
  traj.actions = {1, 0, 1};
  traj.log_probs = {std::log(0.5), std::log(0.5), std::log(0.5)};

  train::compute_returns(traj, d, 0.1);
  const double ln2 = 0.6931471805599453;
  for (double r : traj.rewards) CHECK(r == doctest::Approx(ln2).epsilon(1e-12));
  CHECK(traj.returns[0] == doctest::Approx(0.7693933704215393).epsilon(1e-12));
  CHECK(traj.returns[1] == doctest::Approx(ln2 * 1.1).epsilon(1e-12));
  CHECK(traj.returns[2] == doctest::Approx(ln2).epsilon(1e-12));

  // gamma = 0 degenerates to Q_t = r_t.
  train::compute_returns(traj, d, 0.0);
  for (std::size_t t = 0; t < 3; ++t)
    CHECK(traj.returns[t] == doctest::Approx(traj.rewards[t]));

  // Literal ascent reading flips the sign.
  train::compute_returns(traj, d, 0.0, train::RewardSign::log_d);
  for (double r : traj.rewards) CHECK(r == doctest::Approx(-ln2).epsilon(1e-12));
}

TEST_CASE("a fooled discriminator pays vanishing rewards") {
  auto sizes = tiny_sizes(6, 12, 4);
  auto d = make_disc(2, sizes);
  num::ParamStore store = d.params();
  for (std::size_t i = 0; i < store.count(); ++i) store.param(i).value.setZero();
  d.head_b.value(0, 0) = 30.0;  // D -> 1 on every pair

  policy::Trajectory traj;
  traj.source = make_record(2, {3, 5, 7}, {0, 0, 0});
  traj.actions = {1, 1, 0};
  traj.log_probs = {0, 0, 0};
  train::compute_returns(traj, d, 0.1);
  for (double r : traj.rewards) {
    CHECK(r >= 0.0);
    CHECK(r < 1e-9);
  }
}

TEST_CASE("ppo with zero advantages and no entropy term is a no-op") {
  auto sizes = tiny_sizes(6, 12, 4);
  auto g = make_generator(3, sizes);
  auto g_before = g;

  std::vector<policy::Trajectory> batch;
  Rng rng(4);
  for (int i = 0; i < 3; ++i) {
    auto traj = policy::sample_sequence(g, make_record(2, {3, 5, 7}, {0, 0, 0}), rng);
    traj.returns = {2.5, 2.5, 2.5};  // centered to zero advantage everywhere
    traj.rewards = {0, 0, 0};
    batch.push_back(traj);
  }
  train::TrainConfig cfg;
  cfg.lambda_entropy = 0.0;
  cfg.l2 = 0.0;
  num::AdamState opt;
  train::ppo_update(g, opt, batch, cfg, 1e-3);
  CHECK(params_equal(g, g_before, 0.0));
}

TEST_CASE("entropy gradient vanishes exactly at the uniform head") {
  auto sizes = tiny_sizes(6, 12, 4);
  auto g = make_generator(5, sizes);
  num::ParamStore store = g.params();
  for (std::size_t i = 0; i < store.count(); ++i) store.param(i).value.setZero();
  auto g_before = g;

  std::vector<policy::Trajectory> batch;
  Rng rng(6);
  auto traj = policy::sample_sequence(g, make_record(2, {3, 5, 7}, {0, 0, 0}), rng);
  traj.returns = {1.0, 1.0, 1.0};  // zero advantage after centering
  batch.push_back(traj);

  train::TrainConfig cfg;
  cfg.lambda_entropy = 0.1;
  cfg.l2 = 0.0;
  num::AdamState opt;
  auto stats = train::ppo_update(g, opt, batch, cfg, 1e-3);
  CHECK(stats.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(params_equal(g, g_before, 0.0));
}

TEST_CASE("first-pass surrogate gradient equals the vanilla policy gradient") {
  auto sizes = tiny_sizes(6, 12, 4);
  auto g_ppo = make_generator(7, sizes);
  auto g_manual = g_ppo;

  Rng rng(8);
  std::vector<policy::Trajectory> batch;
  for (int i = 0; i < 2; ++i) {
    auto traj = policy::sample_sequence(
        g_ppo, make_record(2 + i, {3, 5, 7}, {0, 0, 0}), rng);
    traj.returns = {0.3 + i, -0.2, 0.9 - i};
    batch.push_back(traj);
  }

  train::TrainConfig cfg;
  cfg.lambda_entropy = 0.0;
  cfg.l2 = 0.0;
  cfg.ppo_epochs = 1;

  // Manual vanilla policy gradient with identically standardized advantages.
  std::size_t n_pos = 0;
  double mean = 0.0;
  for (auto& t : batch)
    for (double q : t.returns) {
      mean += q;
      ++n_pos;
    }
  mean /= static_cast<double>(n_pos);
  double var = 0.0;
  for (auto& t : batch)
    for (double q : t.returns) var += (q - mean) * (q - mean);
  const double sd = std::sqrt(var / static_cast<double>(n_pos));

  num::ParamStore manual_store = g_manual.params();
  manual_store.zero_grads();
  for (auto& traj : batch) {
    auto f = policy::forward_sequence(g_manual, traj.source, traj.actions);
    std::vector<std::array<double, 2>> dlogits(3);
    for (int t = 0; t < 3; ++t) {
      const std::size_t i = static_cast<std::size_t>(t);
      const double adv = (traj.returns[i] - mean) / (sd + 1e-8);
      const int a = traj.actions[i];
      // loss = -E[log pi * A]; dlogit = -A (onehot - p) / n.
      dlogits[i][0] = -adv * ((a == 0 ? 1.0 : 0.0) - f.probs[i][0]) /
                      static_cast<double>(n_pos);
      dlogits[i][1] = -adv * ((a == 1 ? 1.0 : 0.0) - f.probs[i][1]) /
                      static_cast<double>(n_pos);
    }
    policy::backward_sequence(g_manual, f, dlogits);
  }
  g_manual.zero_padding_grads();
  num::AdamState manual_opt;
  num::adam_step(manual_opt, manual_store, {.lr = 1e-3});

  num::AdamState ppo_opt;
  train::ppo_update(g_ppo, ppo_opt, batch, cfg, 1e-3);

  CHECK(params_equal(g_ppo, g_manual, 1e-12));
}

TEST_CASE("saturated clipping drops the ratio dependence of a sample") {
  auto sizes = tiny_sizes(6, 12, 4);
  auto base = make_generator(9, sizes);

  auto run = [&](double old_logp_shift) {
    auto g = base;
    Rng rng(10);
    std::vector<policy::Trajectory> batch;
    auto t1 = policy::sample_sequence(g, make_record(2, {3}, {0}), rng);
    t1.returns = {1.0};
    t1.log_probs[0] -= old_logp_shift;  // inflates the ratio beyond 1+eps
    auto t2 = policy::sample_sequence(g, make_record(3, {4}, {0}), rng);
    t2.returns = {-1.0};
    batch.push_back(t1);
    batch.push_back(t2);

    train::TrainConfig cfg;
    cfg.lambda_entropy = 0.0;
    cfg.l2 = 0.0;
    cfg.ppo_epochs = 1;
    num::AdamState opt;
    auto stats = train::ppo_update(g, opt, batch, cfg, 1e-3);
    CHECK(stats.clip_fraction > 0.0);
    return g;
  };

  // Positive advantage, ratio pushed past 1+eps in two different ways:
  // the clipped sample must contribute zero gradient either way.
  auto g_a = run(0.5);
  auto g_b = run(0.9);
  CHECK(params_equal(g_a, g_b, 1e-15));
}

TEST_CASE("advantage normalization is invariant to positive affine reward maps") {
  auto sizes = tiny_sizes(6, 12, 4);
  auto g1 = make_generator(11, sizes);
  auto g2 = g1;

  Rng rng(12);
  std::vector<policy::Trajectory> batch1, batch2;
  for (int i = 0; i < 3; ++i) {
    auto traj = policy::sample_sequence(g1, make_record(2, {3, 5, 7}, {0, 0, 0}), rng);
    traj.rewards = {0.1 * i, 0.7, -0.4 + 0.2 * i};
    auto scaled = traj;
    for (std::size_t t = 0; t < 3; ++t) scaled.rewards[t] = 3.0 * traj.rewards[t] + 1.0;
    // gamma = 0: returns equal rewards.
    traj.returns = traj.rewards;
    scaled.returns = scaled.rewards;
    batch1.push_back(traj);
    batch2.push_back(scaled);
  }

  train::TrainConfig cfg;
  cfg.l2 = 0.0;
  cfg.ppo_epochs = 2;
  num::AdamState o1, o2;
  train::ppo_update(g1, o1, batch1, cfg, 1e-3);
  train::ppo_update(g2, o2, batch2, cfg, 1e-3);
  CHECK(params_equal(g1, g2, 1e-9));
}

TEST_CASE("bandit: ppo drives the click probability up under click rewards") {
  seq::ModelSizes sizes = tiny_sizes(4, 6, 4);
  auto g = make_generator(13, sizes);
  auto r = make_record(2, {3}, {0});

  train::TrainConfig cfg;
  cfg.lambda_entropy = 0.0;
  cfg.l2 = 0.0;
  cfg.ppo_epochs = 2;
  num::AdamState opt;
  Rng rng(14);

  const double p_start = policy::teacher_forced_probs(g, r)[0];
  for (int update = 0; update < 150; ++update) {
    std::vector<policy::Trajectory> batch;
    for (int i = 0; i < 16; ++i) {
      auto traj = policy::sample_sequence(g, r, rng);
      traj.returns = {traj.actions[0] == 1 ? 1.0 : -1.0};
      batch.push_back(traj);
    }
    train::ppo_update(g, opt, batch, cfg, 5e-3);
  }
  const double p_end = policy::teacher_forced_probs(g, r)[0];
  CHECK(p_end > p_start);
  CHECK(p_end > 0.85);
}

TEST_CASE("pretrain with zero epochs leaves parameters untouched") {
  Rng rng(15);
  auto spec = oracle::OracleSpec::random_pbm(3, 4, 8, 2, {0.9, 0.5, 0.3}, 16);
  auto data = oracle::synth_generate(spec, 300, rng);

  seq::ModelSizes sizes = tiny_sizes(data.queries.size(), data.docs.size(),
                                     data.verticals.size());
  auto g = make_generator(17, sizes);
  auto d = make_disc(18, sizes);
  auto g_before = g;

  train::TrainConfig cfg;
  cfg.pretrain_epochs = 0;
  auto report = train::pretrain_mle(g, d, data, cfg);
  CHECK(report.rows.empty());
  CHECK(params_equal(g, g_before, 0.0));
}

TEST_CASE("pretrain overfits a single-record dataset") {
  data::Dataset d;
  d.list_len = 3;
  d.train.push_back(make_record(2, {2, 3, 4}, {1, 0, 1}));
  d.valid.push_back(d.train[0]);
  // Reserved ids force minimum vocab sizes.
  seq::ModelSizes sizes = tiny_sizes(3, 5, 3);

  auto g = make_generator(19, sizes);
  auto disc = make_disc(20, sizes);

  train::TrainConfig cfg;
  cfg.pretrain_epochs = 10;
  cfg.batch_size = 1;
  cfg.dropout = 0.0;  // deterministic descent on one record
  cfg.l2 = 0.0;
  auto report = train::pretrain_mle(g, disc, d, cfg);
  REQUIRE(report.rows.size() == 10);
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    CHECK(report.rows[i].gen_loss < report.rows[i - 1].gen_loss);
}

TEST_CASE("training reports are bit-identical across reruns of one seed") {
  Rng rng(21);
  auto spec = oracle::OracleSpec::random_pbm(3, 4, 8, 2, {0.9, 0.5, 0.3}, 22);
  auto data = oracle::synth_generate(spec, 400, rng);
  seq::ModelSizes sizes = tiny_sizes(data.queries.size(), data.docs.size(),
                                     data.verticals.size());

  auto run = [&](std::uint64_t seed) {
    auto g = make_generator(23, sizes);
    auto disc = make_disc(24, sizes);
    train::TrainConfig cfg;
    cfg.pretrain_epochs = 2;
    cfg.max_epochs = 2;
    cfg.batch_size = 64;
    cfg.seed = seed;
    auto pre = train::pretrain_mle(g, disc, data, cfg);
    auto gail = train::gail_loop(g, disc, data, cfg);
    return pre.to_tsv() + gail.to_tsv();
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("frozen critic: d_step (0,0) leaves the discriminator untouched") {
  Rng rng(25);
  auto spec = oracle::OracleSpec::random_pbm(3, 4, 8, 2, {0.9, 0.5, 0.3}, 26);
  auto data = oracle::synth_generate(spec, 300, rng);
  seq::ModelSizes sizes = tiny_sizes(data.queries.size(), data.docs.size(),
                                     data.verticals.size());

  auto g = make_generator(27, sizes);
  auto disc = make_disc(28, sizes);
  num::ParamStore disc_store = disc.params();
  std::vector<num::Mat> before;
  for (std::size_t i = 0; i < disc_store.count(); ++i)
    before.push_back(disc_store.param(i).value);

  train::TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 32;
  cfg.d_step_m = 0;
  cfg.d_step_n = 0;
  auto report = train::gail_loop(g, disc, data, cfg);

  // The discriminator still backs rewards but must not move; the best-PPL
  // checkpoint restore also restores the identical discriminator.
  for (std::size_t i = 0; i < disc_store.count(); ++i)
    CHECK((disc_store.param(i).value - before[i]).cwiseAbs().maxCoeff() == 0.0);
  for (const auto& row : report.rows) CHECK(row.disc_loss == 0.0);
}

TEST_SUITE_END();
