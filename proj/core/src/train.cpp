#include "clicksim/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace clicksim::train {

RewardSign parse_reward_sign(const std::string& s) {
  if (s == "neg_log_d") return RewardSign::neg_log_d;
  if (s == "log_d") return RewardSign::log_d;
  throw DataError("unknown reward_sign '" + s + "'");
}

std::string to_string(RewardSign r) {
  return r == RewardSign::neg_log_d ? "neg_log_d" : "log_d";
}

void TrainConfig::validate() const {
  check_data(batch_size > 0, "config: batch_size must be positive");
  check_data(lr_gen > 0 && lr_disc > 0 && lr_pretrain > 0, "config: learning rates must be positive");
  check_data(lr_decay > 0 && lr_decay <= 1, "config: lr_decay must be in (0,1]");
  check_data(gamma >= 0 && gamma <= 1, "config: gamma must be in [0,1]");
  check_data(ppo_clip > 0 && ppo_clip < 1, "config: ppo_clip must be in (0,1)");
  check_data(dropout >= 0 && dropout < 1, "config: dropout must be in [0,1)");
  check_data(lambda_entropy >= 0, "config: lambda_entropy must be >= 0");
  check_data(ppo_epochs > 0, "config: ppo_epochs must be positive");
  check_data(g_step >= 0 && d_step_m >= 0 && d_step_n >= 0, "config: steps must be >= 0");
  check_data(pretrain_epochs >= 0 && max_epochs >= 0, "config: epochs must be >= 0");
  check_data(patience > 0, "config: patience must be positive");
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out;
  std::string rest;
  if (!(in >> out) || (in >> rest))
    throw DataError("config: bad value '" + value + "' for key '" + key + "'");
  return out;
}

}  // namespace

void TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "batch_size") batch_size = parse_num<int>(key, value);
  else if (key == "lr_gen") lr_gen = parse_num<double>(key, value);
  else if (key == "lr_disc") lr_disc = parse_num<double>(key, value);
  else if (key == "lr_decay") lr_decay = parse_num<double>(key, value);
  else if (key == "lr_pretrain") lr_pretrain = parse_num<double>(key, value);
  else if (key == "l2") l2 = parse_num<double>(key, value);
  else if (key == "dropout") dropout = parse_num<double>(key, value);
  else if (key == "gamma") gamma = parse_num<double>(key, value);
  else if (key == "lambda_entropy") lambda_entropy = parse_num<double>(key, value);
  else if (key == "ppo_clip") ppo_clip = parse_num<double>(key, value);
  else if (key == "ppo_epochs") ppo_epochs = parse_num<int>(key, value);
  else if (key == "g_step") g_step = parse_num<int>(key, value);
  else if (key == "d_step") {
    auto comma = value.find(',');
    check_data(comma != std::string::npos, "config: d_step takes 'm,n'");
    d_step_m = parse_num<int>(key, trim(value.substr(0, comma)));
    d_step_n = parse_num<int>(key, trim(value.substr(comma + 1)));
  } else if (key == "pretrain_epochs") pretrain_epochs = parse_num<int>(key, value);
  else if (key == "max_epochs") max_epochs = parse_num<int>(key, value);
  else if (key == "seed") seed = parse_num<std::uint64_t>(key, value);
  else if (key == "patience") patience = parse_num<int>(key, value);
  else if (key == "reward_sign") reward_sign = parse_reward_sign(value);
  else throw DataError("config: unknown key '" + key + "'");
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  check_data(in.good(), "cannot open config " + file.string());
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    check_data(eq != std::string::npos,
               "config line " + std::to_string(line_no) + ": expected 'key = value'");
    cfg.apply(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "batch_size = " << batch_size << '\n'
      << "lr_gen = " << lr_gen << '\n'
      << "lr_disc = " << lr_disc << '\n'
      << "lr_decay = " << lr_decay << '\n'
      << "lr_pretrain = " << lr_pretrain << '\n'
      << "l2 = " << l2 << '\n'
      << "dropout = " << dropout << '\n'
      << "gamma = " << gamma << '\n'
      << "lambda_entropy = " << lambda_entropy << '\n'
      << "ppo_clip = " << ppo_clip << '\n'
      << "ppo_epochs = " << ppo_epochs << '\n'
      << "g_step = " << g_step << '\n'
      << "d_step = " << d_step_m << ',' << d_step_n << '\n'
      << "pretrain_epochs = " << pretrain_epochs << '\n'
      << "max_epochs = " << max_epochs << '\n'
      << "seed = " << seed << '\n'
      << "patience = " << patience << '\n'
      << "reward_sign = " << to_string(reward_sign) << '\n';
  return out.str();
}

std::string TrainReport::to_tsv() const {
  std::ostringstream out;
  out.precision(12);
  out << "epoch\tgen_loss\tdisc_loss\tvalid_ll\tvalid_ppl\tlr_gen\tlr_disc\n";
  for (const EpochRow& r : rows)
    out << r.epoch << '\t' << r.gen_loss << '\t' << r.disc_loss << '\t' << r.valid_ll << '\t'
        << r.valid_ppl << '\t' << r.lr_gen << '\t' << r.lr_disc << '\n';
  return out.str();
}

ValidMetrics validate(const policy::GeneratorParams& gen,
                      std::span<const data::SerpRecord> records) {
  ValidMetrics v;
  if (records.empty()) return v;
  auto preds = metrics::predictions_on(metrics::predictor_for(gen), records);
  v.ll = metrics::log_likelihood(preds);
  v.ppl = metrics::perplexity(preds).overall;
  return v;
}

namespace {

struct BatchIter {
  std::vector<std::size_t> order;
  std::size_t pos = 0;
  Rng rng;

  BatchIter(std::size_t n, Rng r) : rng(r) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
  }

  // Next `want` indices, reshuffling when the pass wraps.
  std::vector<std::size_t> next(std::size_t want) {
    std::vector<std::size_t> out;
    out.reserve(want);
    while (out.size() < want) {
      if (pos == order.size()) {
        rng.shuffle(order);
        pos = 0;
      }
      out.push_back(order[pos++]);
    }
    return out;
  }

  std::size_t batches_per_epoch(std::size_t batch) const {
    return (order.size() + batch - 1) / batch;
  }
};

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainReport pretrain_mle(policy::GeneratorParams& gen, critic::DiscriminatorParams& disc,
                         const data::Dataset& d, const TrainConfig& cfg) {
  cfg.validate();
  TrainReport report;
  if (cfg.pretrain_epochs == 0) return report;
  check_data(!d.train.empty(), "pretrain_mle: empty train split");

  Rng master(cfg.seed);
  Rng rng_shuffle = master.fork();
  Rng rng_dropout = master.fork();
  Rng rng_sample = master.fork();

  num::ParamStore gen_store = gen.params();
  num::ParamStore disc_store = disc.params();
  num::AdamState gen_opt, disc_opt;
  num::AdamConfig gen_adam{.lr = cfg.lr_pretrain, .l2 = cfg.l2};
  num::AdamConfig disc_adam{.lr = cfg.lr_pretrain, .l2 = cfg.l2};

  policy::GeneratorParams best_gen = gen;
  critic::DiscriminatorParams best_disc = disc;
  double best_ppl = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(d.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng_shuffle.shuffle(order);
    double gen_loss_sum = 0.0, disc_loss_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - begin);

      gen_store.zero_grads();
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i)
        batch_loss += scale * policy::nll_loss_grads(gen, d.train[order[i]], scale,
                                                     cfg.dropout, &rng_dropout);
      gen.zero_padding_grads();
      num::adam_step(gen_opt, gen_store, gen_adam);
      gen_loss_sum += batch_loss;

      // Discriminator pretraining: real clicks vs. current-generator samples.
      std::vector<std::vector<std::uint8_t>> fakes;
      std::vector<critic::LabeledSequence> real, fake;
      fakes.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        fakes.push_back(policy::sample_sequence(gen, d.train[order[i]], rng_sample).actions);
        real.push_back({&d.train[order[i]], nullptr});
        fake.push_back({&d.train[order[i]], &fakes.back()});
      }
      disc_store.zero_grads();
      auto stats = critic::disc_grads(disc, real, fake, cfg.dropout, &rng_dropout);
      disc.zero_padding_grads();
      num::adam_step(disc_opt, disc_store, disc_adam);
      disc_loss_sum += stats.loss;
      ++batches;
    }

    EpochRow row;
    row.epoch = epoch;
    row.gen_loss = gen_loss_sum / static_cast<double>(batches);
    row.disc_loss = disc_loss_sum / static_cast<double>(batches);
    ValidMetrics v = validate(gen, d.valid);
    row.valid_ll = v.ll;
    row.valid_ppl = v.ppl;
    row.lr_gen = cfg.lr_pretrain;
    row.lr_disc = cfg.lr_pretrain;
    row.seconds = elapsed_s(start);
    report.rows.push_back(row);

    if (!d.valid.empty() && v.ppl < best_ppl) {
      best_ppl = v.ppl;
      best_gen = gen;
      best_disc = disc;
      report.best_epoch = epoch;
      report.best_valid_ppl = v.ppl;
    }
  }

  if (report.best_epoch >= 0) {
    gen = best_gen;
    disc = best_disc;
  }
  return report;
}

void compute_returns(policy::Trajectory& traj, const critic::DiscriminatorParams& disc,
                     double gamma, RewardSign sign) {
  const int t_len = traj.source.list_len();
  check_contract(static_cast<int>(traj.actions.size()) == t_len,
                 "compute_returns: trajectory without actions");
  std::vector<double> scores = critic::score_sequence(disc, traj.source, traj.actions);
  traj.rewards.resize(static_cast<std::size_t>(t_len));
  traj.returns.resize(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    const double d_t = std::clamp(scores[static_cast<std::size_t>(t)], 1e-12, 1.0 - 1e-12);
    traj.rewards[static_cast<std::size_t>(t)] =
        sign == RewardSign::neg_log_d ? -std::log(d_t) : std::log(d_t);
  }
  double acc = 0.0;
  for (int t = t_len - 1; t >= 0; --t) {
    acc = traj.rewards[static_cast<std::size_t>(t)] + gamma * acc;
    traj.returns[static_cast<std::size_t>(t)] = acc;
  }
}

PpoStats ppo_update(policy::GeneratorParams& gen, num::AdamState& opt,
                    std::span<policy::Trajectory> trajectories, const TrainConfig& cfg,
                    double lr) {
  check_contract(!trajectories.empty(), "ppo_update: empty batch");

  std::size_t n_pos = 0;
  double mean = 0.0;
  for (const auto& traj : trajectories) {
    check_contract(traj.returns.size() == traj.actions.size(),
                   "ppo_update: returns not computed");
    for (double q : traj.returns) mean += q;
    n_pos += traj.returns.size();
  }
  mean /= static_cast<double>(n_pos);
  double var = 0.0;
  for (const auto& traj : trajectories)
    for (double q : traj.returns) var += (q - mean) * (q - mean);
  const double stddev = std::sqrt(var / static_cast<double>(n_pos));

  std::vector<std::vector<double>> advantages;
  advantages.reserve(trajectories.size());
  for (const auto& traj : trajectories) {
    std::vector<double> a(traj.returns.size());
    for (std::size_t t = 0; t < a.size(); ++t)
      a[t] = (traj.returns[t] - mean) / (stddev + 1e-8);
    advantages.push_back(std::move(a));
  }

  num::ParamStore store = gen.params();
  num::AdamConfig adam{.lr = lr, .l2 = cfg.l2};
  const double scale = 1.0 / static_cast<double>(n_pos);
  const double lo = 1.0 - cfg.ppo_clip, hi = 1.0 + cfg.ppo_clip;

  PpoStats stats;
  for (int pass = 0; pass < cfg.ppo_epochs; ++pass) {
    store.zero_grads();
    double surrogate = 0.0, entropy = 0.0;
    std::size_t clipped_count = 0;

    for (std::size_t k = 0; k < trajectories.size(); ++k) {
      policy::Trajectory& traj = trajectories[k];
      policy::SeqForward f = policy::forward_sequence(gen, traj.source, traj.actions);
      const int t_len = traj.source.list_len();
      std::vector<std::array<double, 2>> dlogits(static_cast<std::size_t>(t_len),
                                                 {0.0, 0.0});

      for (int t = 0; t < t_len; ++t) {
        const std::size_t i = static_cast<std::size_t>(t);
        const int a = traj.actions[i];
        const double p0 = f.probs[i][0], p1 = f.probs[i][1];
        const double p_a = a == 1 ? p1 : p0;
        const double ratio = std::exp(std::log(p_a) - traj.log_probs[i]);
        const double adv = advantages[k][i];

        const double unclipped = ratio * adv;
        const double clipped = std::clamp(ratio, lo, hi) * adv;
        surrogate += std::min(unclipped, clipped);

        const bool clip_active = clipped < unclipped;
        if (clip_active) ++clipped_count;

        // d(loss)/dlogit = -(surrogate + lambda*H) gradient per position.
        double d0 = 0.0, d1 = 0.0;
        if (!clip_active) {
          // d(ratio)/dlogit_j = ratio * (1[j==a] - p_j)
          d0 = adv * ratio * ((a == 0 ? 1.0 : 0.0) - p0);
          d1 = adv * ratio * ((a == 1 ? 1.0 : 0.0) - p1);
        }
        const double h = -(p0 * std::log(p0) + p1 * std::log(p1));
        entropy += h;
        if (cfg.lambda_entropy != 0.0) {
          d0 += cfg.lambda_entropy * (-p0 * (std::log(p0) + h));
          d1 += cfg.lambda_entropy * (-p1 * (std::log(p1) + h));
        }
        dlogits[i][0] = -d0 * scale;
        dlogits[i][1] = -d1 * scale;
      }
      policy::backward_sequence(gen, f, dlogits);
    }

    gen.zero_padding_grads();
    num::adam_step(opt, store, adam);

    stats.surrogate = surrogate * scale;
    stats.entropy = entropy * scale;
    stats.clip_fraction = static_cast<double>(clipped_count) / static_cast<double>(n_pos);
    stats.loss = -(stats.surrogate + cfg.lambda_entropy * stats.entropy);
  }
  return stats;
}

TrainReport gail_loop(policy::GeneratorParams& gen, critic::DiscriminatorParams& disc,
                      const data::Dataset& d, const TrainConfig& cfg) {
  cfg.validate();
  check_data(!d.train.empty(), "gail_loop: empty train split");

  TrainReport report;
  Rng master(cfg.seed);
  BatchIter gen_batches(d.train.size(), master.fork());
  BatchIter disc_batches(d.train.size(), master.fork());
  Rng rng_sample = master.fork();
  Rng rng_dropout = master.fork();

  num::ParamStore disc_store = disc.params();
  num::AdamState gen_opt, disc_opt;

  policy::GeneratorParams best_gen = gen;
  critic::DiscriminatorParams best_disc = disc;
  double best_ppl = std::numeric_limits<double>::infinity();
  double lr_gen = cfg.lr_gen, lr_disc = cfg.lr_disc;
  int stall = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double gen_loss_sum = 0.0;
    double disc_loss_sum = 0.0;
    std::size_t disc_updates = 0;

    for (int gs = 0; gs < cfg.g_step; ++gs) {
      auto idx = gen_batches.next(static_cast<std::size_t>(cfg.batch_size));
      std::vector<policy::Trajectory> trajectories;
      trajectories.reserve(idx.size());
      for (std::size_t i : idx)
        trajectories.push_back(policy::sample_sequence(gen, d.train[i], rng_sample));
      for (auto& traj : trajectories)
        compute_returns(traj, disc, cfg.gamma, cfg.reward_sign);
      PpoStats s = ppo_update(gen, gen_opt, trajectories, cfg, lr_gen);
      gen_loss_sum += s.loss;
    }

    for (int ms = 0; ms < cfg.d_step_m; ++ms) {
      auto idx = disc_batches.next(static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::vector<std::uint8_t>> fakes;
      std::vector<critic::LabeledSequence> real, fake;
      fakes.reserve(idx.size());
      for (std::size_t i : idx) {
        fakes.push_back(policy::sample_sequence(gen, d.train[i], rng_sample).actions);
        real.push_back({&d.train[i], nullptr});
        fake.push_back({&d.train[i], &fakes.back()});
      }
      for (int ns = 0; ns < cfg.d_step_n; ++ns) {
        disc_store.zero_grads();
        auto stats =
            critic::disc_grads(disc, real, fake, cfg.dropout, &rng_dropout);
        disc.zero_padding_grads();
        num::AdamConfig disc_adam{.lr = lr_disc, .l2 = cfg.l2};
        num::adam_step(disc_opt, disc_store, disc_adam);
        disc_loss_sum += stats.loss;
        ++disc_updates;
      }
    }

    EpochRow row;
    row.epoch = epoch;
    row.gen_loss = cfg.g_step > 0 ? gen_loss_sum / cfg.g_step : 0.0;
    row.disc_loss = disc_updates > 0 ? disc_loss_sum / static_cast<double>(disc_updates) : 0.0;
    ValidMetrics v = validate(gen, d.valid);
    row.valid_ll = v.ll;
    row.valid_ppl = v.ppl;
    row.lr_gen = lr_gen;
    row.lr_disc = lr_disc;
    row.seconds = elapsed_s(start);
    report.rows.push_back(row);

    if (!d.valid.empty()) {
      if (v.ppl < best_ppl) {
        best_ppl = v.ppl;
        best_gen = gen;
        best_disc = disc;
        report.best_epoch = epoch;
        report.best_valid_ppl = v.ppl;
        stall = 0;
      } else if (++stall >= cfg.patience) {
        lr_gen *= cfg.lr_decay;
        lr_disc *= cfg.lr_decay;
        stall = 0;
      }
    }
  }

  if (report.best_epoch >= 0) {
    gen = best_gen;
    disc = best_disc;
  }
  return report;
}

void fit_mle_generator(policy::GeneratorParams& gen, std::span<const data::SerpRecord> records,
                       int epochs, double lr, int batch_size, std::uint64_t seed) {
  check_data(!records.empty(), "fit_mle_generator: empty training data");
  Rng rng(seed);
  num::ParamStore store = gen.params();
  num::AdamState opt;
  num::AdamConfig adam{.lr = lr};

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
      store.zero_grads();
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i)
        policy::nll_loss_grads(gen, records[order[i]], scale);
      gen.zero_padding_grads();
      num::adam_step(opt, store, adam);
    }
  }
}

}  // namespace clicksim::train
