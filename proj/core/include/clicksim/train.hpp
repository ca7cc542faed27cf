#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clicksim/clicklog.hpp"
#include "clicksim/critic.hpp"
#include "clicksim/metrics.hpp"
#include "clicksim/policy.hpp"

namespace clicksim::train {

// Direction of the policy reward built from the discriminator under the
// "D is trained toward 1 on generated pairs" labeling. neg_log_d is the
// canonical GAIL cost convention; log_d is the literal ascent reading.
enum class RewardSign { neg_log_d, log_d };

RewardSign parse_reward_sign(const std::string& s);
std::string to_string(RewardSign r);

struct TrainConfig {
  int batch_size = 128;
  double lr_gen = 5e-4;
  double lr_disc = 1e-3;
  double lr_decay = 0.5;
  double lr_pretrain = 1e-3;
  double l2 = 1e-5;
  double dropout = 0.5;
  double gamma = 0.1;
  double lambda_entropy = 1e-2;
  double ppo_clip = 0.2;
  int ppo_epochs = 4;
  int g_step = 1;
  int d_step_m = 1;
  int d_step_n = 1;
  int pretrain_epochs = 5;
  int max_epochs = 10;
  std::uint64_t seed = 1;
  int patience = 3;
  RewardSign reward_sign = RewardSign::neg_log_d;

  void validate() const;

  // `key = value` lines; keys match the field names (d_step takes "m,n").
  // Unknown keys are rejected.
  static TrainConfig from_file(const std::filesystem::path& file);
  void apply(const std::string& key, const std::string& value);
  std::string to_text() const;
};

struct EpochRow {
  int epoch = 0;
  double gen_loss = 0.0;
  double disc_loss = 0.0;
  double valid_ll = 0.0;
  double valid_ppl = 0.0;
  double lr_gen = 0.0;
  double lr_disc = 0.0;
  double seconds = 0.0;  // informational; excluded from the canonical TSV
};

struct TrainReport {
  std::vector<EpochRow> rows;
  int best_epoch = -1;
  double best_valid_ppl = 0.0;
  // Deterministic serialization (wall-clock excluded).
  std::string to_tsv() const;
};

// ---------------------------------------------------------------------------

// Behavior-cloning phase: the generator minimizes teacher-forced binary
// cross-entropy on clicks; the discriminator pretrains on real sequences
// vs. sequences sampled from the current generator. Checkpoints (and
// restores) the epoch with the lowest validation PPL.
TrainReport pretrain_mle(policy::GeneratorParams& gen, critic::DiscriminatorParams& disc,
                         const data::Dataset& d, const TrainConfig& cfg);

// r_t from the discriminator on the sampled clicks; Q_t is the discounted
// Monte-Carlo return (no bootstrapping).
void compute_returns(policy::Trajectory& traj, const critic::DiscriminatorParams& disc,
                     double gamma, RewardSign sign = RewardSign::neg_log_d);

struct PpoStats {
  double surrogate = 0.0;      // mean clipped-surrogate value
  double entropy = 0.0;        // mean policy entropy per position
  double clip_fraction = 0.0;  // fraction of positions with saturated clip
  double loss = 0.0;           // -(surrogate + lambda * entropy)
};

// ppo_epochs passes of the clipped surrogate with batch-standardized
// advantages and an entropy bonus; one Adam step per pass.
PpoStats ppo_update(policy::GeneratorParams& gen, num::AdamState& opt,
                    std::span<policy::Trajectory> trajectories, const TrainConfig& cfg,
                    double lr);

// Adversarial alternation: per epoch, g_step generator updates, then
// d_step_m sampled batches each training the discriminator d_step_n times.
// Learning rates decay by lr_decay when validation PPL stalls for
// `patience` epochs; the returned model is the checkpoint with the lowest
// validation PPL.
TrainReport gail_loop(policy::GeneratorParams& gen, critic::DiscriminatorParams& disc,
                      const data::Dataset& d, const TrainConfig& cfg);

// Teacher-forced LL and overall PPL of the generator on a record set.
struct ValidMetrics {
  double ll = 0.0;
  double ppl = 0.0;
};
ValidMetrics validate(const policy::GeneratorParams& gen,
                      std::span<const data::SerpRecord> records);

// Fixed-budget MLE fit used for neural surrogates and smoke tests: no
// dropout, no validation, no checkpointing.
void fit_mle_generator(policy::GeneratorParams& gen, std::span<const data::SerpRecord> records,
                       int epochs, double lr, int batch_size, std::uint64_t seed);

}  // namespace clicksim::train
