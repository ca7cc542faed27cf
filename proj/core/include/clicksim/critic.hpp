#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "clicksim/clicklog.hpp"
#include "clicksim/numkernel.hpp"
#include "clicksim/seqcommon.hpp"

namespace clicksim::critic {

// The discriminator: its own embedding tables (no sharing with the
// generator), a GRU over (query, doc, vertical, current interaction) and a
// sigmoid head scoring each state-action pair.
struct DiscriminatorParams {
  seq::ModelSizes sizes;
  seq::EmbeddingBundle emb;
  num::GruCellParams gru;
  num::Param head_w;  // 1 x hidden
  num::Param head_b;  // 1 x 1

  void init(const seq::ModelSizes& s, Rng& rng);
  num::ParamStore params();
  void zero_padding_grads() { emb.zero_padding_grads(); }

  void save(const std::filesystem::path& file) const;
  static DiscriminatorParams load(const std::filesystem::path& file);
};

// D(s_t, a_t) for t = 1..T. Unlike the generator input, v_c at step t is
// the *current* interaction c_t, so the hidden state encodes the action.
std::vector<double> score_sequence(const DiscriminatorParams& d, const data::SerpRecord& r,
                                   std::span<const std::uint8_t> clicks);

struct DiscForward {
  int query = 0;
  std::vector<int> docs, verts, click_rows;
  std::vector<num::GruCache> caches;  // t = 0..T
  std::vector<num::Vec> head_in;      // t = 1..T
  std::vector<num::Vec> masks;
  std::vector<double> scores;         // sigmoid outputs, t = 1..T
};

DiscForward disc_forward(const DiscriminatorParams& d, const data::SerpRecord& r,
                         std::span<const std::uint8_t> clicks, double dropout_rate = 0.0,
                         Rng* dropout_rng = nullptr);

// dlogits[t-1] = d(loss)/d(head logit) at rank t.
void disc_backward(DiscriminatorParams& d, const DiscForward& f,
                   const std::vector<double>& dlogits);

struct LabeledSequence {
  const data::SerpRecord* record = nullptr;
  const std::vector<std::uint8_t>* clicks = nullptr;  // defaults to record->clicks
};

struct DiscLossStats {
  double loss = 0.0;        // negated ascent objective, for minimization logs
  double mean_real = 0.0;   // mean D on expert pairs
  double mean_fake = 0.0;   // mean D on generated pairs
};

// Discriminator objective (ascent): E_fake[log D] + E_real[log(1-D)],
// averaged uniformly over positions within each batch; D is trained toward
// 1 on generated pairs. Accumulates gradients of the negated objective.
DiscLossStats disc_grads(DiscriminatorParams& d, std::span<const LabeledSequence> real,
                         std::span<const LabeledSequence> fake, double dropout_rate = 0.0,
                         Rng* dropout_rng = nullptr);

}  // namespace clicksim::critic
