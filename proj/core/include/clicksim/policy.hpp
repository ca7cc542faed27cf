#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "clicksim/clicklog.hpp"
#include "clicksim/numkernel.hpp"
#include "clicksim/seqcommon.hpp"

namespace clicksim::policy {

// The behavior policy: per-feature embeddings feeding a GRU state tracker
// with a 2-way softmax click head. The query embedding is concatenated at
// every step so it is not forgotten along the recurrence.
struct GeneratorParams {
  seq::ModelSizes sizes;
  seq::EmbeddingBundle emb;
  num::GruCellParams gru;
  num::Param head_w;  // 2 x hidden
  num::Param head_b;  // 2 x 1

  void init(const seq::ModelSizes& s, Rng& rng);
  num::ParamStore params();
  void zero_padding_grads() { emb.zero_padding_grads(); }

  void save(const std::filesystem::path& file) const;
  static GeneratorParams load(const std::filesystem::path& file);
};

// Recurrent state between ranks. The query rides along because its
// embedding is part of every step input; `prev_click_row` is the
// click-embedding row fed as the previous interaction at the next step
// (padding before the first action is committed).
struct PolicyState {
  num::Vec hidden;
  int query = 0;
  int prev_click_row = 0;
  int rank = 0;
};

// h_0 from the query with padded doc/vertical/interaction slots.
PolicyState init_state(const GeneratorParams& g, int query);

struct StepOutput {
  std::array<double, 2> probs;  // [p_skip, p_click]
  PolicyState next;
};

// One rank: consumes the presented document, returns the action
// distribution. The caller commits the chosen action afterwards.
StepOutput step(const GeneratorParams& g, const PolicyState& s, int doc, int vertical);
void commit_action(PolicyState& s, int action);

struct Trajectory {
  data::SerpRecord source;
  std::vector<std::uint8_t> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;  // filled by train::compute_returns
  std::vector<double> returns;
};

// Roll out the policy on its own sampled actions.
Trajectory sample_sequence(const GeneratorParams& g, const data::SerpRecord& r, Rng& rng);

// Click probability at each rank with the record's true clicks fed as
// history (the one-step prediction conditioning of the click metrics).
std::vector<double> teacher_forced_probs(const GeneratorParams& g, const data::SerpRecord& r);

// Deterministic score of a document as if presented at rank 1 with empty
// history; isolates attractiveness from position and history effects.
double relevance_score(const GeneratorParams& g, int query, int doc, int vertical);

// ---------------------------------------------------------------------------
// Training path: cached forward + backprop through time.

struct SeqForward {
  int query = 0;
  std::vector<int> docs, verts;
  std::vector<int> click_rows;                // row fed as v_c at step t = 1..T
  std::vector<num::GruCache> caches;          // t = 0..T
  std::vector<num::Vec> head_in;              // post-dropout h_t, t = 1..T
  std::vector<num::Vec> masks;                // per-step dropout masks (empty = off)
  std::vector<std::array<double, 2>> probs;   // t = 1..T
};

// `history` supplies the interaction fed at each step: entry t-1 is the
// click on rank t, used as the previous interaction at rank t+1.
SeqForward forward_sequence(const GeneratorParams& g, const data::SerpRecord& r,
                            std::span<const std::uint8_t> history,
                            double dropout_rate = 0.0, Rng* dropout_rng = nullptr);

// dlogits[t-1] is d(loss)/d(head logits) at rank t.
void backward_sequence(GeneratorParams& g, const SeqForward& f,
                       const std::vector<std::array<double, 2>>& dlogits);

// Teacher-forced mean binary cross-entropy over the T positions of one
// record; accumulates gradients scaled by `scale`. Returns the loss.
double nll_loss_grads(GeneratorParams& g, const data::SerpRecord& r, double scale,
                      double dropout_rate = 0.0, Rng* dropout_rng = nullptr);

}  // namespace clicksim::policy
