#pragma once

#include <string>

#include "clicksim/numkernel.hpp"
#include "clicksim/rng.hpp"

namespace clicksim::seq {

// Vocabulary and layer sizes shared by the generator and discriminator.
struct ModelSizes {
  int n_query = 0;
  int n_doc = 0;
  int n_vert = 0;
  int n_click = 4;  // pad, oov, "0", "1"
  int emb_q = 64;
  int emb_d = 64;
  int emb_v = 64;
  int emb_c = 64;
  int hidden = 64;

  int input_size() const { return emb_q + emb_d + emb_v + emb_c; }
};

// Dense id of a click value in the click vocabulary (ids 0/1 are reserved).
inline int click_row(int click_value) { return 2 + click_value; }

// Query/doc/vertical/click embedding tables. Row 0 of every table is the
// padding slot, pinned to the zero vector and excluded from updates.
struct EmbeddingBundle {
  num::Param query, doc, vert, click;

  void init(const ModelSizes& sizes, Rng& rng);
  void register_into(num::ParamStore& store, const std::string& prefix);

  // Drop any gradient that reached the pinned rows (padding inputs do
  // contribute cotangents; they must not turn into updates).
  void zero_padding_grads();
  // Re-assert the pin on values (after loading external tensors).
  void pin_padding_rows();
};

// x_t = v_q (+) v_d (+) v_v (+) v_c by table-row lookup.
num::Vec assemble_input(const EmbeddingBundle& emb, const ModelSizes& sizes, int query,
                        int doc, int vert, int click_id);

// Scatter of d(loss)/d(x_t) back into the embedding rows used at this step.
void scatter_input_grad(EmbeddingBundle& emb, const ModelSizes& sizes, int query, int doc,
                        int vert, int click_id, const num::Vec& dx);

}  // namespace clicksim::seq
