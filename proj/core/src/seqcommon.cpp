#include "clicksim/seqcommon.hpp"

namespace clicksim::seq {

void EmbeddingBundle::init(const ModelSizes& sizes, Rng& rng) {
  check_contract(sizes.n_query >= 2 && sizes.n_doc >= 2 && sizes.n_vert >= 2 &&
                     sizes.n_click >= 4,
                 "EmbeddingBundle: vocab sizes must include reserved ids");
  query.init_uniform(sizes.n_query, sizes.emb_q, rng);
  doc.init_uniform(sizes.n_doc, sizes.emb_d, rng);
  vert.init_uniform(sizes.n_vert, sizes.emb_v, rng);
  click.init_uniform(sizes.n_click, sizes.emb_c, rng);
  pin_padding_rows();
}

void EmbeddingBundle::register_into(num::ParamStore& store, const std::string& prefix) {
  store.add(prefix + ".query", query);
  store.add(prefix + ".doc", doc);
  store.add(prefix + ".vert", vert);
  store.add(prefix + ".click", click);
}

void EmbeddingBundle::zero_padding_grads() {
  query.grad.row(0).setZero();
  doc.grad.row(0).setZero();
  vert.grad.row(0).setZero();
  click.grad.row(0).setZero();
}

void EmbeddingBundle::pin_padding_rows() {
  query.value.row(0).setZero();
  doc.value.row(0).setZero();
  vert.value.row(0).setZero();
  click.value.row(0).setZero();
}

num::Vec assemble_input(const EmbeddingBundle& emb, const ModelSizes& sizes, int query,
                        int doc, int vert, int click_id) {
  check_contract(query >= 0 && query < sizes.n_query, "assemble_input: query id out of range");
  check_contract(doc >= 0 && doc < sizes.n_doc, "assemble_input: doc id out of range");
  check_contract(vert >= 0 && vert < sizes.n_vert, "assemble_input: vertical id out of range");
  check_contract(click_id >= 0 && click_id < sizes.n_click,
                 "assemble_input: click id out of range");
  num::Vec x(sizes.input_size());
  x.segment(0, sizes.emb_q) = emb.query.value.row(query).transpose();
  x.segment(sizes.emb_q, sizes.emb_d) = emb.doc.value.row(doc).transpose();
  x.segment(sizes.emb_q + sizes.emb_d, sizes.emb_v) = emb.vert.value.row(vert).transpose();
  x.segment(sizes.emb_q + sizes.emb_d + sizes.emb_v, sizes.emb_c) =
      emb.click.value.row(click_id).transpose();
  return x;
}

void scatter_input_grad(EmbeddingBundle& emb, const ModelSizes& sizes, int query, int doc,
                        int vert, int click_id, const num::Vec& dx) {
  emb.query.grad.row(query) += dx.segment(0, sizes.emb_q).transpose();
  emb.doc.grad.row(doc) += dx.segment(sizes.emb_q, sizes.emb_d).transpose();
  emb.vert.grad.row(vert) +=
      dx.segment(sizes.emb_q + sizes.emb_d, sizes.emb_v).transpose();
  emb.click.grad.row(click_id) +=
      dx.segment(sizes.emb_q + sizes.emb_d + sizes.emb_v, sizes.emb_c).transpose();
}

}  // namespace clicksim::seq
