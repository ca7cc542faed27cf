#include "clicksim/policy.hpp"

#include <cmath>

#include "clicksim/checkpoint.hpp"

namespace clicksim::policy {

using num::Vec;

void GeneratorParams::init(const seq::ModelSizes& s, Rng& rng) {
  sizes = s;
  emb.init(s, rng);
  gru.init(s.input_size(), s.hidden, rng);
  head_w.init_uniform(2, s.hidden, rng);
  head_b.resize(2, 1);
}

num::ParamStore GeneratorParams::params() {
  num::ParamStore store;
  emb.register_into(store, "emb");
  gru.register_into(store, "gru");
  store.add("head.w", head_w);
  store.add("head.b", head_b);
  return store;
}

namespace {

std::array<double, 2> head_probs(const GeneratorParams& g, const Vec& h) {
  Vec logits = g.head_w.value * h + g.head_b.value.col(0);
  Vec p = num::softmax(logits);
  return {p[0], p[1]};
}

}  // namespace

PolicyState init_state(const GeneratorParams& g, int query) {
  check_contract(query >= 0 && query < g.sizes.n_query, "init_state: query id out of range");
  PolicyState s;
  s.query = query;
  s.prev_click_row = 0;
  s.rank = 0;
  Vec x0 = seq::assemble_input(g.emb, g.sizes, query, 0, 0, 0);
  s.hidden = num::gru_forward(g.gru, x0, Vec::Zero(g.sizes.hidden));
  return s;
}

StepOutput step(const GeneratorParams& g, const PolicyState& s, int doc, int vertical) {
  StepOutput out;
  out.next.query = s.query;
  out.next.rank = s.rank + 1;
  out.next.prev_click_row = s.prev_click_row;
  Vec x = seq::assemble_input(g.emb, g.sizes, s.query, doc, vertical, s.prev_click_row);
  out.next.hidden = num::gru_forward(g.gru, x, s.hidden);
  out.probs = head_probs(g, out.next.hidden);
  return out;
}

void commit_action(PolicyState& s, int action) {
  check_contract(action == 0 || action == 1, "commit_action: binary actions only");
  s.prev_click_row = seq::click_row(action);
}

Trajectory sample_sequence(const GeneratorParams& g, const data::SerpRecord& r, Rng& rng) {
  Trajectory traj;
  traj.source = r;
  const int t_len = r.list_len();
  traj.actions.resize(static_cast<std::size_t>(t_len));
  traj.log_probs.resize(static_cast<std::size_t>(t_len));
  traj.rewards.assign(static_cast<std::size_t>(t_len), 0.0);
  traj.returns.assign(static_cast<std::size_t>(t_len), 0.0);

  PolicyState s = init_state(g, r.query);
  for (int t = 0; t < t_len; ++t) {
    StepOutput o = step(g, s, r.docs[static_cast<std::size_t>(t)],
                        r.verticals[static_cast<std::size_t>(t)]);
    const int action = rng.bernoulli(o.probs[1]) ? 1 : 0;
    traj.actions[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(action);
    traj.log_probs[static_cast<std::size_t>(t)] =
        std::log(o.probs[static_cast<std::size_t>(action)]);
    s = std::move(o.next);
    commit_action(s, action);
  }
  return traj;
}

std::vector<double> teacher_forced_probs(const GeneratorParams& g, const data::SerpRecord& r) {
  std::vector<double> out(static_cast<std::size_t>(r.list_len()));
  PolicyState s = init_state(g, r.query);
  for (int t = 0; t < r.list_len(); ++t) {
    StepOutput o = step(g, s, r.docs[static_cast<std::size_t>(t)],
                        r.verticals[static_cast<std::size_t>(t)]);
    out[static_cast<std::size_t>(t)] = o.probs[1];
    s = std::move(o.next);
    commit_action(s, r.clicks[static_cast<std::size_t>(t)]);
  }
  return out;
}

double relevance_score(const GeneratorParams& g, int query, int doc, int vertical) {
  PolicyState s = init_state(g, query);
  return step(g, s, doc, vertical).probs[1];
}

SeqForward forward_sequence(const GeneratorParams& g, const data::SerpRecord& r,
                            std::span<const std::uint8_t> history, double dropout_rate,
                            Rng* dropout_rng) {
  const int t_len = r.list_len();
  check_contract(static_cast<int>(history.size()) == t_len,
                 "forward_sequence: history length != list length");
  check_contract(dropout_rate == 0.0 || dropout_rng != nullptr,
                 "forward_sequence: dropout requires an rng");

  SeqForward f;
  f.query = r.query;
  f.docs = r.docs;
  f.verts = r.verticals;
  f.click_rows.resize(static_cast<std::size_t>(t_len));
  f.caches.resize(static_cast<std::size_t>(t_len) + 1);
  f.head_in.resize(static_cast<std::size_t>(t_len));
  f.probs.resize(static_cast<std::size_t>(t_len));
  if (dropout_rate > 0.0) f.masks.resize(static_cast<std::size_t>(t_len));

  Vec x0 = seq::assemble_input(g.emb, g.sizes, r.query, 0, 0, 0);
  Vec h = num::gru_forward(g.gru, x0, Vec::Zero(g.sizes.hidden), &f.caches[0]);

  for (int t = 1; t <= t_len; ++t) {
    const std::size_t i = static_cast<std::size_t>(t - 1);
    const int click_id = t == 1 ? 0 : seq::click_row(history[i - 1]);
    f.click_rows[i] = click_id;
    Vec x = seq::assemble_input(g.emb, g.sizes, r.query, f.docs[i], f.verts[i], click_id);
    h = num::gru_forward(g.gru, x, h, &f.caches[static_cast<std::size_t>(t)]);

    Vec head_in = h;
    if (dropout_rate > 0.0) {
      f.masks[i] = num::dropout_mask(g.sizes.hidden, dropout_rate, *dropout_rng);
      head_in = head_in.cwiseProduct(f.masks[i]);
    }
    f.head_in[i] = head_in;
    f.probs[i] = head_probs(g, head_in);
  }
  return f;
}

void backward_sequence(GeneratorParams& g, const SeqForward& f,
                       const std::vector<std::array<double, 2>>& dlogits) {
  const int t_len = static_cast<int>(f.probs.size());
  check_contract(static_cast<int>(dlogits.size()) == t_len,
                 "backward_sequence: dlogits length mismatch");

  Vec dh = Vec::Zero(g.sizes.hidden);
  for (int t = t_len; t >= 0; --t) {
    if (t >= 1) {
      const std::size_t i = static_cast<std::size_t>(t - 1);
      Vec dl(2);
      dl << dlogits[i][0], dlogits[i][1];
      g.head_w.grad += dl * f.head_in[i].transpose();
      g.head_b.grad.col(0) += dl;
      Vec dhead_in = g.head_w.value.transpose() * dl;
      if (!f.masks.empty()) dhead_in = dhead_in.cwiseProduct(f.masks[i]);
      dh += dhead_in;
    }
    num::GruInputGrads ig = num::gru_backward(g.gru, f.caches[static_cast<std::size_t>(t)], dh);
    if (t == 0) {
      seq::scatter_input_grad(g.emb, g.sizes, f.query, 0, 0, 0, ig.dx);
    } else {
      const std::size_t i = static_cast<std::size_t>(t - 1);
      seq::scatter_input_grad(g.emb, g.sizes, f.query, f.docs[i], f.verts[i], f.click_rows[i],
                              ig.dx);
    }
    dh = std::move(ig.dh_prev);
  }
}

double nll_loss_grads(GeneratorParams& g, const data::SerpRecord& r, double scale,
                      double dropout_rate, Rng* dropout_rng) {
  SeqForward f = forward_sequence(g, r, r.clicks, dropout_rate, dropout_rng);
  const int t_len = r.list_len();
  const double pos_scale = scale / static_cast<double>(t_len);

  double loss = 0.0;
  std::vector<std::array<double, 2>> dlogits(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    const std::size_t i = static_cast<std::size_t>(t);
    const int c = r.clicks[i];
    loss -= std::log(std::max(f.probs[i][static_cast<std::size_t>(c)], 1e-300));
    // d(-log softmax[c])/dlogits = p - onehot(c)
    dlogits[i][0] = (f.probs[i][0] - (c == 0 ? 1.0 : 0.0)) * pos_scale;
    dlogits[i][1] = (f.probs[i][1] - (c == 1 ? 1.0 : 0.0)) * pos_scale;
  }
  backward_sequence(g, f, dlogits);
  return loss / static_cast<double>(t_len);
}

void GeneratorParams::save(const std::filesystem::path& file) const {
  auto& self = const_cast<GeneratorParams&>(*this);
  num::ParamStore store = self.params();
  std::map<std::string, std::string> meta = {
      {"n_query", std::to_string(sizes.n_query)}, {"n_doc", std::to_string(sizes.n_doc)},
      {"n_vert", std::to_string(sizes.n_vert)},   {"n_click", std::to_string(sizes.n_click)},
      {"emb_q", std::to_string(sizes.emb_q)},     {"emb_d", std::to_string(sizes.emb_d)},
      {"emb_v", std::to_string(sizes.emb_v)},     {"emb_c", std::to_string(sizes.emb_c)},
      {"hidden", std::to_string(sizes.hidden)},
  };
  ckpt::write_model(file, "generator", store, meta);
}

GeneratorParams load_from(const ckpt::LoadedModel& m) {
  seq::ModelSizes s;
  s.n_query = m.meta_int("n_query");
  s.n_doc = m.meta_int("n_doc");
  s.n_vert = m.meta_int("n_vert");
  s.n_click = m.meta_int("n_click");
  s.emb_q = m.meta_int("emb_q");
  s.emb_d = m.meta_int("emb_d");
  s.emb_v = m.meta_int("emb_v");
  s.emb_c = m.meta_int("emb_c");
  s.hidden = m.meta_int("hidden");

  GeneratorParams g;
  Rng dummy(0);
  g.init(s, dummy);
  num::ParamStore store = g.params();
  ckpt::assign_into(m, store);
  g.emb.pin_padding_rows();
  return g;
}

GeneratorParams GeneratorParams::load(const std::filesystem::path& file) {
  ckpt::LoadedModel m = ckpt::read_model(file);
  check_data(m.tag == "generator", "checkpoint " + file.string() + " is not a generator");
  return load_from(m);
}

}  // namespace clicksim::policy
