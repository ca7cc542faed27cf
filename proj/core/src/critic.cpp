#include "clicksim/critic.hpp"

#include <algorithm>
#include <cmath>

#include "clicksim/checkpoint.hpp"

namespace clicksim::critic {

using num::Vec;

void DiscriminatorParams::init(const seq::ModelSizes& s, Rng& rng) {
  sizes = s;
  emb.init(s, rng);
  gru.init(s.input_size(), s.hidden, rng);
  head_w.init_uniform(1, s.hidden, rng);
  head_b.resize(1, 1);
}

num::ParamStore DiscriminatorParams::params() {
  num::ParamStore store;
  emb.register_into(store, "emb");
  gru.register_into(store, "gru");
  store.add("head.w", head_w);
  store.add("head.b", head_b);
  return store;
}

DiscForward disc_forward(const DiscriminatorParams& d, const data::SerpRecord& r,
                         std::span<const std::uint8_t> clicks, double dropout_rate,
                         Rng* dropout_rng) {
  const int t_len = r.list_len();
  check_contract(static_cast<int>(clicks.size()) == t_len,
                 "disc_forward: clicks length != list length");
  check_contract(dropout_rate == 0.0 || dropout_rng != nullptr,
                 "disc_forward: dropout requires an rng");

  DiscForward f;
  f.query = r.query;
  f.docs = r.docs;
  f.verts = r.verticals;
  f.click_rows.resize(static_cast<std::size_t>(t_len));
  f.caches.resize(static_cast<std::size_t>(t_len) + 1);
  f.head_in.resize(static_cast<std::size_t>(t_len));
  f.scores.resize(static_cast<std::size_t>(t_len));
  if (dropout_rate > 0.0) f.masks.resize(static_cast<std::size_t>(t_len));

  Vec x0 = seq::assemble_input(d.emb, d.sizes, r.query, 0, 0, 0);
  Vec h = num::gru_forward(d.gru, x0, Vec::Zero(d.sizes.hidden), &f.caches[0]);

  for (int t = 1; t <= t_len; ++t) {
    const std::size_t i = static_cast<std::size_t>(t - 1);
    f.click_rows[i] = seq::click_row(clicks[i]);
    Vec x = seq::assemble_input(d.emb, d.sizes, r.query, f.docs[i], f.verts[i], f.click_rows[i]);
    h = num::gru_forward(d.gru, x, h, &f.caches[static_cast<std::size_t>(t)]);

    Vec head_in = h;
    if (dropout_rate > 0.0) {
      f.masks[i] = num::dropout_mask(d.sizes.hidden, dropout_rate, *dropout_rng);
      head_in = head_in.cwiseProduct(f.masks[i]);
    }
    f.head_in[i] = head_in;
    const double logit = (d.head_w.value * head_in)(0) + d.head_b.value(0, 0);
    f.scores[i] = num::sigmoid(logit);
  }
  return f;
}

std::vector<double> score_sequence(const DiscriminatorParams& d, const data::SerpRecord& r,
                                   std::span<const std::uint8_t> clicks) {
  return disc_forward(d, r, clicks).scores;
}

void disc_backward(DiscriminatorParams& d, const DiscForward& f,
                   const std::vector<double>& dlogits) {
  const int t_len = static_cast<int>(f.scores.size());
  check_contract(static_cast<int>(dlogits.size()) == t_len,
                 "disc_backward: dlogits length mismatch");

  Vec dh = Vec::Zero(d.sizes.hidden);
  for (int t = t_len; t >= 0; --t) {
    if (t >= 1) {
      const std::size_t i = static_cast<std::size_t>(t - 1);
      d.head_w.grad += dlogits[i] * f.head_in[i].transpose();
      d.head_b.grad(0, 0) += dlogits[i];
      Vec dhead_in = dlogits[i] * d.head_w.value.row(0).transpose();
      if (!f.masks.empty()) dhead_in = dhead_in.cwiseProduct(f.masks[i]);
      dh += dhead_in;
    }
    num::GruInputGrads ig = num::gru_backward(d.gru, f.caches[static_cast<std::size_t>(t)], dh);
    if (t == 0) {
      seq::scatter_input_grad(d.emb, d.sizes, f.query, 0, 0, 0, ig.dx);
    } else {
      const std::size_t i = static_cast<std::size_t>(t - 1);
      seq::scatter_input_grad(d.emb, d.sizes, f.query, f.docs[i], f.verts[i], f.click_rows[i],
                              ig.dx);
    }
    dh = std::move(ig.dh_prev);
  }
}

DiscLossStats disc_grads(DiscriminatorParams& d, std::span<const LabeledSequence> real,
                         std::span<const LabeledSequence> fake, double dropout_rate,
                         Rng* dropout_rng) {
  check_contract(!real.empty() && !fake.empty(), "disc_grads: empty batch");

  DiscLossStats stats;
  double positions_real = 0.0, positions_fake = 0.0;
  for (const auto& s : real) positions_real += s.record->list_len();
  for (const auto& s : fake) positions_fake += s.record->list_len();

  // Ascent objective J = mean_fake[log D] + mean_real[log(1-D)].
  // For the minimized loss -J: dJ/dlogit is (1-D) on fake, -D on real.
  auto run = [&](const LabeledSequence& s, bool is_fake) {
    const auto& clicks = s.clicks ? *s.clicks : s.record->clicks;
    DiscForward f = disc_forward(d, *s.record, clicks, dropout_rate, dropout_rng);
    const double denom = is_fake ? positions_fake : positions_real;
    std::vector<double> dlogits(f.scores.size());
    for (std::size_t i = 0; i < f.scores.size(); ++i) {
      const double score = std::clamp(f.scores[i], 1e-12, 1.0 - 1e-12);
      if (is_fake) {
        stats.loss -= std::log(score) / denom;
        stats.mean_fake += score / denom;
        dlogits[i] = -(1.0 - score) / denom;
      } else {
        stats.loss -= std::log(1.0 - score) / denom;
        stats.mean_real += score / denom;
        dlogits[i] = score / denom;
      }
    }
    disc_backward(d, f, dlogits);
  };

  for (const auto& s : real) run(s, false);
  for (const auto& s : fake) run(s, true);
  return stats;
}

void DiscriminatorParams::save(const std::filesystem::path& file) const {
  auto& self = const_cast<DiscriminatorParams&>(*this);
  num::ParamStore store = self.params();
  std::map<std::string, std::string> meta = {
      {"n_query", std::to_string(sizes.n_query)}, {"n_doc", std::to_string(sizes.n_doc)},
      {"n_vert", std::to_string(sizes.n_vert)},   {"n_click", std::to_string(sizes.n_click)},
      {"emb_q", std::to_string(sizes.emb_q)},     {"emb_d", std::to_string(sizes.emb_d)},
      {"emb_v", std::to_string(sizes.emb_v)},     {"emb_c", std::to_string(sizes.emb_c)},
      {"hidden", std::to_string(sizes.hidden)},
  };
  ckpt::write_model(file, "discriminator", store, meta);
}

DiscriminatorParams DiscriminatorParams::load(const std::filesystem::path& file) {
  ckpt::LoadedModel m = ckpt::read_model(file);
  check_data(m.tag == "discriminator",
             "checkpoint " + file.string() + " is not a discriminator");
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

  DiscriminatorParams d;
  Rng dummy(0);
  d.init(s, dummy);
  num::ParamStore store = d.params();
  ckpt::assign_into(m, store);
  d.emb.pin_padding_rows();
  return d;
}

}  // namespace clicksim::critic
