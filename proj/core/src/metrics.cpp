#include "clicksim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace clicksim::metrics {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void check_parallel(const ClickPredictions& p) {
  check_contract(p.probs.size() == p.clicks.size(),
                 "metrics: probs/clicks record counts differ");
  for (std::size_t i = 0; i < p.probs.size(); ++i)
    check_contract(p.probs[i].size() == p.clicks[i].size(),
                   "metrics: probs/clicks rank counts differ");
}

}  // namespace

double log_likelihood(const ClickPredictions& p) {
  check_parallel(p);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.probs.size(); ++i)
    for (std::size_t t = 0; t < p.probs[i].size(); ++t, ++n) {
      const double q = clamp_prob(p.probs[i][t]);
      sum += p.clicks[i][t] ? std::log(q) : std::log(1.0 - q);
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

PplResult perplexity(const ClickPredictions& p) {
  check_parallel(p);
  PplResult res;
  if (p.probs.empty()) return res;
  const std::size_t t_len = p.probs.front().size();
  std::vector<double> sum(t_len, 0.0);
  std::vector<std::size_t> count(t_len, 0);
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    check_contract(p.probs[i].size() == t_len, "perplexity: ragged record lengths");
    for (std::size_t t = 0; t < t_len; ++t) {
      const double q = clamp_prob(p.probs[i][t]);
      sum[t] += p.clicks[i][t] ? std::log2(q) : std::log2(1.0 - q);
      ++count[t];
    }
  }
  res.at_rank.resize(t_len);
  for (std::size_t t = 0; t < t_len; ++t)
    res.at_rank[t] = std::exp2(-sum[t] / static_cast<double>(count[t]));
  res.overall = std::accumulate(res.at_rank.begin(), res.at_rank.end(), 0.0) /
                static_cast<double>(t_len);
  return res;
}

namespace {

double dcg_of(const std::vector<int>& grades_in_order, int k) {
  double dcg = 0.0;
  const int n = std::min<int>(k, static_cast<int>(grades_in_order.size()));
  for (int i = 0; i < n; ++i)
    dcg += (std::exp2(grades_in_order[static_cast<std::size_t>(i)]) - 1.0) /
           std::log2(static_cast<double>(i) + 2.0);
  return dcg;
}

}  // namespace

double ndcg_at_k(const ScoredList& list, int k) {
  check_contract(list.scores.size() == list.grades.size(), "ndcg: ragged scored list");
  const std::size_t n = list.scores.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return list.scores[a] > list.scores[b];
  });
  std::vector<int> ranked(n);
  for (std::size_t i = 0; i < n; ++i) ranked[i] = list.grades[order[i]];

  std::vector<int> ideal = list.grades;
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());

  const double idcg = dcg_of(ideal, k);
  if (idcg <= 0.0) return -1.0;
  return dcg_of(ranked, k) / idcg;
}

NdcgReport mean_ndcg(std::span<const ScoredList> lists, const std::vector<int>& levels) {
  NdcgReport report;
  std::map<int, double> sums;
  for (int k : levels) sums[k] = 0.0;
  for (const ScoredList& list : lists) {
    bool skipped = false;
    std::map<int, double> vals;
    for (int k : levels) {
      const double v = ndcg_at_k(list, k);
      if (v < 0.0) {
        skipped = true;
        break;
      }
      vals[k] = v;
    }
    if (skipped) {
      ++report.skipped;
      continue;
    }
    ++report.evaluated;
    for (int k : levels) sums[k] += vals[k];
  }
  for (int k : levels)
    report.at[k] = report.evaluated ? sums[k] / static_cast<double>(report.evaluated) : 0.0;
  return report;
}

ClickSampler sampler_for(const policy::GeneratorParams& g) {
  return [&g](const data::SerpRecord& r, Rng& rng) {
    return policy::sample_sequence(g, r, rng).actions;
  };
}

ClickSampler sampler_for(const pgm::PgmModel& m) {
  return [&m](const data::SerpRecord& r, Rng& rng) {
    return pgm::sample(m, r.query, r.docs, r.verticals, rng);
  };
}

ClickPredictor predictor_for(const policy::GeneratorParams& g) {
  return [&g](const data::SerpRecord& r) { return policy::teacher_forced_probs(g, r); };
}

ClickPredictor predictor_for(const pgm::PgmModel& m) {
  return [&m](const data::SerpRecord& r) { return pgm::predict(m, r); };
}

ClickPredictions predictions_on(const ClickPredictor& predict,
                                std::span<const data::SerpRecord> records) {
  ClickPredictions p;
  p.probs.reserve(records.size());
  p.clicks.reserve(records.size());
  for (const data::SerpRecord& r : records) {
    p.probs.push_back(predict(r));
    p.clicks.push_back(r.clicks);
  }
  return p;
}

std::vector<data::SerpRecord> generate_synthetic(std::span<const data::SerpRecord> base,
                                                 const ClickSampler& sampler, int repeats,
                                                 data::PermuteMode mode, Rng& rng) {
  std::vector<data::SerpRecord> out;
  out.reserve(base.size() * static_cast<std::size_t>(repeats));
  for (const data::SerpRecord& r : base) {
    data::SerpRecord presented = data::permute_serp(r, mode, rng);
    for (int k = 0; k < repeats; ++k) {
      data::SerpRecord synth = presented;
      synth.session_id = r.session_id + "~" + std::to_string(k);
      synth.clicks = sampler(presented, rng);
      out.push_back(std::move(synth));
    }
  }
  return out;
}

SurrogateKind parse_surrogate_kind(const std::string& s) {
  if (s == "ubm") return SurrogateKind::ubm;
  if (s == "neural") return SurrogateKind::neural;
  throw DataError("unknown surrogate kind '" + s + "'");
}

std::string to_string(SurrogateKind k) {
  return k == SurrogateKind::ubm ? "ubm" : "neural";
}

namespace {

policy::GeneratorParams train_neural_surrogate(std::span<const data::SerpRecord> records,
                                               const SurrogateConfig& cfg) {
  seq::ModelSizes sizes = cfg.vocab_sizes;
  sizes.emb_q = sizes.emb_d = sizes.emb_v = sizes.emb_c = cfg.neural.emb;
  sizes.hidden = cfg.neural.hidden;

  Rng rng(cfg.neural.seed);
  policy::GeneratorParams g;
  g.init(sizes, rng);
  num::ParamStore store = g.params();
  num::AdamState adam;
  num::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.neural.lr;

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.neural.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.neural.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.neural.batch_size));
      store.zero_grads();
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i)
        policy::nll_loss_grads(g, records[order[i]], scale);
      g.zero_padding_grads();
      num::adam_step(adam, store, adam_cfg);
    }
  }
  return g;
}

double surrogate_ppl(std::span<const data::SerpRecord> train_on,
                     std::span<const data::SerpRecord> eval_on, const SurrogateConfig& cfg) {
  check_contract(!train_on.empty() && !eval_on.empty(),
                 "reverse_forward_ppl: empty dataset");
  if (cfg.kind == SurrogateKind::ubm) {
    pgm::PgmModel m = pgm::fit_records(pgm::ModelKind::ubm, train_on, cfg.list_len, cfg.ubm);
    return perplexity(predictions_on(predictor_for(m), eval_on)).overall;
  }
  policy::GeneratorParams g = train_neural_surrogate(train_on, cfg);
  return perplexity(predictions_on(predictor_for(g), eval_on)).overall;
}

}  // namespace

CoverageResult reverse_forward_ppl(std::span<const data::SerpRecord> synthetic,
                                   std::span<const data::SerpRecord> real_heldout,
                                   const SurrogateConfig& cfg) {
  CoverageResult res;
  res.reverse_ppl = surrogate_ppl(synthetic, real_heldout, cfg);
  res.forward_ppl = surrogate_ppl(real_heldout, synthetic, cfg);
  return res;
}

std::string MetricReport::to_text() const {
  std::ostringstream out;
  out.precision(10);
  out << "ll = " << ll << '\n';
  out << "ppl = " << ppl.overall << '\n';
  for (std::size_t t = 0; t < ppl.at_rank.size(); ++t)
    out << "ppl@" << (t + 1) << " = " << ppl.at_rank[t] << '\n';
  if (has_ndcg) {
    for (const auto& [k, v] : ndcg.at) out << "ndcg@" << k << " = " << v << '\n';
    out << "ndcg_evaluated = " << ndcg.evaluated << '\n';
    out << "ndcg_skipped = " << ndcg.skipped << '\n';
  }
  return out.str();
}

std::string MetricReport::to_tsv() const {
  std::ostringstream out;
  out.precision(10);
  out << "metric\tvalue\n";
  out << "ll\t" << ll << '\n';
  out << "ppl\t" << ppl.overall << '\n';
  for (std::size_t t = 0; t < ppl.at_rank.size(); ++t)
    out << "ppl@" << (t + 1) << '\t' << ppl.at_rank[t] << '\n';
  if (has_ndcg)
    for (const auto& [k, v] : ndcg.at) out << "ndcg@" << k << '\t' << v << '\n';
  return out.str();
}

}  // namespace clicksim::metrics
