#include "clicksim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace clicksim::oracle {

// ---------------------------------------------------------------------------
// Oracle click simulators

OracleSpec OracleSpec::random_pbm(int list_len, int n_queries, int n_docs, int n_verts,
                                  std::vector<double> exam, std::uint64_t seed) {
  check_contract(static_cast<int>(exam.size()) == list_len,
                 "OracleSpec: exam size != list_len");
  check_contract(n_docs >= list_len, "OracleSpec: doc vocabulary smaller than list");
  OracleSpec spec;
  spec.family = Family::pbm;
  spec.list_len = list_len;
  spec.n_queries = n_queries;
  spec.n_docs = n_docs;
  spec.n_verts = n_verts;
  spec.exam = std::move(exam);
  Rng rng(seed);
  spec.attr.resize(n_queries, n_docs);
  for (int q = 0; q < n_queries; ++q)
    for (int d = 0; d < n_docs; ++d) spec.attr(q, d) = rng.uniform(0.05, 0.95);
  return spec;
}

OracleSpec OracleSpec::random_sdbn(int list_len, int n_queries, int n_docs, int n_verts,
                                   std::uint64_t seed) {
  check_contract(n_docs >= list_len, "OracleSpec: doc vocabulary smaller than list");
  OracleSpec spec;
  spec.family = Family::sdbn;
  spec.list_len = list_len;
  spec.n_queries = n_queries;
  spec.n_docs = n_docs;
  spec.n_verts = n_verts;
  Rng rng(seed);
  spec.attr.resize(n_queries, n_docs);
  spec.sat.resize(n_queries, n_docs);
  for (int q = 0; q < n_queries; ++q)
    for (int d = 0; d < n_docs; ++d) {
      spec.attr(q, d) = rng.uniform(0.05, 0.95);
      spec.sat(q, d) = rng.uniform(0.05, 0.95);
    }
  return spec;
}

double OracleSpec::conditional_click_prob(int query, std::span<const int> docs, int i,
                                          const std::uint8_t* clicks_prefix) const {
  const int doc = docs[static_cast<std::size_t>(i)];
  if (family == Family::pbm)
    return exam[static_cast<std::size_t>(i)] * attr(query, doc);

  // SDBN: examination is certain until the first click; after the last
  // observed click it depends on satisfaction, conditioned on the observed
  // non-clicks in between.
  int prev = 0;
  for (int j = i - 1; j >= 0; --j)
    if (clicks_prefix[j]) {
      prev = j + 1;
      break;
    }
  if (prev == 0) return attr(query, doc);
  const double cont = 1.0 - sat(query, docs[static_cast<std::size_t>(prev - 1)]);
  double prod = 1.0;
  for (int j = prev; j < i; ++j) prod *= 1.0 - attr(query, docs[static_cast<std::size_t>(j)]);
  const double denom = std::max(1.0 - cont + cont * prod, 1e-12);
  return (cont * prod / denom) * attr(query, doc);
}

std::string query_token(int i) { return "q" + std::to_string(i); }
std::string doc_token(int i) { return "d" + std::to_string(i); }
std::string vert_token(int i) { return "v" + std::to_string(i); }

data::Dataset synth_generate(const OracleSpec& spec, int n_sessions, Rng& rng) {
  check_contract(spec.n_docs >= spec.list_len, "synth_generate: vocabulary smaller than list");
  check_contract(n_sessions > 0, "synth_generate: need at least one session");

  struct RawSession {
    int query;
    std::vector<int> docs, verts;
    std::vector<std::uint8_t> clicks;
  };
  std::vector<RawSession> sessions;
  sessions.reserve(static_cast<std::size_t>(n_sessions));

  for (int s = 0; s < n_sessions; ++s) {
    RawSession raw;
    raw.query = rng.uniform_int(spec.n_queries);
    raw.docs = rng.sample_without_replacement(spec.n_docs, spec.list_len);
    raw.verts.resize(static_cast<std::size_t>(spec.list_len));
    raw.clicks.resize(static_cast<std::size_t>(spec.list_len));
    for (int i = 0; i < spec.list_len; ++i)
      raw.verts[static_cast<std::size_t>(i)] = rng.uniform_int(spec.n_verts);
    for (int i = 0; i < spec.list_len; ++i) {
      const double p = spec.conditional_click_prob(raw.query, raw.docs, i, raw.clicks.data());
      raw.clicks[static_cast<std::size_t>(i)] = rng.bernoulli(p) ? 1 : 0;
    }
    sessions.push_back(std::move(raw));
  }

  const std::size_t n = sessions.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_valid = n / 10;

  data::Dataset d;
  d.list_len = spec.list_len;
  d.clicks.add("0");
  d.clicks.add("1");
  for (std::size_t s = 0; s < n_train; ++s) {
    d.queries.add(query_token(sessions[s].query));
    for (int i = 0; i < spec.list_len; ++i) {
      d.docs.add(doc_token(sessions[s].docs[static_cast<std::size_t>(i)]));
      d.verticals.add(vert_token(sessions[s].verts[static_cast<std::size_t>(i)]));
    }
  }

  for (std::size_t s = 0; s < n; ++s) {
    data::SerpRecord r;
    r.session_id = "s" + std::to_string(s);
    r.query = d.queries.lookup(query_token(sessions[s].query));
    for (int i = 0; i < spec.list_len; ++i) {
      r.docs.push_back(d.docs.lookup(doc_token(sessions[s].docs[static_cast<std::size_t>(i)])));
      r.verticals.push_back(
          d.verticals.lookup(vert_token(sessions[s].verts[static_cast<std::size_t>(i)])));
    }
    r.clicks = sessions[s].clicks;
    if (s < n_train)
      d.train.push_back(std::move(r));
    else if (s < n_train + n_valid)
      d.valid.push_back(std::move(r));
    else
      d.test.push_back(std::move(r));
  }
  return d;
}

OracleIndex index_dataset(const OracleSpec& spec, const data::Dataset& d) {
  (void)spec;
  OracleIndex idx;
  idx.query_of_id.assign(static_cast<std::size_t>(d.queries.size()), -1);
  idx.doc_of_id.assign(static_cast<std::size_t>(d.docs.size()), -1);
  for (int id = data::Vocab::kFirstRegularId; id < d.queries.size(); ++id) {
    const std::string& tok = d.queries.token(id);
    idx.query_of_id[static_cast<std::size_t>(id)] = std::stoi(tok.substr(1));
  }
  for (int id = data::Vocab::kFirstRegularId; id < d.docs.size(); ++id) {
    const std::string& tok = d.docs.token(id);
    idx.doc_of_id[static_cast<std::size_t>(id)] = std::stoi(tok.substr(1));
  }
  return idx;
}

metrics::PplResult oracle_ppl(const OracleSpec& spec, const data::Dataset& d,
                              std::span<const data::SerpRecord> records) {
  OracleIndex idx = index_dataset(spec, d);
  metrics::ClickPredictions preds;
  preds.probs.reserve(records.size());
  preds.clicks.reserve(records.size());
  std::vector<int> oracle_docs(static_cast<std::size_t>(spec.list_len));

  for (const data::SerpRecord& r : records) {
    const int q = idx.query_of_id[static_cast<std::size_t>(r.query)];
    check_data(q >= 0, "oracle_ppl: record query is not an oracle token");
    for (int i = 0; i < r.list_len(); ++i) {
      const int doc = idx.doc_of_id[static_cast<std::size_t>(r.docs[static_cast<std::size_t>(i)])];
      check_data(doc >= 0, "oracle_ppl: record doc is not an oracle token");
      oracle_docs[static_cast<std::size_t>(i)] = doc;
    }
    std::vector<double> probs(static_cast<std::size_t>(r.list_len()));
    for (int i = 0; i < r.list_len(); ++i)
      probs[static_cast<std::size_t>(i)] =
          spec.conditional_click_prob(q, oracle_docs, i, r.clicks.data());
    preds.probs.push_back(std::move(probs));
    preds.clicks.push_back(r.clicks);
  }
  return metrics::perplexity(preds);
}

// ---------------------------------------------------------------------------
// TinyMdp

int TinyMdp::state_index(int t, unsigned prefix) const {
  check_contract(t >= 0 && t < horizon, "TinyMdp: step out of range");
  check_contract(prefix < (1u << t), "TinyMdp: prefix out of range");
  return (1 << t) - 1 + static_cast<int>(prefix);
}

double TinyMdp::r_max() const { return reward.cwiseAbs().maxCoeff(); }

TinyMdp TinyMdp::random_instance(int horizon, Rng& rng) {
  check_contract(horizon >= 1 && horizon <= 4, "TinyMdp: horizon must be in 1..4");
  TinyMdp mdp;
  mdp.horizon = horizon;
  mdp.doc_schedule.resize(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t)
    mdp.doc_schedule[static_cast<std::size_t>(t)] = rng.uniform_int(3);
  const int n = mdp.n_states();
  mdp.expert_policy = random_policy(mdp, rng);
  mdp.reward.resize(n, 2);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 2; ++a) mdp.reward(s, a) = rng.uniform(-1.0, 1.0);
  const double u = rng.uniform();
  mdp.discount = u < 0.25 ? 1.0 : u;
  return mdp;
}

Eigen::MatrixXd random_policy(const TinyMdp& mdp, Rng& rng) {
  Eigen::MatrixXd pi(mdp.n_states(), 2);
  for (int s = 0; s < mdp.n_states(); ++s) {
    const double p = rng.uniform(0.05, 0.95);
    pi(s, 0) = 1.0 - p;
    pi(s, 1) = p;
  }
  return pi;
}

double OccupancyMeasure::sum() const {
  double total = 0.0;
  for (double m : mass) total += m;
  return total;
}

namespace {

// State distribution at each step under a policy; probs[t][prefix].
std::vector<std::vector<double>> state_distributions(const Eigen::MatrixXd& policy,
                                                     const TinyMdp& mdp) {
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(mdp.horizon));
  probs[0] = {1.0};
  for (int t = 0; t + 1 < mdp.horizon; ++t) {
    const std::size_t width = 1u << (t + 1);
    probs[static_cast<std::size_t>(t + 1)].assign(width, 0.0);
    for (unsigned prefix = 0; prefix < (1u << t); ++prefix) {
      const double p = probs[static_cast<std::size_t>(t)][prefix];
      if (p == 0.0) continue;
      const int s = mdp.state_index(t, prefix);
      for (unsigned a = 0; a < 2; ++a)
        probs[static_cast<std::size_t>(t + 1)][(prefix << 1) | a] +=
            p * policy(s, static_cast<int>(a));
    }
  }
  return probs;
}

double discount_normalizer(double gamma, int horizon) {
  if (gamma == 1.0) return 1.0 / static_cast<double>(horizon);
  return (1.0 - gamma) / (1.0 - std::pow(gamma, horizon));
}

}  // namespace

OccupancyMeasure enumerate_occupancy(const Eigen::MatrixXd& policy, const TinyMdp& mdp) {
  check_contract(mdp.n_states() * 2 <= 2'000'000, "enumerate_occupancy: state space too large");
  OccupancyMeasure rho;
  rho.mass.assign(static_cast<std::size_t>(mdp.n_states()) * 2, 0.0);
  const auto probs = state_distributions(policy, mdp);
  const double norm = discount_normalizer(mdp.discount, mdp.horizon);
  double w = norm;
  for (int t = 0; t < mdp.horizon; ++t) {
    for (unsigned prefix = 0; prefix < (1u << t); ++prefix) {
      const double p = probs[static_cast<std::size_t>(t)][prefix];
      if (p == 0.0) continue;
      const int s = mdp.state_index(t, prefix);
      for (int a = 0; a < 2; ++a)
        rho.mass[static_cast<std::size_t>(s * 2 + a)] += w * p * policy(s, a);
    }
    w *= mdp.discount;
  }
  return rho;
}

double utility(const Eigen::MatrixXd& policy, const TinyMdp& mdp) {
  const auto probs = state_distributions(policy, mdp);
  double j = 0.0, w = 1.0;
  for (int t = 0; t < mdp.horizon; ++t) {
    for (unsigned prefix = 0; prefix < (1u << t); ++prefix) {
      const double p = probs[static_cast<std::size_t>(t)][prefix];
      if (p == 0.0) continue;
      const int s = mdp.state_index(t, prefix);
      for (int a = 0; a < 2; ++a) j += w * p * policy(s, a) * mdp.reward(s, a);
    }
    w *= mdp.discount;
  }
  return j;
}

double utility_gap(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_expert,
                   const TinyMdp& mdp) {
  return std::abs(utility(pi, mdp) - utility(pi_expert, mdp));
}

double mc_utility(const Eigen::MatrixXd& policy, const TinyMdp& mdp, int n_rollouts, Rng& rng) {
  double total = 0.0;
  for (int k = 0; k < n_rollouts; ++k) {
    unsigned prefix = 0;
    double ret = 0.0, w = 1.0;
    for (int t = 0; t < mdp.horizon; ++t) {
      const int s = mdp.state_index(t, prefix);
      const int a = rng.bernoulli(policy(s, 1)) ? 1 : 0;
      ret += w * mdp.reward(s, a);
      w *= mdp.discount;
      prefix = (prefix << 1) | static_cast<unsigned>(a);
    }
    total += ret;
  }
  return total / static_cast<double>(n_rollouts);
}

double kl_bernoulli_rows(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
  double kl = 0.0;
  for (int i = 0; i < 2; ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

double js_occupancy(const OccupancyMeasure& a, const OccupancyMeasure& b) {
  check_contract(a.mass.size() == b.mass.size(), "js_occupancy: size mismatch");
  double js = 0.0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) {
    const double m = 0.5 * (a.mass[i] + b.mass[i]);
    if (a.mass[i] > 0.0) js += 0.5 * a.mass[i] * std::log(a.mass[i] / m);
    if (b.mass[i] > 0.0) js += 0.5 * b.mass[i] * std::log(b.mass[i] / m);
  }
  return std::max(js, 0.0);
}

BoundCheck check_bc_bound(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_expert,
                          const TinyMdp& mdp) {
  BoundCheck out;
  out.gap = utility_gap(pi, pi_expert, mdp);

  const auto expert_probs = state_distributions(pi_expert, mdp);
  double eps = 0.0;
  for (int t = 0; t < mdp.horizon; ++t)
    for (unsigned prefix = 0; prefix < (1u << t); ++prefix) {
      if (expert_probs[static_cast<std::size_t>(t)][prefix] <= 1e-15) continue;
      const int s = mdp.state_index(t, prefix);
      eps = std::max(eps, kl_bernoulli_rows(Eigen::Vector2d(pi_expert(s, 0), pi_expert(s, 1)),
                                            Eigen::Vector2d(pi(s, 0), pi(s, 1))));
    }
  out.epsilon = eps;

  const double t_len = static_cast<double>(mdp.horizon);
  const double r = mdp.r_max();
  out.bound = 2.0 * t_len * (t_len + 1.0) * r * std::sqrt(eps);
  out.derived_bound = std::sqrt(2.0) * t_len * (t_len + 1.0) * r * std::sqrt(eps);
  out.holds = out.gap <= out.bound + 1e-9;
  return out;
}

BoundCheck check_gail_bound(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_expert,
                            const TinyMdp& mdp) {
  BoundCheck out;
  out.gap = utility_gap(pi, pi_expert, mdp);
  out.epsilon = js_occupancy(enumerate_occupancy(pi, mdp), enumerate_occupancy(pi_expert, mdp));

  const double t_len = static_cast<double>(mdp.horizon);
  const double r = mdp.r_max();
  const double geom = mdp.discount == 1.0
                          ? t_len
                          : (1.0 - std::pow(mdp.discount, mdp.horizon)) / (1.0 - mdp.discount);
  out.bound = 2.0 * std::sqrt(2.0) * r * (t_len + 1.0) * std::sqrt(out.epsilon);
  out.derived_bound = 2.0 * std::sqrt(2.0) * r * geom * std::sqrt(out.epsilon);
  out.holds = out.gap <= out.bound + 1e-9;
  return out;
}

// ---------------------------------------------------------------------------
// Audit

namespace {

// Deterministic-expert family that compounds one-step deviations: reward
// only along the all-clicks path, learner deviating with probability delta
// at every state. The measured gap grows superlinearly with the horizon.
AuditRow adversarial_instance(int horizon, double delta, int instance_id) {
  TinyMdp mdp;
  mdp.horizon = horizon;
  mdp.doc_schedule.assign(static_cast<std::size_t>(horizon), 0);
  mdp.discount = 1.0;
  const int n = mdp.n_states();
  mdp.expert_policy.resize(n, 2);
  mdp.reward = Eigen::MatrixXd::Zero(n, 2);
  for (int s = 0; s < n; ++s) {
    mdp.expert_policy(s, 0) = 0.0;
    mdp.expert_policy(s, 1) = 1.0;
  }
  for (int t = 0; t < horizon; ++t) {
    const unsigned all_ones = (1u << t) - 1;
    mdp.reward(mdp.state_index(t, all_ones), 1) = 1.0;
  }
  Eigen::MatrixXd pi(n, 2);
  for (int s = 0; s < n; ++s) {
    pi(s, 0) = delta;
    pi(s, 1) = 1.0 - delta;
  }

  AuditRow row;
  row.instance = instance_id;
  row.horizon = horizon;
  row.r_max = mdp.r_max();
  row.bc = check_bc_bound(pi, mdp.expert_policy, mdp);
  row.gail = check_gail_bound(pi, mdp.expert_policy, mdp);
  return row;
}

}  // namespace

AuditSummary run_audit(int horizon, int n_instances, std::uint64_t seed) {
  AuditSummary summary;
  Rng rng(seed);
  summary.rows.reserve(static_cast<std::size_t>(n_instances) + 4);

  for (int i = 0; i < n_instances; ++i) {
    TinyMdp mdp = TinyMdp::random_instance(horizon, rng);
    Eigen::MatrixXd pi = random_policy(mdp, rng);
    AuditRow row;
    row.instance = i;
    row.horizon = horizon;
    row.r_max = mdp.r_max();
    row.bc = check_bc_bound(pi, mdp.expert_policy, mdp);
    row.gail = check_gail_bound(pi, mdp.expert_policy, mdp);
    summary.rows.push_back(row);
  }
  // Grid-searched adversarial family (worst measured BC gap).
  int id = n_instances;
  for (double delta : {0.1, 0.2, 0.3, 0.5})
    summary.rows.push_back(adversarial_instance(horizon, delta, id++));

  for (const AuditRow& row : summary.rows) {
    if (!row.bc.holds || !row.gail.holds) ++summary.violations;
    summary.worst_bc_gap = std::max(summary.worst_bc_gap, row.bc.gap);
    summary.worst_gail_bound = std::max(summary.worst_gail_bound, row.gail.bound);
  }
  return summary;
}

std::string AuditSummary::to_tsv() const {
  std::ostringstream out;
  out.precision(12);
  out << "instance\thorizon\tgap\tr_max\teps_bc\tbc_bound\tbc_derived\tbc_margin\tbc_holds"
      << "\teps_ga\tga_bound\tga_derived\tga_margin\tga_holds\n";
  for (const AuditRow& r : rows)
    out << r.instance << '\t' << r.horizon << '\t' << r.bc.gap << '\t' << r.r_max << '\t'
        << r.bc.epsilon << '\t' << r.bc.bound << '\t' << r.bc.derived_bound << '\t'
        << (r.bc.bound - r.bc.gap) << '\t' << (r.bc.holds ? 1 : 0) << '\t' << r.gail.epsilon
        << '\t' << r.gail.bound << '\t' << r.gail.derived_bound << '\t'
        << (r.gail.bound - r.gail.gap) << '\t' << (r.gail.holds ? 1 : 0) << '\n';
  return out.str();
}

}  // namespace clicksim::oracle
