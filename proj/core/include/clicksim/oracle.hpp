#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clicksim/clicklog.hpp"
#include "clicksim/metrics.hpp"
#include "clicksim/rng.hpp"

namespace clicksim::oracle {

// ---------------------------------------------------------------------------
// Synthetic ground-truth click simulators

// A click model with known parameters, used to generate data whose
// achievable metric floors are computable exactly.
struct OracleSpec {
  enum class Family { pbm, sdbn };

  Family family = Family::pbm;
  int list_len = 5;
  int n_queries = 10;
  int n_docs = 30;
  int n_verts = 3;
  std::vector<double> exam;  // pbm: per-rank examination, size list_len
  Eigen::MatrixXd attr;      // (n_queries x n_docs) attractiveness
  Eigen::MatrixXd sat;       // sdbn: satisfaction after click

  // Uniform random attractiveness in [0.05, 0.95].
  static OracleSpec random_pbm(int list_len, int n_queries, int n_docs, int n_verts,
                               std::vector<double> exam, std::uint64_t seed);
  static OracleSpec random_sdbn(int list_len, int n_queries, int n_docs, int n_verts,
                                std::uint64_t seed);

  // P(click at 0-based rank i | clicks before i) given the presented docs.
  double conditional_click_prob(int query, std::span<const int> docs, int i,
                                const std::uint8_t* clicks_prefix) const;
};

// Tokens carried by generated datasets ("q<i>", "d<i>", "v<i>").
std::string query_token(int i);
std::string doc_token(int i);
std::string vert_token(int i);

// Samples sessions (uniform queries, docs without replacement, verticals
// uniform, clicks from the oracle's conditional model) and splits 8:1:1.
data::Dataset synth_generate(const OracleSpec& spec, int n_sessions, Rng& rng);

// Maps a generated dataset's dense ids back to oracle indices.
struct OracleIndex {
  std::vector<int> query_of_id;  // dense id -> oracle query (-1 for reserved)
  std::vector<int> doc_of_id;
};
OracleIndex index_dataset(const OracleSpec& spec, const data::Dataset& d);

// The oracle's own conditional probabilities on its data: the achievable
// PPL floor used in acceptance checks.
metrics::PplResult oracle_ppl(const OracleSpec& spec, const data::Dataset& d,
                              std::span<const data::SerpRecord> records);

// ---------------------------------------------------------------------------
// Enumerable tiny MDP

// A fully enumerable click MDP: decisions at steps t = 0..horizon-1 over
// binary actions; the document schedule is deterministic, so a state is
// identified by (t, action prefix). Policies and rewards are tabular over
// the 2^horizon - 1 states.
struct TinyMdp {
  int horizon = 2;               // number of decision steps (<= 4 audited)
  std::vector<int> doc_schedule; // doc shown at each step, vocabulary <= 3
  Eigen::MatrixXd expert_policy; // (n_states x 2), rows sum to 1
  Eigen::MatrixXd reward;        // (n_states x 2), |R| <= r_max
  double discount = 1.0;

  int n_states() const { return (1 << horizon) - 1; }
  // State of step t with action prefix encoded in the low t bits.
  int state_index(int t, unsigned prefix) const;
  double r_max() const;

  static TinyMdp random_instance(int horizon, Rng& rng);
};

// Uniformly random tabular policy with rows in the open simplex.
Eigen::MatrixXd random_policy(const TinyMdp& mdp, Rng& rng);

// Normalized discounted state-action visitation: rho(s,a) =
// norm * sum_t gamma^t P(s_t = s, a_t = a), masses summing to 1.
struct OccupancyMeasure {
  std::vector<double> mass;  // indexed state * 2 + action
  double at(int state, int action) const {
    return mass[static_cast<std::size_t>(state * 2 + action)];
  }
  double sum() const;
};

OccupancyMeasure enumerate_occupancy(const Eigen::MatrixXd& policy, const TinyMdp& mdp);

// Exact expected discounted utility by trajectory enumeration.
double utility(const Eigen::MatrixXd& policy, const TinyMdp& mdp);
double utility_gap(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_expert,
                   const TinyMdp& mdp);

// Monte-Carlo estimate of utility (for convergence checks against the
// enumerated value).
double mc_utility(const Eigen::MatrixXd& policy, const TinyMdp& mdp, int n_rollouts, Rng& rng);

// KL and Jensen-Shannon in nats; JS uses the 1/2-weighted mixture form,
// so 0 <= JS <= ln 2.
double kl_bernoulli_rows(const Eigen::Vector2d& p, const Eigen::Vector2d& q);
double js_occupancy(const OccupancyMeasure& a, const OccupancyMeasure& b);

struct BoundCheck {
  double gap = 0.0;
  double epsilon = 0.0;      // eps_bc (max state KL) or eps_ga (occupancy JS)
  double bound = 0.0;        // asserted bound
  double derived_bound = 0.0;// tighter constant from the proof chain
  bool holds = false;
};

// Utility gap vs 2T(T+1) R_max sqrt(eps_bc), eps_bc the max KL between
// expert and learned action rows over expert-visited states.
BoundCheck check_bc_bound(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_expert,
                          const TinyMdp& mdp);

// Utility gap vs 2 sqrt(2) R_max (T+1) sqrt(eps_ga), eps_ga the JS
// divergence between occupancy measures.
BoundCheck check_gail_bound(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& pi_expert,
                            const TinyMdp& mdp);

// ---------------------------------------------------------------------------
// Audit

struct AuditRow {
  int instance = 0;
  int horizon = 0;
  double r_max = 0.0;
  BoundCheck bc;
  BoundCheck gail;
};

struct AuditSummary {
  std::vector<AuditRow> rows;
  int violations = 0;
  double worst_bc_gap = 0.0;     // largest measured gap
  double worst_gail_bound = 0.0; // largest asserted GAIL bound
  std::string to_tsv() const;
};

// `n_instances` seeded random (pi, pi_E, R) tiny instances plus a
// deterministic-expert adversarial family that maximizes the BC-side gap.
AuditSummary run_audit(int horizon, int n_instances, std::uint64_t seed);

}  // namespace clicksim::oracle
