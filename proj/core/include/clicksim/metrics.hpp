#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clicksim/clicklog.hpp"
#include "clicksim/pgm.hpp"
#include "clicksim/policy.hpp"
#include "clicksim/rng.hpp"

namespace clicksim::metrics {

// Probabilities are clamped to [kProbClamp, 1-kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-6;

struct ClickPredictions {
  std::vector<std::vector<double>> probs;          // per record, per rank
  std::vector<std::vector<std::uint8_t>> clicks;   // parallel
};

// Mean over all positions of c*ln(p) + (1-c)*ln(1-p), natural log.
double log_likelihood(const ClickPredictions& p);

struct PplResult {
  std::vector<double> at_rank;  // PPL@t, base-2 exponent
  double overall = 0.0;         // arithmetic mean over ranks
};

// PPL@t = 2^(-(1/N) sum_i [c log2 p + (1-c) log2(1-p)]).
PplResult perplexity(const ClickPredictions& p);

// ---------------------------------------------------------------------------
// NDCG

struct ScoredList {
  std::vector<double> scores;  // model scores, original presentation order
  std::vector<int> grades;     // relevance grades, parallel
};

// Gain 2^grade - 1, discount 1/log2(rank+1), normalized by the ideal
// ordering; returns -1 when the ideal DCG is zero (query skipped).
double ndcg_at_k(const ScoredList& list, int k);

struct NdcgReport {
  std::map<int, double> at;  // truncation level -> mean NDCG
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // all-zero ideal DCG
};

NdcgReport mean_ndcg(std::span<const ScoredList> lists, const std::vector<int>& levels);

// ---------------------------------------------------------------------------
// Model prediction/sampling adapters

using ClickSampler =
    std::function<std::vector<std::uint8_t>(const data::SerpRecord&, Rng&)>;
using ClickPredictor = std::function<std::vector<double>(const data::SerpRecord&)>;

ClickSampler sampler_for(const policy::GeneratorParams& g);
ClickSampler sampler_for(const pgm::PgmModel& m);
ClickPredictor predictor_for(const policy::GeneratorParams& g);
ClickPredictor predictor_for(const pgm::PgmModel& m);

ClickPredictions predictions_on(const ClickPredictor& predict,
                                std::span<const data::SerpRecord> records);

// ---------------------------------------------------------------------------
// Synthetic datasets and distributional coverage

// For each base record (optionally permuted per repeat), draw clicks
// `repeats` times; emits records in presentation order with session ids
// suffixed by the repeat index.
std::vector<data::SerpRecord> generate_synthetic(std::span<const data::SerpRecord> base,
                                                 const ClickSampler& sampler, int repeats,
                                                 data::PermuteMode mode, Rng& rng);

enum class SurrogateKind { ubm, neural };

SurrogateKind parse_surrogate_kind(const std::string& s);
std::string to_string(SurrogateKind k);

// The surrogate training budget is fixed by this config and must be held
// identical across compared models.
struct SurrogateConfig {
  SurrogateKind kind = SurrogateKind::ubm;
  pgm::FitConfig ubm;
  struct Neural {
    int emb = 16;
    int hidden = 16;
    int epochs = 3;
    int batch_size = 128;
    double lr = 1e-3;
    std::uint64_t seed = 7;
  } neural;
  seq::ModelSizes vocab_sizes;  // n_query/n_doc/n_vert for neural surrogates
  int list_len = 10;
};

struct CoverageResult {
  double reverse_ppl = 0.0;  // surrogate trained on synthetic, evaluated on real
  double forward_ppl = 0.0;  // surrogate trained on real, evaluated on synthetic
};

// Trains a fresh surrogate per direction. reverse(A,B) and forward(B,A)
// compute the same quantity when surrogate configs match.
CoverageResult reverse_forward_ppl(std::span<const data::SerpRecord> synthetic,
                                   std::span<const data::SerpRecord> real_heldout,
                                   const SurrogateConfig& cfg);

// ---------------------------------------------------------------------------
// Report rendering

struct MetricReport {
  double ll = 0.0;
  PplResult ppl;
  NdcgReport ndcg;
  bool has_ndcg = false;
  std::string to_text() const;  // key = value lines
  std::string to_tsv() const;
};

}  // namespace clicksim::metrics
