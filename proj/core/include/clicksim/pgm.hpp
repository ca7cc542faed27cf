#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "clicksim/clicklog.hpp"
#include "clicksim/rng.hpp"

namespace clicksim::pgm {

enum class ModelKind { pbm, ubm, dcm, sdbn };

ModelKind parse_model_kind(const std::string& s);
std::string to_string(ModelKind k);

// (query, doc) -> probability with a global-mean backoff for unseen pairs.
class AttrTable {
 public:
  void set(int query, int doc, double value);
  double get(int query, int doc) const;  // backoff to global mean
  bool has(int query, int doc) const;
  void finalize_mean();                  // unweighted mean over stored entries
  double global_mean() const { return mean_; }
  std::size_t size() const { return values_.size(); }

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [key, v] : values_) f(static_cast<int>(key >> 32),
                                           static_cast<int>(key & 0xffffffffull), v);
  }

 private:
  static std::uint64_t key(int query, int doc) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(query)) << 32) |
           static_cast<std::uint32_t>(doc);
  }
  std::unordered_map<std::uint64_t, double> values_;
  double mean_ = 0.5;
};

struct PbmParams {
  std::vector<double> exam;  // by rank, 0-based
  AttrTable attr;
};

// exam indexed by (rank r, previous-click rank r'); r' == 0 means no prior
// click. Stored as exam[r-1][r - r'] with distance r - r' in 1..r.
struct UbmParams {
  std::vector<std::vector<double>> exam;
  AttrTable attr;
  double exam_at(int rank, int prev_click_rank) const;  // 1-based rank, r' in 0..rank-1
};

struct DcmParams {
  std::vector<double> cont;  // continuation prob after a click at rank r (0-based)
  AttrTable attr;
};

struct SdbnParams {
  AttrTable attr;
  AttrTable sat;  // satisfaction prob after a click on (query, doc)
};

struct FitConfig {
  int max_iters = 50;
  double tol = 1e-4;        // max parameter change
  double clamp_lo = 1e-6;   // probabilities clamped to [clamp_lo, 1-clamp_lo]
};

struct FitReport {
  std::vector<double> train_ll;  // per EM iteration (empty for counting fits)
  int iterations = 0;
  bool converged = false;
};

struct PgmModel {
  ModelKind kind = ModelKind::pbm;
  int list_len = 10;
  std::variant<PbmParams, UbmParams, DcmParams, SdbnParams> params;
  FitReport report;
};

// PBM/UBM by expectation-maximization until the max parameter change drops
// below cfg.tol or cfg.max_iters is reached; DCM/SDBN by closed-form
// counting with add-one smoothing. All probabilities clamped.
PgmModel fit(ModelKind kind, const data::Dataset& d, const FitConfig& cfg = {});
PgmModel fit_records(ModelKind kind, std::span<const data::SerpRecord> records, int list_len,
                     const FitConfig& cfg = {});

// Conditional click probability at each rank given the record's observed
// click prefix (PBM is unconditional by construction).
std::vector<double> predict(const PgmModel& m, const data::SerpRecord& r);

// Sequential Bernoulli sampling through the same conditionals.
std::vector<std::uint8_t> sample(const PgmModel& m, int query, const std::vector<int>& docs,
                                 const std::vector<int>& verticals, Rng& rng);

// Text round-trip: one parameter per line, `name<TAB>index...<TAB>value`.
void save(const PgmModel& m, std::ostream& out);
void save(const PgmModel& m, const std::filesystem::path& file);
PgmModel load(std::istream& in);
PgmModel load(const std::filesystem::path& file);

}  // namespace clicksim::pgm
