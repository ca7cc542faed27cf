#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "clicksim/errors.hpp"
#include "clicksim/rng.hpp"

namespace clicksim::data {

// One query impression: a ranked list of documents with vertical types and
// the observed click sequence.
struct SerpRecord {
  std::string session_id;
  int query = 0;                    // dense id
  std::vector<int> docs;            // dense ids, distinct tokens per record
  std::vector<int> verticals;       // dense ids, parallel to docs
  std::vector<std::uint8_t> clicks; // 0/1, parallel to docs

  int list_len() const { return static_cast<int>(docs.size()); }
};

// Bidirectional token <-> dense id map. Id 0 is the padding/zero-vector
// slot, id 1 is out-of-vocabulary; regular tokens start at id 2.
class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kOovId = 1;
  static constexpr int kFirstRegularId = 2;

  Vocab();

  // Inserts if absent; returns the dense id either way.
  int add(const std::string& token);
  // OOV tokens map to kOovId.
  int lookup(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

struct AnnotationEntry {
  std::string query_token;
  std::string doc_token;
  int grade = 0;
};

// (query, doc) -> integer relevance grade, kept on raw tokens so OOV
// collisions cannot merge distinct annotated pairs.
struct RelevanceAnnotations {
  std::vector<AnnotationEntry> entries;
  int max_grade = 4;
};

struct Dataset {
  std::vector<SerpRecord> train, valid, test;
  Vocab queries, docs, verticals, clicks;
  int list_len = 10;
  RelevanceAnnotations annotations;

  const std::vector<SerpRecord>& split(const std::string& name) const;
};

// ---------------------------------------------------------------------------
// Ingestion

// Parses one line of the log format:
//   session_id<TAB>query_token<TAB>doc:vert:click<SPACE>...<SPACE>doc:vert:click
// Tokens for doc may contain ':'; the vertical and click fields are split
// from the right.
struct RawRecord {
  std::string session_id;
  std::string query;
  std::vector<std::string> docs;
  std::vector<std::string> verticals;
  std::vector<std::uint8_t> clicks;
};

RawRecord parse_line(const std::string& line, int line_no);
std::string format_line(const RawRecord& raw);

// Loads train.tsv/valid.tsv/test.tsv (+ optional annotations.tsv) from a
// dataset directory. Vocabularies are built from the train split only;
// valid/test tokens unseen in train map to the OOV id. Records whose list
// length differs from expected_len are rejected.
Dataset load_dataset(const std::filesystem::path& dir, int expected_len = 10);

// Parses records from a stream in the line format against existing vocabs
// (no vocab growth; unseen tokens -> OOV).
std::vector<SerpRecord> parse_records(std::istream& in, const Dataset& vocab_source,
                                      int expected_len, const std::string& source_name);

// Renders a dense record back to the line format using the dataset vocabs.
std::string serialize_record(const SerpRecord& r, const Dataset& d);

// ---------------------------------------------------------------------------
// Permutation

enum class PermuteMode { none, half, full };

PermuteMode parse_permute_mode(const std::string& s);
std::string to_string(PermuteMode m);

// none: identical record. half: ranks 1..T/2 permuted among themselves and
// the rest among themselves. full: all ranks permuted. Verticals move with
// their documents; for half/full the clicks are zeroed since the permuted
// list has no ground-truth clicks.
SerpRecord permute_serp(const SerpRecord& r, PermuteMode mode, Rng& rng);

// ---------------------------------------------------------------------------
// Statistics

struct DatasetStats {
  struct SplitStats {
    std::size_t records = 0;
    std::size_t sessions = 0;        // unique session ids
    std::size_t unique_queries = 0;
    double avg_session_length = 0.0; // records per session
    std::vector<double> ctr_at_rank;
  };
  SplitStats train, valid, test;
  std::string to_tsv() const;
};

DatasetStats dataset_stats(const Dataset& d);

}  // namespace clicksim::data
