#include "clicksim/clicklog.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace clicksim::data {

Vocab::Vocab() {
  tokens_ = {"<pad>", "<oov>"};
  ids_ = {{"<pad>", kPadId}, {"<oov>", kOovId}};
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocab::lookup(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kOovId : it->second;
}

bool Vocab::contains(const std::string& token) const {
  return ids_.find(token) != ids_.end();
}

const std::string& Vocab::token(int id) const {
  check_contract(id >= 0 && id < size(), "Vocab: id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

const std::vector<SerpRecord>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "valid") return valid;
  if (name == "test") return test;
  throw ContractError("Dataset: unknown split " + name);
}

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

RawRecord parse_line(const std::string& line, int line_no) {
  auto fields = split_on(line, '\t');
  check_data(fields.size() == 3,
             "line " + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                 std::to_string(fields.size()));
  RawRecord raw;
  raw.session_id = fields[0];
  raw.query = fields[1];
  check_data(!raw.session_id.empty(), "line " + std::to_string(line_no) + ": empty session id");
  check_data(!raw.query.empty(), "line " + std::to_string(line_no) + ": empty query token");

  std::unordered_set<std::string> seen_docs;
  for (const std::string& triple : split_on(fields[2], ' ')) {
    check_data(!triple.empty(), "line " + std::to_string(line_no) + ": empty doc triple");
    auto last = triple.rfind(':');
    check_data(last != std::string::npos && last > 0,
               "line " + std::to_string(line_no) + ": malformed triple '" + triple + "'");
    auto mid = triple.rfind(':', last - 1);
    check_data(mid != std::string::npos && mid > 0,
               "line " + std::to_string(line_no) + ": malformed triple '" + triple + "'");
    std::string doc = triple.substr(0, mid);
    std::string vert = triple.substr(mid + 1, last - mid - 1);
    std::string click = triple.substr(last + 1);
    check_data(click == "0" || click == "1",
               "line " + std::to_string(line_no) + ": click must be 0 or 1, got '" + click + "'");
    check_data(seen_docs.insert(doc).second,
               "line " + std::to_string(line_no) + ": duplicate doc token '" + doc + "'");
    raw.docs.push_back(std::move(doc));
    raw.verticals.push_back(std::move(vert));
    raw.clicks.push_back(click == "1" ? 1 : 0);
  }
  return raw;
}

std::string format_line(const RawRecord& raw) {
  std::string out = raw.session_id + '\t' + raw.query + '\t';
  for (std::size_t i = 0; i < raw.docs.size(); ++i) {
    if (i) out += ' ';
    out += raw.docs[i] + ':' + raw.verticals[i] + ':' + (raw.clicks[i] ? '1' : '0');
  }
  return out;
}

namespace {

std::vector<RawRecord> read_raw(const std::filesystem::path& file, int expected_len) {
  std::ifstream in(file);
  check_data(in.good(), "cannot open " + file.string());
  std::vector<RawRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    RawRecord raw = parse_line(line, line_no);
    check_data(static_cast<int>(raw.docs.size()) == expected_len,
               file.filename().string() + " line " + std::to_string(line_no) + ": list length " +
                   std::to_string(raw.docs.size()) + " != expected " +
                   std::to_string(expected_len));
    out.push_back(std::move(raw));
  }
  return out;
}

SerpRecord encode(const RawRecord& raw, const Dataset& d) {
  SerpRecord r;
  r.session_id = raw.session_id;
  r.query = d.queries.lookup(raw.query);
  r.docs.reserve(raw.docs.size());
  r.verticals.reserve(raw.docs.size());
  for (std::size_t i = 0; i < raw.docs.size(); ++i) {
    r.docs.push_back(d.docs.lookup(raw.docs[i]));
    r.verticals.push_back(d.verticals.lookup(raw.verticals[i]));
  }
  r.clicks = raw.clicks;
  return r;
}

void load_annotations(const std::filesystem::path& file, RelevanceAnnotations& ann) {
  std::ifstream in(file);
  check_data(in.good(), "cannot open " + file.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_on(line, '\t');
    check_data(fields.size() == 3, "annotations line " + std::to_string(line_no) +
                                       ": expected query<TAB>doc<TAB>grade");
    int grade = 0;
    try {
      grade = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw DataError("annotations line " + std::to_string(line_no) + ": bad grade '" +
                      fields[2] + "'");
    }
    check_data(grade >= 0 && grade <= ann.max_grade,
               "annotations line " + std::to_string(line_no) + ": grade out of [0," +
                   std::to_string(ann.max_grade) + "]");
    ann.entries.push_back({fields[0], fields[1], grade});
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir, int expected_len) {
  Dataset d;
  d.list_len = expected_len;

  auto train_raw = read_raw(dir / "train.tsv", expected_len);
  auto valid_raw = read_raw(dir / "valid.tsv", expected_len);
  auto test_raw = read_raw(dir / "test.tsv", expected_len);
  check_data(!train_raw.empty(), "empty train split in " + dir.string());

  // Click vocab is fixed so that click value c maps to dense id 2 + c,
  // independent of the order clicks appear in the data.
  d.clicks.add("0");
  d.clicks.add("1");

  for (const RawRecord& raw : train_raw) {
    d.queries.add(raw.query);
    for (std::size_t i = 0; i < raw.docs.size(); ++i) {
      d.docs.add(raw.docs[i]);
      d.verticals.add(raw.verticals[i]);
    }
  }

  d.train.reserve(train_raw.size());
  for (const RawRecord& raw : train_raw) d.train.push_back(encode(raw, d));
  d.valid.reserve(valid_raw.size());
  for (const RawRecord& raw : valid_raw) d.valid.push_back(encode(raw, d));
  d.test.reserve(test_raw.size());
  for (const RawRecord& raw : test_raw) d.test.push_back(encode(raw, d));

  auto ann_file = dir / "annotations.tsv";
  if (std::filesystem::exists(ann_file)) load_annotations(ann_file, d.annotations);
  return d;
}

std::vector<SerpRecord> parse_records(std::istream& in, const Dataset& vocab_source,
                                      int expected_len, const std::string& source_name) {
  std::vector<SerpRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    RawRecord raw = parse_line(line, line_no);
    check_data(static_cast<int>(raw.docs.size()) == expected_len,
               source_name + " line " + std::to_string(line_no) + ": list length mismatch");
    out.push_back(encode(raw, vocab_source));
  }
  return out;
}

std::string serialize_record(const SerpRecord& r, const Dataset& d) {
  RawRecord raw;
  raw.session_id = r.session_id;
  raw.query = d.queries.token(r.query);
  for (int i = 0; i < r.list_len(); ++i) {
    raw.docs.push_back(d.docs.token(r.docs[static_cast<std::size_t>(i)]));
    raw.verticals.push_back(d.verticals.token(r.verticals[static_cast<std::size_t>(i)]));
  }
  raw.clicks = r.clicks;
  return format_line(raw);
}

PermuteMode parse_permute_mode(const std::string& s) {
  if (s == "none") return PermuteMode::none;
  if (s == "half") return PermuteMode::half;
  if (s == "full") return PermuteMode::full;
  throw DataError("unknown permutation mode '" + s + "'");
}

std::string to_string(PermuteMode m) {
  switch (m) {
    case PermuteMode::none: return "none";
    case PermuteMode::half: return "half";
    case PermuteMode::full: return "full";
  }
  return "?";
}

namespace {

void apply_permutation(SerpRecord& r, const std::vector<int>& perm, int offset) {
  const auto n = perm.size();
  std::vector<int> docs(n), verts(n);
  for (std::size_t i = 0; i < n; ++i) {
    docs[i] = r.docs[static_cast<std::size_t>(offset + perm[i])];
    verts[i] = r.verticals[static_cast<std::size_t>(offset + perm[i])];
  }
  for (std::size_t i = 0; i < n; ++i) {
    r.docs[static_cast<std::size_t>(offset) + i] = docs[i];
    r.verticals[static_cast<std::size_t>(offset) + i] = verts[i];
  }
}

std::vector<int> random_perm(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  rng.shuffle(p);
  return p;
}

}  // namespace

SerpRecord permute_serp(const SerpRecord& r, PermuteMode mode, Rng& rng) {
  SerpRecord out = r;
  if (mode == PermuteMode::none) return out;

  const int t = r.list_len();
  if (mode == PermuteMode::half) {
    const int head = t / 2;
    apply_permutation(out, random_perm(head, rng), 0);
    apply_permutation(out, random_perm(t - head, rng), head);
  } else {
    apply_permutation(out, random_perm(t, rng), 0);
  }
  std::fill(out.clicks.begin(), out.clicks.end(), 0);
  return out;
}

namespace {

DatasetStats::SplitStats split_stats(const std::vector<SerpRecord>& records, int list_len) {
  DatasetStats::SplitStats s;
  s.records = records.size();
  s.ctr_at_rank.assign(static_cast<std::size_t>(list_len), 0.0);
  std::set<std::string> sessions;
  std::set<int> queries;
  for (const SerpRecord& r : records) {
    sessions.insert(r.session_id);
    queries.insert(r.query);
    for (int i = 0; i < r.list_len() && i < list_len; ++i)
      s.ctr_at_rank[static_cast<std::size_t>(i)] += r.clicks[static_cast<std::size_t>(i)];
  }
  s.sessions = sessions.size();
  s.unique_queries = queries.size();
  s.avg_session_length =
      sessions.empty() ? 0.0
                       : static_cast<double>(records.size()) / static_cast<double>(sessions.size());
  if (!records.empty())
    for (double& c : s.ctr_at_rank) c /= static_cast<double>(records.size());
  return s;
}

void append_split_tsv(std::ostringstream& out, const std::string& name,
                      const DatasetStats::SplitStats& s) {
  out << name << "\trecords\t" << s.records << '\n';
  out << name << "\tsessions\t" << s.sessions << '\n';
  out << name << "\tunique_queries\t" << s.unique_queries << '\n';
  out << name << "\tavg_session_length\t" << s.avg_session_length << '\n';
  for (std::size_t i = 0; i < s.ctr_at_rank.size(); ++i)
    out << name << "\tctr@" << (i + 1) << '\t' << s.ctr_at_rank[i] << '\n';
}

}  // namespace

DatasetStats dataset_stats(const Dataset& d) {
  DatasetStats st;
  st.train = split_stats(d.train, d.list_len);
  st.valid = split_stats(d.valid, d.list_len);
  st.test = split_stats(d.test, d.list_len);
  return st;
}

std::string DatasetStats::to_tsv() const {
  std::ostringstream out;
  out << "split\tmetric\tvalue\n";
  append_split_tsv(out, "train", train);
  append_split_tsv(out, "valid", valid);
  append_split_tsv(out, "test", test);
  return out.str();
}

}  // namespace clicksim::data
