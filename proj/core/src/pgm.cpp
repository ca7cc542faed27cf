#include "clicksim/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace clicksim::pgm {

ModelKind parse_model_kind(const std::string& s) {
  if (s == "pbm") return ModelKind::pbm;
  if (s == "ubm") return ModelKind::ubm;
  if (s == "dcm") return ModelKind::dcm;
  if (s == "sdbn") return ModelKind::sdbn;
  throw DataError("unknown PGM model kind '" + s + "'");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::pbm: return "pbm";
    case ModelKind::ubm: return "ubm";
    case ModelKind::dcm: return "dcm";
    case ModelKind::sdbn: return "sdbn";
  }
  return "?";
}

void AttrTable::set(int query, int doc, double value) { values_[key(query, doc)] = value; }

double AttrTable::get(int query, int doc) const {
  auto it = values_.find(key(query, doc));
  return it == values_.end() ? mean_ : it->second;
}

bool AttrTable::has(int query, int doc) const {
  return values_.find(key(query, doc)) != values_.end();
}

void AttrTable::finalize_mean() {
  if (values_.empty()) {
    mean_ = 0.5;
    return;
  }
  double sum = 0.0;
  for (const auto& [k, v] : values_) sum += v;
  mean_ = sum / static_cast<double>(values_.size());
}

double UbmParams::exam_at(int rank, int prev_click_rank) const {
  const int dist = rank - prev_click_rank;  // 1..rank (prev 0 = no prior click)
  return exam[static_cast<std::size_t>(rank - 1)][static_cast<std::size_t>(dist - 1)];
}

namespace {

double clamp_prob(double p, double lo) { return std::clamp(p, lo, 1.0 - lo); }

int last_click_before(const std::uint8_t* clicks, int i) {
  for (int j = i - 1; j >= 0; --j)
    if (clicks[j]) return j + 1;  // 1-based rank
  return 0;
}

// P(click at 0-based position i | clicks before i) for each family.
double conditional_prob(const PgmModel& m, int query, const std::vector<int>& docs, int i,
                        const std::uint8_t* clicks_prefix) {
  const int doc = docs[static_cast<std::size_t>(i)];
  switch (m.kind) {
    case ModelKind::pbm: {
      const auto& p = std::get<PbmParams>(m.params);
      return p.exam[static_cast<std::size_t>(i)] * p.attr.get(query, doc);
    }
    case ModelKind::ubm: {
      const auto& p = std::get<UbmParams>(m.params);
      const int prev = last_click_before(clicks_prefix, i);
      return p.exam_at(i + 1, prev) * p.attr.get(query, doc);
    }
    case ModelKind::dcm: {
      const auto& p = std::get<DcmParams>(m.params);
      const int prev = last_click_before(clicks_prefix, i);
      if (prev == 0) return p.attr.get(query, doc);
      const double lam = p.cont[static_cast<std::size_t>(prev - 1)];
      double prod = 1.0;
      for (int j = prev; j < i; ++j)
        prod *= 1.0 - p.attr.get(query, docs[static_cast<std::size_t>(j)]);
      const double denom = std::max(1.0 - lam + lam * prod, 1e-12);
      return (lam * prod / denom) * p.attr.get(query, doc);
    }
    case ModelKind::sdbn: {
      const auto& p = std::get<SdbnParams>(m.params);
      const int prev = last_click_before(clicks_prefix, i);
      if (prev == 0) return p.attr.get(query, doc);
      const int prev_doc = docs[static_cast<std::size_t>(prev - 1)];
      const double cont = 1.0 - p.sat.get(query, prev_doc);
      double prod = 1.0;
      for (int j = prev; j < i; ++j)
        prod *= 1.0 - p.attr.get(query, docs[static_cast<std::size_t>(j)]);
      const double denom = std::max(1.0 - cont + cont * prod, 1e-12);
      return (cont * prod / denom) * p.attr.get(query, doc);
    }
  }
  return 0.5;
}

// ---------------------------------------------------------------------------
// EM fits (PBM / UBM)

struct Accum {
  double num = 0.0;
  double den = 0.0;
  double posterior_mean(double fallback) const { return den > 0 ? num / den : fallback; }
};

double pbm_train_ll(const PbmParams& p, std::span<const data::SerpRecord> records) {
  double ll = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    for (int i = 0; i < r.list_len(); ++i, ++n) {
      const double q = clamp_prob(
          p.exam[static_cast<std::size_t>(i)] * p.attr.get(r.query, r.docs[static_cast<std::size_t>(i)]),
          1e-12);
      ll += r.clicks[static_cast<std::size_t>(i)] ? std::log(q) : std::log(1.0 - q);
    }
  return n ? ll / static_cast<double>(n) : 0.0;
}

PbmParams fit_pbm(std::span<const data::SerpRecord> records, int list_len,
                  const FitConfig& cfg, FitReport& report) {
  PbmParams p;
  p.exam.assign(static_cast<std::size_t>(list_len), 0.5);
  for (const auto& r : records)
    for (int i = 0; i < r.list_len(); ++i)
      if (!p.attr.has(r.query, r.docs[static_cast<std::size_t>(i)]))
        p.attr.set(r.query, r.docs[static_cast<std::size_t>(i)], 0.5);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    report.train_ll.push_back(pbm_train_ll(p, records));
    std::vector<Accum> exam_acc(static_cast<std::size_t>(list_len));
    std::map<std::uint64_t, Accum> attr_acc;

    for (const auto& r : records) {
      for (int i = 0; i < r.list_len(); ++i) {
        const int doc = r.docs[static_cast<std::size_t>(i)];
        const double e = p.exam[static_cast<std::size_t>(i)];
        const double a = p.attr.get(r.query, doc);
        double e_post, a_post;
        if (r.clicks[static_cast<std::size_t>(i)]) {
          e_post = 1.0;
          a_post = 1.0;
        } else {
          const double denom = std::max(1.0 - e * a, 1e-12);
          e_post = e * (1.0 - a) / denom;
          a_post = a * (1.0 - e) / denom;
        }
        exam_acc[static_cast<std::size_t>(i)].num += e_post;
        exam_acc[static_cast<std::size_t>(i)].den += 1.0;
        auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r.query)) << 32) |
                   static_cast<std::uint32_t>(doc);
        attr_acc[key].num += a_post;
        attr_acc[key].den += 1.0;
      }
    }

    double max_change = 0.0;
    for (int i = 0; i < list_len; ++i) {
      const double next =
          clamp_prob(exam_acc[static_cast<std::size_t>(i)].posterior_mean(0.5), cfg.clamp_lo);
      max_change = std::max(max_change, std::abs(next - p.exam[static_cast<std::size_t>(i)]));
      p.exam[static_cast<std::size_t>(i)] = next;
    }
    for (const auto& [key, acc] : attr_acc) {
      const int q = static_cast<int>(key >> 32);
      const int d = static_cast<int>(key & 0xffffffffull);
      const double next = clamp_prob(acc.posterior_mean(0.5), cfg.clamp_lo);
      max_change = std::max(max_change, std::abs(next - p.attr.get(q, d)));
      p.attr.set(q, d, next);
    }

    report.iterations = iter + 1;
    if (max_change < cfg.tol) {
      report.converged = true;
      break;
    }
  }
  report.train_ll.push_back(pbm_train_ll(p, records));
  p.attr.finalize_mean();
  return p;
}

double ubm_train_ll(const UbmParams& p, std::span<const data::SerpRecord> records) {
  double ll = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    for (int i = 0; i < r.list_len(); ++i, ++n) {
      const int prev = last_click_before(r.clicks.data(), i);
      const double q = clamp_prob(
          p.exam_at(i + 1, prev) * p.attr.get(r.query, r.docs[static_cast<std::size_t>(i)]), 1e-12);
      ll += r.clicks[static_cast<std::size_t>(i)] ? std::log(q) : std::log(1.0 - q);
    }
  return n ? ll / static_cast<double>(n) : 0.0;
}

UbmParams fit_ubm(std::span<const data::SerpRecord> records, int list_len,
                  const FitConfig& cfg, FitReport& report) {
  UbmParams p;
  p.exam.resize(static_cast<std::size_t>(list_len));
  for (int r = 0; r < list_len; ++r)
    p.exam[static_cast<std::size_t>(r)].assign(static_cast<std::size_t>(r + 1), 0.5);
  for (const auto& r : records)
    for (int i = 0; i < r.list_len(); ++i)
      if (!p.attr.has(r.query, r.docs[static_cast<std::size_t>(i)]))
        p.attr.set(r.query, r.docs[static_cast<std::size_t>(i)], 0.5);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    report.train_ll.push_back(ubm_train_ll(p, records));
    std::vector<std::vector<Accum>> exam_acc(static_cast<std::size_t>(list_len));
    for (int r = 0; r < list_len; ++r)
      exam_acc[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(r + 1));
    std::map<std::uint64_t, Accum> attr_acc;

    for (const auto& r : records) {
      for (int i = 0; i < r.list_len(); ++i) {
        const int doc = r.docs[static_cast<std::size_t>(i)];
        const int prev = last_click_before(r.clicks.data(), i);
        const int dist = i + 1 - prev;
        const double e = p.exam_at(i + 1, prev);
        const double a = p.attr.get(r.query, doc);
        double e_post, a_post;
        if (r.clicks[static_cast<std::size_t>(i)]) {
          e_post = 1.0;
          a_post = 1.0;
        } else {
          const double denom = std::max(1.0 - e * a, 1e-12);
          e_post = e * (1.0 - a) / denom;
          a_post = a * (1.0 - e) / denom;
        }
        exam_acc[static_cast<std::size_t>(i)][static_cast<std::size_t>(dist - 1)].num += e_post;
        exam_acc[static_cast<std::size_t>(i)][static_cast<std::size_t>(dist - 1)].den += 1.0;
        auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r.query)) << 32) |
                   static_cast<std::uint32_t>(doc);
        attr_acc[key].num += a_post;
        attr_acc[key].den += 1.0;
      }
    }

    double max_change = 0.0;
    for (int r = 0; r < list_len; ++r)
      for (int d = 0; d <= r; ++d) {
        auto& cell = p.exam[static_cast<std::size_t>(r)][static_cast<std::size_t>(d)];
        const double next = clamp_prob(
            exam_acc[static_cast<std::size_t>(r)][static_cast<std::size_t>(d)].posterior_mean(0.5),
            cfg.clamp_lo);
        max_change = std::max(max_change, std::abs(next - cell));
        cell = next;
      }
    for (const auto& [key, acc] : attr_acc) {
      const int q = static_cast<int>(key >> 32);
      const int d = static_cast<int>(key & 0xffffffffull);
      const double next = clamp_prob(acc.posterior_mean(0.5), cfg.clamp_lo);
      max_change = std::max(max_change, std::abs(next - p.attr.get(q, d)));
      p.attr.set(q, d, next);
    }

    report.iterations = iter + 1;
    if (max_change < cfg.tol) {
      report.converged = true;
      break;
    }
  }
  report.train_ll.push_back(ubm_train_ll(p, records));
  p.attr.finalize_mean();
  return p;
}

// ---------------------------------------------------------------------------
// Counting fits (DCM / SDBN)

int last_click_rank(const data::SerpRecord& r) {
  for (int i = r.list_len() - 1; i >= 0; --i)
    if (r.clicks[static_cast<std::size_t>(i)]) return i + 1;
  return 0;
}

double smoothed(double num, double den, double lo) {
  return clamp_prob((num + 1.0) / (den + 2.0), lo);
}

DcmParams fit_dcm(std::span<const data::SerpRecord> records, int list_len,
                  const FitConfig& cfg) {
  std::map<std::uint64_t, Accum> attr_acc;
  std::vector<Accum> cont_acc(static_cast<std::size_t>(list_len));

  for (const auto& r : records) {
    const int last = last_click_rank(r);
    // Without clicks the DCM user continues through the whole list.
    const int examined = last > 0 ? last : r.list_len();
    for (int i = 0; i < examined; ++i) {
      auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r.query)) << 32) |
                 static_cast<std::uint32_t>(r.docs[static_cast<std::size_t>(i)]);
      attr_acc[key].num += r.clicks[static_cast<std::size_t>(i)];
      attr_acc[key].den += 1.0;
      if (r.clicks[static_cast<std::size_t>(i)]) {
        cont_acc[static_cast<std::size_t>(i)].num += (i + 1 < last) ? 1.0 : 0.0;
        cont_acc[static_cast<std::size_t>(i)].den += 1.0;
      }
    }
  }

  DcmParams p;
  p.cont.resize(static_cast<std::size_t>(list_len));
  for (int i = 0; i < list_len; ++i)
    p.cont[static_cast<std::size_t>(i)] = smoothed(cont_acc[static_cast<std::size_t>(i)].num,
                                                   cont_acc[static_cast<std::size_t>(i)].den,
                                                   cfg.clamp_lo);
  for (const auto& [key, acc] : attr_acc)
    p.attr.set(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffull),
               smoothed(acc.num, acc.den, cfg.clamp_lo));
  p.attr.finalize_mean();
  return p;
}

SdbnParams fit_sdbn(std::span<const data::SerpRecord> records, const FitConfig& cfg) {
  std::map<std::uint64_t, Accum> attr_acc, sat_acc;

  for (const auto& r : records) {
    const int last = last_click_rank(r);
    for (int i = 0; i < last; ++i) {
      auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r.query)) << 32) |
                 static_cast<std::uint32_t>(r.docs[static_cast<std::size_t>(i)]);
      attr_acc[key].num += r.clicks[static_cast<std::size_t>(i)];
      attr_acc[key].den += 1.0;
      if (r.clicks[static_cast<std::size_t>(i)]) {
        sat_acc[key].num += (i + 1 == last) ? 1.0 : 0.0;
        sat_acc[key].den += 1.0;
      }
    }
  }

  SdbnParams p;
  for (const auto& [key, acc] : attr_acc)
    p.attr.set(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffull),
               smoothed(acc.num, acc.den, cfg.clamp_lo));
  for (const auto& [key, acc] : sat_acc)
    p.sat.set(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffull),
              smoothed(acc.num, acc.den, cfg.clamp_lo));
  p.attr.finalize_mean();
  p.sat.finalize_mean();
  return p;
}

}  // namespace

PgmModel fit_records(ModelKind kind, std::span<const data::SerpRecord> records,
                     int list_len, const FitConfig& cfg) {
  check_data(!records.empty(), "pgm::fit: empty training data");
  PgmModel m;
  m.kind = kind;
  m.list_len = list_len;
  switch (kind) {
    case ModelKind::pbm:
      m.params = fit_pbm(records, list_len, cfg, m.report);
      break;
    case ModelKind::ubm:
      m.params = fit_ubm(records, list_len, cfg, m.report);
      break;
    case ModelKind::dcm:
      m.params = fit_dcm(records, list_len, cfg);
      break;
    case ModelKind::sdbn:
      m.params = fit_sdbn(records, cfg);
      break;
  }
  return m;
}

PgmModel fit(ModelKind kind, const data::Dataset& d, const FitConfig& cfg) {
  return fit_records(kind, d.train, d.list_len, cfg);
}

std::vector<double> predict(const PgmModel& m, const data::SerpRecord& r) {
  std::vector<double> out(static_cast<std::size_t>(r.list_len()));
  for (int i = 0; i < r.list_len(); ++i)
    out[static_cast<std::size_t>(i)] = conditional_prob(m, r.query, r.docs, i, r.clicks.data());
  return out;
}

std::vector<std::uint8_t> sample(const PgmModel& m, int query, const std::vector<int>& docs,
                                 const std::vector<int>& verticals, Rng& rng) {
  (void)verticals;  // PGM families ignore vertical types
  std::vector<std::uint8_t> clicks(docs.size(), 0);
  for (int i = 0; i < static_cast<int>(docs.size()); ++i) {
    const double p = conditional_prob(m, query, docs, i, clicks.data());
    clicks[static_cast<std::size_t>(i)] = rng.bernoulli(p) ? 1 : 0;
  }
  return clicks;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void save_attr(std::ostream& out, const std::string& name, const AttrTable& t) {
  std::map<std::uint64_t, double> sorted;
  t.for_each([&](int q, int d, double v) {
    sorted[(static_cast<std::uint64_t>(static_cast<std::uint32_t>(q)) << 32) |
           static_cast<std::uint32_t>(d)] = v;
  });
  out << name << "_mean\t" << t.global_mean() << '\n';
  for (const auto& [key, v] : sorted)
    out << name << '\t' << static_cast<int>(key >> 32) << '\t'
        << static_cast<int>(key & 0xffffffffull) << '\t' << v << '\n';
}

}  // namespace

void save(const PgmModel& m, std::ostream& out) {
  out.precision(17);
  out << "kind\t" << to_string(m.kind) << '\n';
  out << "list_len\t" << m.list_len << '\n';
  switch (m.kind) {
    case ModelKind::pbm: {
      const auto& p = std::get<PbmParams>(m.params);
      for (std::size_t i = 0; i < p.exam.size(); ++i)
        out << "exam\t" << i << '\t' << p.exam[i] << '\n';
      save_attr(out, "attr", p.attr);
      break;
    }
    case ModelKind::ubm: {
      const auto& p = std::get<UbmParams>(m.params);
      for (std::size_t r = 0; r < p.exam.size(); ++r)
        for (std::size_t d = 0; d < p.exam[r].size(); ++d)
          out << "exam\t" << r << '\t' << d << '\t' << p.exam[r][d] << '\n';
      save_attr(out, "attr", p.attr);
      break;
    }
    case ModelKind::dcm: {
      const auto& p = std::get<DcmParams>(m.params);
      for (std::size_t i = 0; i < p.cont.size(); ++i)
        out << "cont\t" << i << '\t' << p.cont[i] << '\n';
      save_attr(out, "attr", p.attr);
      break;
    }
    case ModelKind::sdbn: {
      const auto& p = std::get<SdbnParams>(m.params);
      save_attr(out, "attr", p.attr);
      save_attr(out, "sat", p.sat);
      break;
    }
  }
}

void save(const PgmModel& m, const std::filesystem::path& file) {
  std::ofstream out(file);
  check_data(out.good(), "cannot write " + file.string());
  save(m, out);
}

PgmModel load(std::istream& in) {
  PgmModel m;
  std::string line;
  bool kind_seen = false;
  AttrTable* attr = nullptr;
  AttrTable* sat = nullptr;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "kind") {
      std::string k;
      ls >> k;
      m.kind = parse_model_kind(k);
      kind_seen = true;
      switch (m.kind) {
        case ModelKind::pbm: m.params = PbmParams{}; attr = &std::get<PbmParams>(m.params).attr; break;
        case ModelKind::ubm: m.params = UbmParams{}; attr = &std::get<UbmParams>(m.params).attr; break;
        case ModelKind::dcm: m.params = DcmParams{}; attr = &std::get<DcmParams>(m.params).attr; break;
        case ModelKind::sdbn:
          m.params = SdbnParams{};
          attr = &std::get<SdbnParams>(m.params).attr;
          sat = &std::get<SdbnParams>(m.params).sat;
          break;
      }
    } else if (tag == "list_len") {
      ls >> m.list_len;
    } else {
      check_data(kind_seen, "pgm::load: 'kind' must come first");
      if (tag == "exam") {
        if (m.kind == ModelKind::pbm) {
          auto& p = std::get<PbmParams>(m.params);
          std::size_t i;
          double v;
          ls >> i >> v;
          if (p.exam.size() <= i) p.exam.resize(i + 1, 0.0);
          p.exam[i] = v;
        } else {
          auto& p = std::get<UbmParams>(m.params);
          std::size_t r, d;
          double v;
          ls >> r >> d >> v;
          if (p.exam.size() <= r) p.exam.resize(r + 1);
          if (p.exam[r].size() <= d) p.exam[r].resize(d + 1, 0.0);
          p.exam[r][d] = v;
        }
      } else if (tag == "cont") {
        auto& p = std::get<DcmParams>(m.params);
        std::size_t i;
        double v;
        ls >> i >> v;
        if (p.cont.size() <= i) p.cont.resize(i + 1, 0.0);
        p.cont[i] = v;
      } else if (tag == "attr") {
        int q, d;
        double v;
        ls >> q >> d >> v;
        attr->set(q, d, v);
      } else if (tag == "sat") {
        check_data(sat != nullptr, "pgm::load: 'sat' only valid for sdbn");
        int q, d;
        double v;
        ls >> q >> d >> v;
        sat->set(q, d, v);
      } else if (tag == "attr_mean" || tag == "sat_mean") {
        // means are re-derived below
      } else {
        throw DataError("pgm::load: unknown tag '" + tag + "'");
      }
    }
    check_data(!ls.fail(), "pgm::load: malformed line '" + line + "'");
  }
  check_data(kind_seen, "pgm::load: missing 'kind'");
  if (attr) attr->finalize_mean();
  if (sat) sat->finalize_mean();
  return m;
}

PgmModel load(const std::filesystem::path& file) {
  std::ifstream in(file);
  check_data(in.good(), "cannot open " + file.string());
  return load(in);
}

}  // namespace clicksim::pgm
