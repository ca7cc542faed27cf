#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clicksim/checkpoint.hpp"
#include "clicksim/clicklog.hpp"
#include "clicksim/critic.hpp"
#include "clicksim/metrics.hpp"
#include "clicksim/oracle.hpp"
#include "clicksim/pgm.hpp"
#include "clicksim/policy.hpp"
#include "clicksim/train.hpp"

namespace fs = std::filesystem;
using namespace clicksim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitAudit = 4;

// ---------------------------------------------------------------------------
// Run manifest and output tracking

std::uint64_t fnv1a_file(const fs::path& file, std::uint64_t hash) {
  std::ifstream in(file, std::ios::binary);
  if (!in.good()) return hash;
  char buf[16384];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
    if (in.eof()) break;
  }
  return hash;
}

std::uint64_t hash_inputs(const std::vector<fs::path>& inputs) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (const fs::path& p : inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(p))
        if (entry.is_regular_file()) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const fs::path& f : files) hash = fnv1a_file(f, hash);
    } else {
      hash = fnv1a_file(p, hash);
    }
  }
  return hash;
}

class RunOutputs {
 public:
  explicit RunOutputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path file(const std::string& name) {
    fs::path p = dir_ / name;
    written_.push_back(p);
    return p;
  }

  void write_text(const std::string& name, const std::string& content) {
    std::ofstream out(file(name));
    check_data(out.good(), "cannot write " + (dir_ / name).string());
    out << content;
  }

  // The manifest goes down before any work begins.
  void write_manifest(const std::string& command, const std::string& config,
                      const std::string& data_dir, std::uint64_t seed,
                      const std::vector<fs::path>& inputs) {
    std::ostringstream out;
    out << "command = " << command << '\n';
    out << "config = " << (config.empty() ? "-" : config) << '\n';
    out << "data = " << (data_dir.empty() ? "-" : data_dir) << '\n';
    out << "seed = " << seed << '\n';
    out << "output = " << dir_.string() << '\n';
    out << "inputs_hash = " << std::hex << hash_inputs(inputs) << std::dec << '\n';
    write_text("manifest.txt", out.str());
  }

  // Partial outputs are removed when a run fails.
  void discard() {
    for (const fs::path& p : written_)
      if (fs::exists(p)) fs::remove(p);
  }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

int run_guarded(const std::string& out_dir, const std::function<int(RunOutputs&)>& body) {
  RunOutputs out{out_dir};
  try {
    return body(out);
  } catch (const DataError& e) {
    out.discard();
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    out.discard();
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}

// ---------------------------------------------------------------------------
// Shared option plumbing

struct CommonOpts {
  std::string data_dir;
  std::string out_dir;
  std::string config_file;
  int list_len = 10;
  int emb_size = 64;
  int hidden_size = 64;
  // Raw flag values applied on top of the config file (flags win).
  std::map<std::string, std::string> overrides;
};

void add_config_flag(CLI::App* cmd, CommonOpts& opts, const std::string& flag,
                     const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&opts, key](const std::string& v) { opts.overrides[key] = v; }, help);
}

void add_train_flags(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "training config file (key = value lines)")
      ->check(CLI::ExistingFile);
  add_config_flag(cmd, opts, "--seed", "seed", "rng seed");
  add_config_flag(cmd, opts, "--batch-size", "batch_size", "mini-batch size");
  add_config_flag(cmd, opts, "--lr-gen", "lr_gen", "generator learning rate");
  add_config_flag(cmd, opts, "--lr-disc", "lr_disc", "discriminator learning rate");
  add_config_flag(cmd, opts, "--lr-decay", "lr_decay", "plateau decay factor");
  add_config_flag(cmd, opts, "--lr-pretrain", "lr_pretrain", "pretraining learning rate");
  add_config_flag(cmd, opts, "--l2", "l2", "L2 coefficient");
  add_config_flag(cmd, opts, "--dropout", "dropout", "dropout rate");
  add_config_flag(cmd, opts, "--gamma", "gamma", "reward discount factor");
  add_config_flag(cmd, opts, "--lambda-entropy", "lambda_entropy", "entropy coefficient");
  add_config_flag(cmd, opts, "--ppo-clip", "ppo_clip", "PPO clip epsilon");
  add_config_flag(cmd, opts, "--ppo-epochs", "ppo_epochs", "PPO passes per batch");
  add_config_flag(cmd, opts, "--g-step", "g_step", "generator updates per epoch");
  add_config_flag(cmd, opts, "--d-step", "d_step", "discriminator schedule m,n");
  add_config_flag(cmd, opts, "--pretrain-epochs", "pretrain_epochs", "MLE pretraining epochs");
  add_config_flag(cmd, opts, "--max-epochs", "max_epochs", "adversarial epochs");
  add_config_flag(cmd, opts, "--patience", "patience", "plateau patience (epochs)");
  add_config_flag(cmd, opts, "--reward-sign", "reward_sign", "neg_log_d or log_d");
}

train::TrainConfig resolve_config(const CommonOpts& opts) {
  train::TrainConfig cfg;
  if (!opts.config_file.empty()) cfg = train::TrainConfig::from_file(opts.config_file);
  for (const auto& [key, value] : opts.overrides) cfg.apply(key, value);
  if (const char* env = std::getenv("CLICKSIM_SEED")) cfg.apply("seed", env);
  cfg.validate();
  return cfg;
}

seq::ModelSizes sizes_for(const data::Dataset& d, const CommonOpts& opts) {
  seq::ModelSizes s;
  s.n_query = d.queries.size();
  s.n_doc = d.docs.size();
  s.n_vert = d.verticals.size();
  s.emb_q = s.emb_d = s.emb_v = s.emb_c = opts.emb_size;
  s.hidden = opts.hidden_size;
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

// Vertical seen with a (query, doc) pair, for scoring annotated documents.
std::map<std::pair<int, int>, int> vertical_index(const data::Dataset& d) {
  std::map<std::pair<int, int>, int> verts;
  for (const auto* split : {&d.train, &d.valid, &d.test})
    for (const auto& r : *split)
      for (int i = 0; i < r.list_len(); ++i)
        verts.emplace(std::make_pair(r.query, r.docs[static_cast<std::size_t>(i)]),
                      r.verticals[static_cast<std::size_t>(i)]);
  return verts;
}

using DocScorer = std::function<double(int query, int doc, int vert)>;

metrics::NdcgReport ndcg_from_annotations(const data::Dataset& d, const DocScorer& score) {
  const auto verts = vertical_index(d);
  std::vector<std::string> query_order;
  std::map<std::string, metrics::ScoredList> lists;
  for (const auto& e : d.annotations.entries) {
    if (lists.find(e.query_token) == lists.end()) query_order.push_back(e.query_token);
    auto& list = lists[e.query_token];
    const int q = d.queries.lookup(e.query_token);
    const int doc = d.docs.lookup(e.doc_token);
    auto it = verts.find({q, doc});
    const int vert = it == verts.end() ? data::Vocab::kPadId : it->second;
    list.scores.push_back(score(q, doc, vert));
    list.grades.push_back(e.grade);
  }
  std::vector<metrics::ScoredList> ordered;
  ordered.reserve(query_order.size());
  for (const auto& q : query_order) ordered.push_back(lists[q]);
  return metrics::mean_ndcg(ordered, {1, 3, 5, 10});
}

metrics::MetricReport evaluate_predictor(const metrics::ClickPredictor& predict,
                                         const data::Dataset& d, const DocScorer& score) {
  metrics::MetricReport rep;
  auto preds = metrics::predictions_on(predict, d.test);
  rep.ll = metrics::log_likelihood(preds);
  rep.ppl = metrics::perplexity(preds);
  if (!d.annotations.entries.empty()) {
    rep.ndcg = ndcg_from_annotations(d, score);
    rep.has_ndcg = true;
  }
  return rep;
}

// Attractiveness is the family-agnostic relevance proxy for PGM ranking.
double pgm_relevance(const pgm::PgmModel& m, int query, int doc) {
  switch (m.kind) {
    case pgm::ModelKind::pbm: return std::get<pgm::PbmParams>(m.params).attr.get(query, doc);
    case pgm::ModelKind::ubm: return std::get<pgm::UbmParams>(m.params).attr.get(query, doc);
    case pgm::ModelKind::dcm: return std::get<pgm::DcmParams>(m.params).attr.get(query, doc);
    case pgm::ModelKind::sdbn: return std::get<pgm::SdbnParams>(m.params).attr.get(query, doc);
  }
  return 0.5;
}

std::string coverage_tsv(const std::string& surrogate, const metrics::CoverageResult& res) {
  std::ostringstream out;
  out.precision(12);
  out << "key\tvalue\n";
  out << "surrogate\t" << surrogate << '\n';
  out << "reverse_ppl\t" << res.reverse_ppl << '\n';
  out << "forward_ppl\t" << res.forward_ppl << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Subcommand bodies

int cmd_stats(RunOutputs& out, const CommonOpts& opts) {
  out.write_manifest("stats", "", opts.data_dir, 0, {opts.data_dir});
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);
  const std::string tsv = data::dataset_stats(d).to_tsv();
  out.write_text("report.tsv", tsv);
  std::cout << tsv;
  return kExitOk;
}

int cmd_fit_pgm(RunOutputs& out, const CommonOpts& opts, const std::string& model_name) {
  auto cfg = resolve_config(opts);
  out.write_manifest("fit-pgm " + model_name, opts.config_file, opts.data_dir, cfg.seed,
                     {opts.data_dir});
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);

  auto kind = pgm::parse_model_kind(model_name);
  auto model = pgm::fit(kind, d);
  pgm::save(model, out.file("model.ckpt"));

  std::ostringstream fit_tsv;
  fit_tsv.precision(12);
  fit_tsv << "iteration\ttrain_ll\n";
  for (std::size_t i = 0; i < model.report.train_ll.size(); ++i)
    fit_tsv << i << '\t' << model.report.train_ll[i] << '\n';
  out.write_text("report.tsv", fit_tsv.str());

  auto rep = evaluate_predictor(metrics::predictor_for(model), d,
                                [&](int q, int doc, int) { return pgm_relevance(model, q, doc); });
  out.write_text("metrics.txt", rep.to_text());
  std::cout << rep.to_text();
  return kExitOk;
}

int cmd_pretrain(RunOutputs& out, const CommonOpts& opts) {
  auto cfg = resolve_config(opts);
  out.write_manifest("pretrain", opts.config_file, opts.data_dir, cfg.seed, {opts.data_dir});
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);

  Rng init_rng(cfg.seed);
  policy::GeneratorParams gen;
  gen.init(sizes_for(d, opts), init_rng);
  critic::DiscriminatorParams disc;
  disc.init(sizes_for(d, opts), init_rng);

  auto report = train::pretrain_mle(gen, disc, d, cfg);
  gen.save(out.file("model.ckpt"));
  disc.save(out.file("disc.ckpt"));
  out.write_text("report.tsv", report.to_tsv());

  auto rep = evaluate_predictor(
      metrics::predictor_for(gen), d,
      [&](int q, int doc, int vert) { return policy::relevance_score(gen, q, doc, vert); });
  out.write_text("metrics.txt", rep.to_text());
  std::cout << rep.to_text();
  return kExitOk;
}

int cmd_train_gail(RunOutputs& out, const CommonOpts& opts, const std::string& init_dir) {
  auto cfg = resolve_config(opts);
  std::vector<fs::path> inputs = {opts.data_dir};
  if (!init_dir.empty()) inputs.emplace_back(init_dir);
  out.write_manifest("train-gail", opts.config_file, opts.data_dir, cfg.seed, inputs);
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);

  policy::GeneratorParams gen;
  critic::DiscriminatorParams disc;
  train::TrainReport pre_report;
  if (!init_dir.empty()) {
    gen = policy::GeneratorParams::load(fs::path(init_dir) / "model.ckpt");
    disc = critic::DiscriminatorParams::load(fs::path(init_dir) / "disc.ckpt");
  } else {
    Rng init_rng(cfg.seed);
    gen.init(sizes_for(d, opts), init_rng);
    disc.init(sizes_for(d, opts), init_rng);
    pre_report = train::pretrain_mle(gen, disc, d, cfg);
  }

  auto gail_report = train::gail_loop(gen, disc, d, cfg);
  gen.save(out.file("model.ckpt"));
  disc.save(out.file("disc.ckpt"));

  std::ostringstream tsv;
  tsv << "phase\tepoch\tgen_loss\tdisc_loss\tvalid_ll\tvalid_ppl\tlr_gen\tlr_disc\n";
  auto append_rows = [&tsv](const std::string& phase, const train::TrainReport& r) {
    std::istringstream rows(r.to_tsv());
    std::string line;
    std::getline(rows, line);  // header
    while (std::getline(rows, line)) tsv << phase << '\t' << line << '\n';
  };
  append_rows("pretrain", pre_report);
  append_rows("gail", gail_report);
  out.write_text("report.tsv", tsv.str());

  auto rep = evaluate_predictor(
      metrics::predictor_for(gen), d,
      [&](int q, int doc, int vert) { return policy::relevance_score(gen, q, doc, vert); });
  out.write_text("metrics.txt", rep.to_text());
  std::cout << rep.to_text();
  return kExitOk;
}

int cmd_eval(RunOutputs& out, const CommonOpts& opts, const std::string& model_file) {
  out.write_manifest("eval", "", opts.data_dir, 0, {opts.data_dir, model_file});
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);

  metrics::MetricReport rep;
  if (ckpt::peek_model_tag(model_file) == "generator") {
    auto gen = policy::GeneratorParams::load(model_file);
    rep = evaluate_predictor(
        metrics::predictor_for(gen), d,
        [&](int q, int doc, int vert) { return policy::relevance_score(gen, q, doc, vert); });
  } else {
    auto model = pgm::load(model_file);
    rep = evaluate_predictor(metrics::predictor_for(model), d, [&](int q, int doc, int) {
      return pgm_relevance(model, q, doc);
    });
  }
  out.write_text("metrics.txt", rep.to_text());
  out.write_text("report.tsv", rep.to_tsv());
  std::cout << rep.to_text();
  return kExitOk;
}

int cmd_generate(RunOutputs& out, const CommonOpts& opts, const std::string& model_file,
                 int repeats, const std::string& permute, std::uint64_t seed) {
  out.write_manifest("generate", "", opts.data_dir, seed, {opts.data_dir, model_file});
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);
  auto mode = data::parse_permute_mode(permute);
  check_data(repeats > 0, "--repeats must be positive");

  // Keep the loaded model alive for the sampler's lifetime.
  std::optional<policy::GeneratorParams> gen;
  std::optional<pgm::PgmModel> model;
  metrics::ClickSampler sampler;
  if (ckpt::peek_model_tag(model_file) == "generator") {
    gen.emplace(policy::GeneratorParams::load(model_file));
    sampler = metrics::sampler_for(*gen);
  } else {
    model.emplace(pgm::load(model_file));
    sampler = metrics::sampler_for(*model);
  }

  Rng rng(seed);
  auto synth = metrics::generate_synthetic(d.test, sampler, repeats, mode, rng);

  std::ostringstream lines;
  for (const auto& r : synth) lines << data::serialize_record(r, d) << '\n';
  out.write_text("synthetic.tsv", lines.str());

  std::ostringstream meta;
  meta << "records = " << synth.size() << '\n'
       << "repeats = " << repeats << '\n'
       << "permute = " << permute << '\n';
  out.write_text("metrics.txt", meta.str());
  std::cout << meta.str();
  return kExitOk;
}

int cmd_coverage(RunOutputs& out, const CommonOpts& opts, const std::string& synth_file,
                 const std::string& surrogate, int surrogate_epochs, std::uint64_t seed) {
  out.write_manifest("coverage " + surrogate, "", opts.data_dir, seed,
                     {opts.data_dir, synth_file});
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);

  std::ifstream in(synth_file);
  check_data(in.good(), "cannot open " + synth_file);
  auto synth = data::parse_records(in, d, d.list_len, synth_file);
  check_data(!synth.empty(), "empty synthetic dataset " + synth_file);

  metrics::SurrogateConfig cfg;
  cfg.kind = metrics::parse_surrogate_kind(surrogate);
  cfg.list_len = d.list_len;
  cfg.vocab_sizes.n_query = d.queries.size();
  cfg.vocab_sizes.n_doc = d.docs.size();
  cfg.vocab_sizes.n_vert = d.verticals.size();
  cfg.neural.epochs = surrogate_epochs;
  cfg.neural.seed = seed;

  auto res = metrics::reverse_forward_ppl(synth, d.test, cfg);
  const std::string tsv = coverage_tsv(surrogate, res);
  out.write_text("report.tsv", tsv);
  out.write_text("metrics.txt", tsv);
  std::cout << tsv;
  return kExitOk;
}

int cmd_synth_oracle(RunOutputs& out, const CommonOpts& opts, const std::string& family,
                     int sessions, int queries, int docs, int verts,
                     const std::string& exam_csv, std::uint64_t seed) {
  out.write_manifest("synth-oracle " + family, "", "", seed, {});

  oracle::OracleSpec spec;
  if (family == "pbm") {
    std::vector<double> exam;
    if (exam_csv.empty()) {
      for (int t = 0; t < opts.list_len; ++t) exam.push_back(1.0 / (1.0 + t));
    } else {
      std::istringstream in(exam_csv);
      std::string v;
      while (std::getline(in, v, ',')) {
        try {
          exam.push_back(std::stod(v));
        } catch (const std::exception&) {
          throw DataError("--exam: bad value '" + v + "'");
        }
      }
      check_data(static_cast<int>(exam.size()) == opts.list_len,
                 "--exam needs exactly list-len values");
    }
    spec = oracle::OracleSpec::random_pbm(opts.list_len, queries, docs, verts, exam, seed);
  } else if (family == "sdbn") {
    spec = oracle::OracleSpec::random_sdbn(opts.list_len, queries, docs, verts, seed);
  } else {
    throw DataError("unknown oracle family '" + family + "'");
  }

  Rng rng(seed ^ 0x5eedf00dull);
  auto d = oracle::synth_generate(spec, sessions, rng);

  auto write_split = [&](const std::string& name, const std::vector<data::SerpRecord>& recs) {
    std::ostringstream lines;
    for (const auto& r : recs) lines << data::serialize_record(r, d) << '\n';
    out.write_text(name, lines.str());
  };
  write_split("train.tsv", d.train);
  write_split("valid.tsv", d.valid);
  write_split("test.tsv", d.test);

  auto floor_ppl = oracle::oracle_ppl(spec, d, d.test);
  std::ostringstream meta;
  meta.precision(12);
  meta << "family = " << family << '\n'
       << "sessions = " << sessions << '\n'
       << "oracle_ppl = " << floor_ppl.overall << '\n';
  for (std::size_t t = 0; t < floor_ppl.at_rank.size(); ++t)
    meta << "oracle_ppl@" << (t + 1) << " = " << floor_ppl.at_rank[t] << '\n';
  out.write_text("metrics.txt", meta.str());
  std::cout << meta.str();
  return kExitOk;
}

int cmd_theory_audit(RunOutputs& out, int instances, int horizon, std::uint64_t seed) {
  out.write_manifest("theory-audit", "", "", seed, {});

  std::vector<int> horizons;
  if (horizon > 0)
    horizons.push_back(horizon);
  else
    horizons = {2, 3, 4};

  std::ostringstream tsv, meta;
  meta.precision(12);
  int total_violations = 0;
  bool first = true;
  for (int h : horizons) {
    auto summary = oracle::run_audit(h, instances, seed + static_cast<std::uint64_t>(h));
    std::istringstream rows(summary.to_tsv());
    std::string line;
    std::getline(rows, line);
    if (first) tsv << line << '\n';
    first = false;
    while (std::getline(rows, line)) tsv << line << '\n';
    total_violations += summary.violations;
    meta << "horizon_" << h << "_instances = " << summary.rows.size() << '\n';
    meta << "horizon_" << h << "_violations = " << summary.violations << '\n';
    meta << "horizon_" << h << "_worst_bc_gap = " << summary.worst_bc_gap << '\n';
    meta << "horizon_" << h << "_worst_gail_bound = " << summary.worst_gail_bound << '\n';
  }
  meta << "violations = " << total_violations << '\n';
  out.write_text("report.tsv", tsv.str());
  out.write_text("metrics.txt", meta.str());
  std::cout << meta.str();
  return total_violations == 0 ? kExitOk : kExitAudit;
}

int cmd_export_embeddings(RunOutputs& out, const CommonOpts& opts,
                          const std::string& model_file, int limit) {
  out.write_manifest("export-embeddings", "", opts.data_dir, 0, {opts.data_dir, model_file});
  data::Dataset d = data::load_dataset(opts.data_dir, opts.list_len);
  check_data(ckpt::peek_model_tag(model_file) == "generator",
             "export-embeddings needs a generator checkpoint");
  auto gen = policy::GeneratorParams::load(model_file);

  std::ostringstream emb;
  emb.precision(12);
  for (int id = data::Vocab::kFirstRegularId; id < d.docs.size() && id < gen.sizes.n_doc; ++id) {
    emb << d.docs.token(id);
    for (int j = 0; j < gen.sizes.emb_d; ++j) emb << '\t' << gen.emb.doc.value(id, j);
    emb << '\n';
  }
  out.write_text("embeddings.tsv", emb.str());

  std::ostringstream hidden;
  hidden.precision(12);
  int count = 0;
  for (const auto& r : d.test) {
    if (count++ >= limit) break;
    policy::PolicyState s = policy::init_state(gen, r.query);
    for (int t = 0; t < r.list_len(); ++t) {
      auto o = policy::step(gen, s, r.docs[static_cast<std::size_t>(t)],
                            r.verticals[static_cast<std::size_t>(t)]);
      s = std::move(o.next);
      policy::commit_action(s, r.clicks[static_cast<std::size_t>(t)]);
      hidden << r.session_id << ':' << (t + 1);
      for (int j = 0; j < gen.sizes.hidden; ++j) hidden << '\t' << s.hidden[j];
      hidden << '\n';
    }
  }
  out.write_text("hidden_states.tsv", hidden.str());
  std::cout << "exported doc embeddings and hidden states to " << opts.out_dir << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clicksim: click-model workbench (adversarial imitation + PGM baselines)"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* stats = app.add_subcommand("stats", "dataset statistics report");
  stats->add_option("--data", opts.data_dir, "dataset directory")->required();
  stats->add_option("--out", opts.out_dir, "output directory")->required();
  stats->add_option("--list-len", opts.list_len, "ranked list length");

  std::string pgm_model = "pbm";
  auto* fit = app.add_subcommand("fit-pgm", "fit a PGM click model baseline");
  fit->add_option("--model", pgm_model, "pbm|ubm|dcm|sdbn")->required();
  fit->add_option("--data", opts.data_dir, "dataset directory")->required();
  fit->add_option("--out", opts.out_dir, "output directory")->required();
  fit->add_option("--list-len", opts.list_len, "ranked list length");
  fit->add_option("--config", opts.config_file, "training config")->check(CLI::ExistingFile);
  add_config_flag(fit, opts, "--seed", "seed", "rng seed");

  auto* pre = app.add_subcommand("pretrain", "MLE (behavior-cloning) pretraining");
  pre->add_option("--data", opts.data_dir, "dataset directory")->required();
  pre->add_option("--out", opts.out_dir, "output directory")->required();
  pre->add_option("--list-len", opts.list_len, "ranked list length");
  pre->add_option("--emb-size", opts.emb_size, "embedding size (all features)");
  pre->add_option("--hidden-size", opts.hidden_size, "GRU hidden size");
  add_train_flags(pre, opts);

  std::string init_dir;
  auto* gail = app.add_subcommand("train-gail", "adversarial imitation training");
  gail->add_option("--data", opts.data_dir, "dataset directory")->required();
  gail->add_option("--out", opts.out_dir, "output directory")->required();
  gail->add_option("--init", init_dir, "directory with model.ckpt/disc.ckpt to start from");
  gail->add_option("--list-len", opts.list_len, "ranked list length");
  gail->add_option("--emb-size", opts.emb_size, "embedding size (all features)");
  gail->add_option("--hidden-size", opts.hidden_size, "GRU hidden size");
  add_train_flags(gail, opts);

  std::string model_file;
  auto* eval = app.add_subcommand("eval", "LL/PPL/NDCG evaluation of a checkpoint");
  eval->add_option("--model", model_file, "model checkpoint")->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", opts.data_dir, "dataset directory")->required();
  eval->add_option("--out", opts.out_dir, "output directory")->required();
  eval->add_option("--list-len", opts.list_len, "ranked list length");

  int repeats = 7;
  std::string permute = "none";
  std::uint64_t cli_seed = 1;
  auto* gen = app.add_subcommand("generate", "sample a synthetic click dataset");
  gen->add_option("--model", model_file, "model checkpoint")->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--data", opts.data_dir, "dataset directory")->required();
  gen->add_option("--out", opts.out_dir, "output directory")->required();
  gen->add_option("--repeats", repeats, "samples per test record");
  gen->add_option("--permute", permute, "none|half|full");
  gen->add_option("--seed", cli_seed, "rng seed");
  gen->add_option("--list-len", opts.list_len, "ranked list length");

  std::string synth_file, surrogate = "ubm";
  int surrogate_epochs = 3;
  auto* cov = app.add_subcommand("coverage", "Reverse/Forward PPL via a surrogate");
  cov->add_option("--synth", synth_file, "synthetic dataset file")->required()
      ->check(CLI::ExistingFile);
  cov->add_option("--data", opts.data_dir, "real dataset directory")->required();
  cov->add_option("--out", opts.out_dir, "output directory")->required();
  cov->add_option("--surrogate", surrogate, "ubm|neural");
  cov->add_option("--surrogate-epochs", surrogate_epochs, "neural surrogate training epochs");
  cov->add_option("--seed", cli_seed, "rng seed");
  cov->add_option("--list-len", opts.list_len, "ranked list length");

  std::string family = "pbm", exam_csv;
  int sessions = 10000, queries = 20, docs = 50, verts = 3;
  auto* synth = app.add_subcommand("synth-oracle", "generate a ground-truth oracle dataset");
  synth->add_option("--family", family, "pbm|sdbn");
  synth->add_option("--sessions", sessions, "number of sessions");
  synth->add_option("--list-len", opts.list_len, "ranked list length");
  synth->add_option("--queries", queries, "query vocabulary size");
  synth->add_option("--docs", docs, "document vocabulary size");
  synth->add_option("--verts", verts, "vertical vocabulary size");
  synth->add_option("--exam", exam_csv, "comma-separated per-rank examination probs (pbm)");
  synth->add_option("--seed", cli_seed, "rng seed");
  synth->add_option("--out", opts.out_dir, "output dataset directory")->required();

  int instances = 1000, horizon = 0;
  auto* audit = app.add_subcommand("theory-audit",
                                   "verify the utility-gap bounds by exact enumeration");
  audit->add_option("--instances", instances, "random instances per horizon");
  audit->add_option("--horizon", horizon, "single horizon (default: 2,3,4)");
  audit->add_option("--seed", cli_seed, "rng seed");
  audit->add_option("--out", opts.out_dir, "output directory")->required();

  int limit = 100;
  auto* exp = app.add_subcommand("export-embeddings", "dump embeddings and hidden states");
  exp->add_option("--model", model_file, "generator checkpoint")->required()
      ->check(CLI::ExistingFile);
  exp->add_option("--data", opts.data_dir, "dataset directory")->required();
  exp->add_option("--out", opts.out_dir, "output directory")->required();
  exp->add_option("--limit", limit, "max test records for hidden-state export");
  exp->add_option("--list-len", opts.list_len, "ranked list length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  // Environment override for every seeded command.
  if (const char* env = std::getenv("CLICKSIM_SEED")) {
    try {
      cli_seed = std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "error: CLICKSIM_SEED is not an integer\n";
      return kExitUsage;
    }
  }

  auto guarded = [&](const std::function<int(RunOutputs&)>& body) {
    return run_guarded(opts.out_dir, body);
  };

  if (*stats) return guarded([&](RunOutputs& o) { return cmd_stats(o, opts); });
  if (*fit) return guarded([&](RunOutputs& o) { return cmd_fit_pgm(o, opts, pgm_model); });
  if (*pre) return guarded([&](RunOutputs& o) { return cmd_pretrain(o, opts); });
  if (*gail) return guarded([&](RunOutputs& o) { return cmd_train_gail(o, opts, init_dir); });
  if (*eval) return guarded([&](RunOutputs& o) { return cmd_eval(o, opts, model_file); });
  if (*gen)
    return guarded([&](RunOutputs& o) {
      return cmd_generate(o, opts, model_file, repeats, permute, cli_seed);
    });
  if (*cov)
    return guarded([&](RunOutputs& o) {
      return cmd_coverage(o, opts, synth_file, surrogate, surrogate_epochs, cli_seed);
    });
  if (*synth)
    return guarded([&](RunOutputs& o) {
      return cmd_synth_oracle(o, opts, family, sessions, queries, docs, verts, exam_csv,
                              cli_seed);
    });
  if (*audit)
    return guarded([&](RunOutputs& o) { return cmd_theory_audit(o, instances, horizon, cli_seed); });
  if (*exp)
    return guarded([&](RunOutputs& o) { return cmd_export_embeddings(o, opts, model_file, limit); });
  return kExitUsage;
}
