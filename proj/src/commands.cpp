#include "hyqe/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "hyqe/parallel.hpp"

namespace hyqe {

using nlohmann::json;

namespace {

class StageTimer {
 public:
  StageTimer(RunManifest& manifest, std::string stage)
      : manifest_(manifest), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    manifest_.timings_s[stage_] += elapsed.count();
  }

 private:
  RunManifest& manifest_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

std::string format6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct LoadedInputs {
  std::vector<CandidateList> lists;
};

LoadedInputs load_inputs(Workspace& ws, const RankInputs& inputs, RunManifest& manifest) {
  StageTimer t(manifest, "load");
  manifest.inputs["corpus"] = inputs.corpus_path;
  manifest.inputs["queries"] = inputs.queries_path;
  manifest.inputs["baseline_run"] = inputs.baseline_run_path;
  const auto corpus = load_corpus(inputs.corpus_path);
  const auto queries = load_queries(inputs.queries_path);
  const auto baseline = read_run(inputs.baseline_run_path);
  return {build_candidate_lists(corpus, queries, baseline, ws.config().pipeline.retrieval_depth)};
}

std::vector<PreparedQuery> prepare_all(Workspace& ws, const std::vector<CandidateList>& lists,
                                       RunManifest& manifest) {
  StageTimer t(manifest, "prepare");
  const auto deps = ws.deps();
  std::vector<std::optional<PreparedQuery>> slots(lists.size());
  parallel_for(lists.size(), ws.config().query_concurrency,
               [&](std::size_t i) { slots[i] = prepare_for_mode(lists[i], ws.config().pipeline, deps); });
  std::vector<PreparedQuery> prepared;
  prepared.reserve(slots.size());
  for (auto& s : slots) {
    for (const auto& inc : s->incidents) manifest.incidents.push_back(inc);
    prepared.push_back(std::move(*s));
  }
  return prepared;
}

RankedRun order_all(const std::vector<PreparedQuery>& prepared, const ScoreConfig& score, const std::string& tag) {
  RankedRun run;
  run.tag = tag;
  for (const auto& p : prepared) run.rankings[p.query.id] = order(p, score).ranking;
  return run;
}

void finish(Workspace& ws, RunManifest& manifest) {
  ws.store().flush();
  const auto fresh = ws.manifest(manifest.command);
  manifest.config = fresh.config;
  manifest.generator_calls = fresh.generator_calls;
  manifest.embedder_calls = fresh.embedder_calls;
  manifest.texts_embedded = fresh.texts_embedded;
  manifest.cache = fresh.cache;
}

}  // namespace

json RunManifest::to_json() const {
  json incidents_json = json::array();
  for (const auto& i : incidents) {
    incidents_json.push_back(
        {{"query_id", i.query_id}, {"context_id", i.context_id}, {"kind", i.kind}, {"message", i.message}});
  }
  return {{"command", command},
          {"config", config},
          {"inputs", inputs},
          {"outputs", outputs},
          {"timings_s", timings_s},
          {"provider_calls",
           {{"generator", generator_calls}, {"embedder", embedder_calls}, {"texts_embedded", texts_embedded}}},
          {"cache",
           {{"records", cache.records},
            {"queries", cache.queries},
            {"hits", cache.hits},
            {"misses", cache.misses},
            {"reembedded", cache.reembedded}}},
          {"incidents", std::move(incidents_json)},
          {"results", results}};
}

Workspace::Workspace(AppConfig config, Providers providers, std::shared_ptr<HypotheticalQueryStore> store)
    : config_(std::move(config)), providers_(std::move(providers)), store_(std::move(store)) {
  if (!providers_.generator || !providers_.embedder || !store_) {
    throw PreconditionError("workspace needs a generator, an embedder and a store");
  }
  config_.resolve_defaults();
  generator_calls_at_start_ = providers_.generator->call_count();
  embedder_calls_at_start_ = providers_.embedder->call_count();
  texts_at_start_ = providers_.embedder->texts_embedded();
  cache_at_start_ = store_->stats();
}

Workspace Workspace::from_config(AppConfig config, const std::optional<std::string>& cache_dir) {
  auto providers = make_providers(config.providers);
  auto store = cache_dir ? std::make_shared<HypotheticalQueryStore>(*cache_dir)
                         : std::make_shared<HypotheticalQueryStore>();
  return Workspace(std::move(config), std::move(providers), std::move(store));
}

PipelineDeps Workspace::deps() const {
  PipelineDeps deps;
  deps.generation.generator = providers_.generator.get();
  deps.generation.embedder = providers_.embedder.get();
  deps.generation.prompt_template = PromptTemplate::load(config_.pipeline.template_id, config_.templates_dir);
  deps.generation.params = config_.generation;
  deps.generation.wrapper = PromptWrapper::builtin(config_.wrapper_id);
  deps.store = store_.get();
  deps.hyde_template = PromptTemplate::load("hyde-default", config_.templates_dir);
  return deps;
}

RunManifest Workspace::manifest(const std::string& command) const {
  RunManifest m;
  m.command = command;
  m.config = config_.to_json();
  m.generator_calls = providers_.generator->call_count() - generator_calls_at_start_;
  m.embedder_calls = providers_.embedder->call_count() - embedder_calls_at_start_;
  m.texts_embedded = providers_.embedder->texts_embedded() - texts_at_start_;
  const auto now = store_->stats();
  m.cache.records = now.records;
  m.cache.queries = now.queries;
  m.cache.hits = now.hits - cache_at_start_.hits;
  m.cache.misses = now.misses - cache_at_start_.misses;
  m.cache.reembedded = now.reembedded - cache_at_start_.reembedded;
  return m;
}

std::vector<CandidateList> build_candidate_lists(const Corpus& corpus, const std::vector<Query>& queries,
                                                 const RankedRun& baseline, std::size_t retrieval_depth) {
  std::map<std::string, const Query*> by_id;
  for (const auto& q : queries) by_id.emplace(q.id, &q);
  std::vector<CandidateList> lists;
  lists.reserve(baseline.rankings.size());
  for (const auto& [qid, ranking] : baseline.rankings) {
    const auto q = by_id.find(qid);
    if (q == by_id.end()) throw ParseError("baseline run references unknown query id '" + qid + "'");
    CandidateList list{*q->second, {}};
    for (std::size_t i = 0; i < std::min(retrieval_depth, ranking.size()); ++i) {
      const auto* doc = corpus.find(ranking[i].context_id);
      if (!doc) {
        throw ParseError("baseline run references unknown document id '" + ranking[i].context_id + "' (query " +
                         qid + ")");
      }
      list.candidates.push_back({*doc, ranking[i].score});
    }
    if (!list.candidates.empty()) lists.push_back(std::move(list));
  }
  return lists;
}

RunManifest cmd_pregen(Workspace& ws, const std::string& corpus_path) {
  RunManifest manifest;
  manifest.command = "pregen";
  manifest.inputs["corpus"] = corpus_path;
  if (ws.store().root()) manifest.outputs["cache"] = ws.store().root()->string();
  Corpus corpus;
  {
    StageTimer t(manifest, "load");
    corpus = load_corpus(corpus_path);
  }
  std::vector<std::optional<Incident>> failures(corpus.docs.size());
  {
    StageTimer t(manifest, "generate");
    const auto deps = ws.deps();
    parallel_for(corpus.docs.size(), ws.config().providers.openai.concurrency, [&](std::size_t i) {
      try {
        ws.store().get_or_generate(corpus.docs[i], deps.generation);
      } catch (const ProviderError& e) {
        failures[i] = Incident{"", corpus.docs[i].id, e.kind(), e.what()};
      } catch (const WindowExceededError& e) {
        failures[i] = Incident{"", corpus.docs[i].id, e.kind(), e.what()};
      }
    });
  }
  for (auto& f : failures) {
    if (f) manifest.incidents.push_back(std::move(*f));
  }
  finish(ws, manifest);
  manifest.results = {{"contexts", corpus.docs.size()}, {"failed", manifest.incidents.size()}};
  if (!manifest.incidents.empty()) {
    throw ProviderError(std::to_string(manifest.incidents.size()) + " of " + std::to_string(corpus.docs.size()) +
                            " contexts failed; completed records are stored, rerun to resume (first: " +
                            manifest.incidents.front().message + ")",
                        true);
  }
  return manifest;
}

RunManifest cmd_rank(Workspace& ws, const RankInputs& inputs, const std::string& out_run_path) {
  RunManifest manifest;
  manifest.command = "rank";
  const auto loaded = load_inputs(ws, inputs, manifest);
  const auto deps = ws.deps();
  std::vector<std::optional<RankResult>> results(loaded.lists.size());
  {
    StageTimer t(manifest, "rerank");
    parallel_for(loaded.lists.size(), ws.config().query_concurrency,
                 [&](std::size_t i) { results[i] = rerank(loaded.lists[i], ws.config().pipeline, deps); });
  }
  RankedRun run;
  run.tag = ws.config().run_tag;
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (const auto& inc : results[i]->incidents) manifest.incidents.push_back(inc);
    run.rankings[loaded.lists[i].query.id] = std::move(results[i]->ranking);
  }
  {
    StageTimer t(manifest, "write");
    write_run(run, out_run_path);
  }
  manifest.outputs["run"] = out_run_path;
  finish(ws, manifest);
  manifest.results = {{"queries", run.rankings.size()}};
  return manifest;
}

RunManifest cmd_eval(const std::string& run_path, const std::string& qrels_path, std::size_t k,
                     EvaluationReport* report_out) {
  RunManifest manifest;
  manifest.command = "eval";
  manifest.inputs = {{"run", run_path}, {"qrels", qrels_path}};
  EvaluationReport report;
  {
    StageTimer t(manifest, "evaluate");
    report = evaluate(read_run(run_path), load_qrels(qrels_path), k);
  }
  manifest.config = {{"k", k}};
  manifest.results = {{"k", k},
                      {"mean", report.mean},
                      {"per_query", report.per_query},
                      {"skipped", report.skipped},
                      {"missing", report.missing}};
  if (report_out) *report_out = std::move(report);
  return manifest;
}

RunManifest cmd_sweep(Workspace& ws, const RankInputs& inputs, const std::string& qrels_path,
                      const std::vector<double>& lambdas, std::vector<SweepRow>* rows_out) {
  RunManifest manifest;
  manifest.command = "sweep";
  manifest.inputs["qrels"] = qrels_path;
  const auto loaded = load_inputs(ws, inputs, manifest);
  const auto qrels = load_qrels(qrels_path);
  const auto prepared = prepare_all(ws, loaded.lists, manifest);
  std::vector<SweepRow> rows;
  {
    StageTimer t(manifest, "score");
    for (double lambda : lambdas) {
      auto score = ws.config().pipeline.score;
      score.lambda = lambda;
      const auto run = order_all(prepared, score, ws.config().run_tag);
      rows.push_back({lambda, evaluate(run, qrels, ws.config().eval_k).mean});
    }
  }
  finish(ws, manifest);
  json table = json::array();
  for (const auto& r : rows) table.push_back({{"lambda", r.lambda}, {"mean_ndcg", r.mean_ndcg}});
  manifest.results = {{"k", ws.config().eval_k}, {"table", std::move(table)}};
  if (rows_out) *rows_out = std::move(rows);
  return manifest;
}

RunManifest cmd_downsample(Workspace& ws, const RankInputs& inputs, const std::string& qrels_path,
                           const std::vector<double>& ratios, std::size_t trials, std::uint64_t base_seed,
                           std::vector<DownsampleRow>* rows_out) {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  RunManifest manifest;
  manifest.command = "downsample";
  manifest.inputs["qrels"] = qrels_path;
  const auto loaded = load_inputs(ws, inputs, manifest);
  const auto qrels = load_qrels(qrels_path);
  const auto prepared = prepare_all(ws, loaded.lists, manifest);
  std::vector<DownsampleRow> rows;
  {
    StageTimer t(manifest, "score");
    for (double ratio : ratios) {
      DownsampleRow row{ratio, 0.0, 0.0, {}};
      for (std::size_t trial = 0; trial < trials; ++trial) {
        auto score = ws.config().pipeline.score;
        score.downsample = DownsampleConfig{ratio, base_seed + trial};
        const auto run = order_all(prepared, score, ws.config().run_tag);
        row.trial_ndcg.push_back(evaluate(run, qrels, ws.config().eval_k).mean);
      }
      for (double v : row.trial_ndcg) row.mean_ndcg += v;
      row.mean_ndcg /= static_cast<double>(trials);
      for (double v : row.trial_ndcg) row.stddev += (v - row.mean_ndcg) * (v - row.mean_ndcg);
      row.stddev = std::sqrt(row.stddev / static_cast<double>(trials));
      rows.push_back(std::move(row));
    }
  }
  finish(ws, manifest);
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"ratio", r.ratio}, {"mean_ndcg", r.mean_ndcg}, {"stddev", r.stddev}, {"trials", r.trial_ndcg}});
  }
  manifest.results = {{"k", ws.config().eval_k}, {"trials", trials}, {"base_seed", base_seed}, {"table", std::move(table)}};
  if (rows_out) *rows_out = std::move(rows);
  return manifest;
}

RunManifest cmd_export_embeddings(Workspace& ws, const RankInputs& inputs, const std::string& out_path) {
  RunManifest manifest;
  manifest.command = "export-embeddings";
  const auto loaded = load_inputs(ws, inputs, manifest);
  const auto prepared = prepare_all(ws, loaded.lists, manifest);
  StageTimer t(manifest, "write");
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + out_path);
  auto row = [&](const char* role, const std::string& id, const std::string& parent, const std::string& qid,
                 const Embedding& e) {
    out << role << '\t' << id << '\t' << parent << '\t' << qid << '\t';
    for (std::size_t d = 0; d < e.dim(); ++d) out << (d ? "," : "") << format_double(e[d]);
    out << '\n';
  };
  out << "role\tid\tparent_id\tquery_id\tvalues\n";
  std::size_t rows = 0;
  for (const auto& p : prepared) {
    row("query", p.query.id, "", p.query.id, p.query_embedding);
    ++rows;
    for (const auto& c : p.head) {
      if (c.context_embedding) {
        row("context", c.context_id, "", p.query.id, *c.context_embedding);
        ++rows;
      }
      if (!c.hyps.embeddings) continue;
      for (std::size_t h = 0; h < c.hyps.queries.size(); ++h) {
        row("hypothetical_query", c.context_id + "#" + std::to_string(h), c.context_id, p.query.id,
            (*c.hyps.embeddings)[h]);
        ++rows;
      }
    }
  }
  manifest.outputs["embeddings"] = out_path;
  finish(ws, manifest);
  manifest.results = {{"rows", rows}};
  return manifest;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows, std::size_t k) {
  std::string out = "lambda\tndcg@" + std::to_string(k) + "\n";
  for (const auto& r : rows) out += format_double(r.lambda) + "\t" + format6(r.mean_ndcg) + "\n";
  return out;
}

std::string format_downsample_table(const std::vector<DownsampleRow>& rows, std::size_t k) {
  std::string out = "ratio\tndcg@" + std::to_string(k) + "\tstddev\ttrials\n";
  for (const auto& r : rows) {
    out += format_double(r.ratio) + "\t" + format6(r.mean_ndcg) + "\t" + format6(r.stddev) + "\t" +
           std::to_string(r.trial_ndcg.size()) + "\n";
  }
  return out;
}

}  // namespace hyqe
