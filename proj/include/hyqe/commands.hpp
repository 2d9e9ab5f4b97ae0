#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hyqe/cache.hpp"
#include "hyqe/config.hpp"
#include "hyqe/eval.hpp"
#include "hyqe/pipeline.hpp"

namespace hyqe {

/// Record of one command invocation: the effective configuration, files
/// read and written, wall-clock time per stage, provider call counts and
/// cache counters.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::map<std::string, double> timings_s;
  std::size_t generator_calls = 0;
  std::size_t embedder_calls = 0;
  std::size_t texts_embedded = 0;
  CacheStats cache;
  std::vector<Incident> incidents;
  nlohmann::json results;

  nlohmann::json to_json() const;
};

/// Configured providers, prompt material and hypothetical-query store
/// shared by every command.
class Workspace {
 public:
  Workspace(AppConfig config, Providers providers, std::shared_ptr<HypotheticalQueryStore> store);

  /// Providers from config.providers; store at `cache_dir`, or in memory.
  static Workspace from_config(AppConfig config, const std::optional<std::string>& cache_dir);

  const AppConfig& config() const noexcept { return config_; }
  AppConfig& mutable_config() noexcept { return config_; }
  const Providers& providers() const noexcept { return providers_; }
  HypotheticalQueryStore& store() const noexcept { return *store_; }

  PipelineDeps deps() const;
  /// Manifest with config snapshot and counters measured since construction.
  RunManifest manifest(const std::string& command) const;

 private:
  AppConfig config_;
  Providers providers_;
  std::shared_ptr<HypotheticalQueryStore> store_;
  std::size_t generator_calls_at_start_;
  std::size_t embedder_calls_at_start_;
  std::size_t texts_at_start_;
  CacheStats cache_at_start_;
};

/// Files that describe a first-stage retrieval run to be reranked.
struct RankInputs {
  std::string corpus_path;
  std::string queries_path;
  std::string baseline_run_path;
};

/// Candidate lists built from a baseline run (first retrieval_depth entries
/// per query), in query-id order. Unknown query or document ids raise
/// ParseError naming the id.
std::vector<CandidateList> build_candidate_lists(const Corpus& corpus, const std::vector<Query>& queries,
                                                 const RankedRun& baseline, std::size_t retrieval_depth);

RunManifest cmd_pregen(Workspace& ws, const std::string& corpus_path);

RunManifest cmd_rank(Workspace& ws, const RankInputs& inputs, const std::string& out_run_path);

RunManifest cmd_eval(const std::string& run_path, const std::string& qrels_path, std::size_t k,
                     EvaluationReport* report_out = nullptr);

struct SweepRow {
  double lambda = 0.0;
  double mean_ndcg = 0.0;
};

/// Mean NDCG@k per lambda; H(c) is fetched once per query and reused.
RunManifest cmd_sweep(Workspace& ws, const RankInputs& inputs, const std::string& qrels_path,
                      const std::vector<double>& lambdas, std::vector<SweepRow>* rows_out = nullptr);

struct DownsampleRow {
  double ratio = 1.0;
  double mean_ndcg = 0.0;
  double stddev = 0.0;
  std::vector<double> trial_ndcg;
};

/// Mean NDCG@k per ratio over `trials` seeds (base_seed, base_seed + 1, ...).
RunManifest cmd_downsample(Workspace& ws, const RankInputs& inputs, const std::string& qrels_path,
                           const std::vector<double>& ratios, std::size_t trials, std::uint64_t base_seed,
                           std::vector<DownsampleRow>* rows_out = nullptr);

/// Tab-separated "role id parent_id query_id v1,v2,..." rows for the query,
/// its head contexts and their hypothetical queries.
RunManifest cmd_export_embeddings(Workspace& ws, const RankInputs& inputs, const std::string& out_path);

std::string format_sweep_table(const std::vector<SweepRow>& rows, std::size_t k);
std::string format_downsample_table(const std::vector<DownsampleRow>& rows, std::size_t k);

}  // namespace hyqe
