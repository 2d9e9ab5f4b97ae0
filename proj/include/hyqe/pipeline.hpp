#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hyqe/cache.hpp"
#include "hyqe/core.hpp"
#include "hyqe/scoring.hpp"

namespace hyqe {

enum class HydeMode { off, plus, times };

const char* to_string(HydeMode mode) noexcept;
HydeMode hyde_mode_from_string(const std::string& name);

struct PipelineConfig {
  std::size_t k = 30;
  std::size_t retrieval_depth = 100;
  ScoreConfig score;
  std::string template_id = "default";
  HydeMode hyde = HydeMode::off;
  std::size_t hyde_n_contexts = 4;
  bool strict = false;           // abort on provider failure instead of falling back
  std::size_t concurrency = 8;   // in-flight H(c) acquisitions per query

  void validate() const;
};

struct Candidate {
  ContextDoc doc;
  double baseline_score = 0.0;
};

/// The first-stage candidates for one query, best first.
struct CandidateList {
  Query query;
  std::vector<Candidate> candidates;

  void validate() const;
};

struct PipelineDeps {
  GenerationDeps generation;
  HypotheticalQueryStore* store = nullptr;
  PromptTemplate hyde_template = PromptTemplate::hyde_template();
};

/// A context whose H(c) could not be obtained, or that could not be scored
/// at all; it keeps a fallback score and the run continues.
struct Incident {
  std::string query_id;
  std::string context_id;
  std::string kind;
  std::string message;
};

struct PreparedCandidate {
  std::string context_id;
  double baseline_score = 0.0;
  std::optional<Embedding> context_embedding;  // unset for empty contexts
  HypotheticalQuerySet hyps;                   // embeddings populated
};

/// Everything scoring needs for one query: the query embedding and, for the
/// reranked head, context embeddings and H(c). Independent of ScoreConfig,
/// so one preparation serves any number of lambda or downsample settings.
struct PreparedQuery {
  Query query;
  Embedding query_embedding;
  std::vector<PreparedCandidate> head;
  std::vector<std::pair<std::string, double>> tail;  // (id, baseline score)
  std::vector<Incident> incidents;
};

struct RankResult {
  std::vector<ScoredContext> ranking;
  /// Aligned with ranking; unset for tail entries and fallback contexts.
  std::vector<std::optional<ScoreBreakdown>> breakdowns;
  std::vector<std::string> best_hypothetical_query;  // empty string when none
  std::vector<Incident> incidents;
};

/// Embeds the query (unless `query_embedding` is given) and the first k
/// contexts, and fetches or generates H(c) for each of them.
PreparedQuery prepare(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps,
                      std::optional<Embedding> query_embedding = std::nullopt);

/// Scores the head, orders it by total (ties: earlier baseline position,
/// then smaller id) and appends the tail in baseline order. Tail scores are
/// shifted down when needed so scores never increase with rank.
RankResult order(const PreparedQuery& prepared, const ScoreConfig& cfg);

RankResult rank(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps);

/// Mean of the query embedding and the embeddings of `n` generated
/// hypothetical contexts (n + 1 vectors).
Embedding hyde_query_embedding(const Query& query, const TextGenerator& generator, const Embedder& embedder,
                               std::size_t n, const GenerationParams& params = {},
                               const PromptWrapper& wrapper = PromptWrapper::openai_system(),
                               const PromptTemplate& tpl = PromptTemplate::hyde_template());

/// plus: identical to rank(). times: the averaged hypothetical-context
/// embedding replaces the query embedding in both score terms.
RankResult compose_hyde(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps);

/// prepare() with the query embedding chosen by cfg.hyde (averaged
/// hypothetical-context embedding in times mode).
PreparedQuery prepare_for_mode(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps);

/// rank() or compose_hyde() according to cfg.hyde.
RankResult rerank(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps);

}  // namespace hyqe
