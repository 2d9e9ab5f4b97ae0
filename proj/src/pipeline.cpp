#include "hyqe/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include "hyqe/parallel.hpp"

namespace hyqe {

namespace {

std::string embedding_text(const ContextDoc& doc) {
  if (doc.title && !doc.title->empty()) {
    return doc.text.empty() ? *doc.title : *doc.title + " " + doc.text;
  }
  return doc.text;
}

}  // namespace

const char* to_string(HydeMode mode) noexcept {
  switch (mode) {
    case HydeMode::off: return "off";
    case HydeMode::plus: return "plus";
    case HydeMode::times: return "times";
  }
  return "off";
}

HydeMode hyde_mode_from_string(const std::string& name) {
  if (name == "off") return HydeMode::off;
  if (name == "plus") return HydeMode::plus;
  if (name == "times") return HydeMode::times;
  throw ConfigError("unknown hyde mode '" + name + "'");
}

void PipelineConfig::validate() const {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (retrieval_depth < 1) throw ConfigError("retrieval_depth must be >= 1");
  if (k > retrieval_depth) throw ConfigError("k must not exceed retrieval_depth");
  if (hyde_n_contexts < 1) throw ConfigError("hyde_n_contexts must be >= 1");
  score.validate();
}

void CandidateList::validate() const {
  hyqe::validate(query);
  if (candidates.empty()) throw PreconditionError("query " + query.id + " has no candidates");
  std::unordered_set<std::string_view> ids;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!ids.insert(candidates[i].doc.id).second) {
      throw DuplicateIdError("duplicate candidate '" + candidates[i].doc.id + "' for query " + query.id);
    }
    if (i > 0 && candidates[i].baseline_score > candidates[i - 1].baseline_score) {
      throw InvalidInputError("baseline scores increase at position " + std::to_string(i + 1) +
                              " for query " + query.id);
    }
  }
}

PreparedQuery prepare(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps,
                      std::optional<Embedding> query_embedding) {
  candidates.validate();
  if (!deps.store || !deps.generation.generator || !deps.generation.embedder) {
    throw PreconditionError("pipeline deps need a store, a generator and an embedder");
  }
  const auto& embedder = *deps.generation.embedder;
  const auto& list = candidates.candidates;
  const std::size_t head_size = std::min(cfg.k, list.size());

  if (!query_embedding) {
    const std::string text = candidates.query.text;
    query_embedding = embedder.embed(std::span(&text, 1)).front();
  }
  PreparedQuery prepared{candidates.query, std::move(*query_embedding), {}, {}, {}};

  std::vector<std::string> texts;
  std::vector<std::size_t> embedded_positions;
  for (std::size_t i = 0; i < head_size; ++i) {
    auto text = embedding_text(list[i].doc);
    if (!trim(text).empty()) {
      texts.push_back(std::move(text));
      embedded_positions.push_back(i);
    }
  }
  auto context_embeddings = embed_all(embedder, texts);

  prepared.head.resize(head_size);
  for (std::size_t i = 0; i < head_size; ++i) {
    prepared.head[i].context_id = list[i].doc.id;
    prepared.head[i].baseline_score = list[i].baseline_score;
  }
  for (std::size_t j = 0; j < embedded_positions.size(); ++j) {
    prepared.head[embedded_positions[j]].context_embedding = std::move(context_embeddings[j]);
  }

  // Acquire H(c). Only fan out when more than one context needs generation.
  std::vector<std::optional<Incident>> failures(head_size);
  auto acquire = [&](std::size_t i) {
    const auto& doc = list[i].doc;
    try {
      prepared.head[i].hyps = deps.store->get_or_generate(doc, deps.generation).to_query_set();
    } catch (const ProviderError& e) {
      if (cfg.strict) throw;
      failures[i] = Incident{candidates.query.id, doc.id, e.kind(), e.what()};
    } catch (const WindowExceededError& e) {
      if (cfg.strict) throw;
      failures[i] = Incident{candidates.query.id, doc.id, e.kind(), e.what()};
    }
  };
  const auto embedder_name = embedder.name();
  std::size_t cold = 0;
  for (std::size_t i = 0; i < head_size; ++i) {
    const auto rec = deps.store->get(deps.generation.key_for(list[i].doc.id));
    if (!rec || rec->embedder_name != embedder_name) ++cold;
  }
  parallel_for(head_size, cold > 1 ? cfg.concurrency : 1, acquire);

  for (std::size_t i = 0; i < head_size; ++i) {
    auto& c = prepared.head[i];
    if (failures[i]) {
      prepared.incidents.push_back(std::move(*failures[i]));
      c.hyps = HypotheticalQuerySet{c.context_id, deps.generation.key_for(c.context_id).fingerprint, {},
                                    std::vector<Embedding>{}};
    }
    if (!c.context_embedding) {
      prepared.incidents.push_back({candidates.query.id, c.context_id, "EmptyContext", "context has no text; baseline score kept"});
    }
  }
  for (std::size_t i = head_size; i < list.size(); ++i) {
    prepared.tail.emplace_back(list[i].doc.id, list[i].baseline_score);
  }
  return prepared;
}

RankResult order(const PreparedQuery& prepared, const ScoreConfig& cfg) {
  cfg.validate();
  struct Row {
    std::size_t position;
    double total;
    std::optional<ScoreBreakdown> breakdown;
    std::string best_query;
  };
  std::vector<Row> rows;
  rows.reserve(prepared.head.size());
  for (std::size_t i = 0; i < prepared.head.size(); ++i) {
    const auto& c = prepared.head[i];
    if (!c.context_embedding) {
      rows.push_back({i, c.baseline_score, std::nullopt, {}});
      continue;
    }
    const HypotheticalQuerySet* hyps = &c.hyps;
    HypotheticalQuerySet sampled;
    if (cfg.downsample && cfg.downsample->ratio < 1.0) {
      sampled = downsample(c.hyps, cfg.downsample->ratio, context_seed(cfg.downsample->seed, c.context_id));
      hyps = &sampled;
    }
    static const std::vector<Embedding> kNone;
    const auto& embs = hyps->embeddings ? *hyps->embeddings : kNone;
    auto breakdown = score(prepared.query_embedding, *c.context_embedding, embs, cfg);
    std::string best = breakdown.best_hyp_index ? hyps->queries[*breakdown.best_hyp_index] : std::string();
    rows.push_back({i, breakdown.total, breakdown, std::move(best)});
  }
  std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    if (a.total != b.total) return a.total > b.total;
    if (a.position != b.position) return a.position < b.position;
    return prepared.head[a.position].context_id < prepared.head[b.position].context_id;
  });

  RankResult out;
  out.incidents = prepared.incidents;
  const std::size_t n = rows.size() + prepared.tail.size();
  out.ranking.reserve(n);
  out.breakdowns.reserve(n);
  out.best_hypothetical_query.reserve(n);
  for (auto& row : rows) {
    out.ranking.push_back({prepared.head[row.position].context_id, row.total, out.ranking.size() + 1});
    out.breakdowns.push_back(row.breakdown);
    out.best_hypothetical_query.push_back(std::move(row.best_query));
  }
  if (!prepared.tail.empty()) {
    double shift = 0.0;
    if (!out.ranking.empty()) shift = std::max(0.0, prepared.tail.front().second - out.ranking.back().score);
    for (const auto& [id, baseline] : prepared.tail) {
      out.ranking.push_back({id, baseline - shift, out.ranking.size() + 1});
      out.breakdowns.emplace_back();
      out.best_hypothetical_query.emplace_back();
    }
  }
  return out;
}

RankResult rank(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps) {
  cfg.validate();
  return order(prepare(candidates, cfg, deps), cfg.score);
}

Embedding hyde_query_embedding(const Query& query, const TextGenerator& generator, const Embedder& embedder,
                               std::size_t n, const GenerationParams& params, const PromptWrapper& wrapper,
                               const PromptTemplate& tpl) {
  if (n < 1) throw PreconditionError("hypothetical context count must be >= 1");
  hyqe::validate(query);
  const auto prompt = tpl.render(query.text);
  std::vector<std::string> texts{query.text};
  for (std::size_t i = 0; i < n; ++i) {
    auto passage = std::string(trim(generator.generate(prompt, params, wrapper)));
    if (passage.empty()) throw ProviderError("generator returned an empty hypothetical context", false);
    texts.push_back(std::move(passage));
  }
  const auto embs = embed_all(embedder, texts);
  std::vector<double> mean(embs.front().dim(), 0.0);
  for (const auto& e : embs) {
    if (e.dim() != mean.size()) throw DimensionError("hypothetical context embedding dims differ");
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += e[d];
  }
  for (auto& v : mean) v /= static_cast<double>(embs.size());
  return Embedding(std::move(mean));
}

RankResult compose_hyde(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps) {
  if (cfg.hyde == HydeMode::off) throw PreconditionError("compose_hyde needs hyde mode plus or times");
  if (cfg.hyde_n_contexts < 1) throw PreconditionError("hyde_n_contexts must be >= 1");
  if (cfg.hyde == HydeMode::plus) return rank(candidates, cfg, deps);
  return order(prepare_for_mode(candidates, cfg, deps), cfg.score);
}

PreparedQuery prepare_for_mode(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps) {
  cfg.validate();
  if (cfg.hyde != HydeMode::times) return prepare(candidates, cfg, deps);
  if (!deps.generation.generator || !deps.generation.embedder) {
    throw PreconditionError("pipeline deps need a generator and an embedder");
  }
  auto averaged = hyde_query_embedding(candidates.query, *deps.generation.generator, *deps.generation.embedder,
                                       cfg.hyde_n_contexts, deps.generation.params, deps.generation.wrapper,
                                       deps.hyde_template);
  return prepare(candidates, cfg, deps, std::move(averaged));
}

RankResult rerank(const CandidateList& candidates, const PipelineConfig& cfg, const PipelineDeps& deps) {
  return order(prepare_for_mode(candidates, cfg, deps), cfg.score);
}

}  // namespace hyqe
