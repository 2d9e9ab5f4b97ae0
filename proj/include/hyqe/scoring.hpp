#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "hyqe/core.hpp"
#include "hyqe/genqueries.hpp"

namespace hyqe {

enum class Aggregation { max, mean };

const char* to_string(Aggregation aggregation) noexcept;
Aggregation aggregation_from_string(const std::string& name);

struct DownsampleConfig {
  double ratio = 1.0;  // in (0, 1]
  std::uint64_t seed = 0;
};

/// Parameters of the hypothetical-query score
///   total = sim(q, c) + lambda * agg_{h in H(c)} sim(q, h)
/// with agg = max or mean, each similarity under its own mode.
struct ScoreConfig {
  double lambda = 1.0;
  Aggregation aggregation = Aggregation::max;
  SimilarityMode qc_mode = SimilarityMode::cosine;
  SimilarityMode qh_mode = SimilarityMode::cosine;
  std::optional<DownsampleConfig> downsample;

  void validate() const;

  /// Tuned lambda for a known embedding model; bge-base-en-v1.5 also scores
  /// the query/hypothetical-query term with the raw inner product.
  static std::optional<ScoreConfig> for_embedding_model(const std::string& model_name);
};

struct ScoreBreakdown {
  double total = 0.0;
  double qc_term = 0.0;
  double qh_term = 0.0;  // aggregate before lambda; 0 when H(c) is empty
  std::optional<std::size_t> best_hyp_index;  // max aggregation only
};

/// Empty `hyp_embs` leaves total == qc_term.
ScoreBreakdown score(const Embedding& q_emb, const Embedding& c_emb, std::span<const Embedding> hyp_embs,
                     const ScoreConfig& cfg);

/// Uniform sample without replacement of ceil(ratio * n) queries (with their
/// embeddings), kept in original order. ratio == 1 returns the input.
HypotheticalQuerySet downsample(const HypotheticalQuerySet& hyps, double ratio, std::uint64_t seed);

/// Seed for one context in a downsampled run, so each context draws its own
/// sample while the run stays reproducible.
std::uint64_t context_seed(std::uint64_t run_seed, const std::string& context_id) noexcept;

}  // namespace hyqe
