#include "hyqe/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "hyqe/hashing.hpp"

namespace hyqe {

const char* to_string(Aggregation aggregation) noexcept {
  return aggregation == Aggregation::max ? "max" : "mean";
}

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "max") return Aggregation::max;
  if (name == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation '" + name + "'");
}

void ScoreConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
  if (downsample && !(downsample->ratio > 0.0 && downsample->ratio <= 1.0)) {
    throw ConfigError("downsample ratio must be in (0, 1]");
  }
}

std::optional<ScoreConfig> ScoreConfig::for_embedding_model(const std::string& model_name) {
  auto has = [&](std::string_view needle) { return model_name.find(needle) != std::string::npos; };
  ScoreConfig cfg;
  if (has("contriever")) {
    cfg.lambda = 2.0;
  } else if (has("bge-base-en-v1.5")) {
    cfg.lambda = 0.03;
    cfg.qh_mode = SimilarityMode::inner_product;
  } else if (has("e5-large-v2") || has("E5-large-v2")) {
    cfg.lambda = 0.5;
  } else if (has("nomic-embed-text-v1.5")) {
    cfg.lambda = 0.5;
  } else if (has("text-embedding-3-large")) {
    cfg.lambda = 0.3;
  } else {
    return std::nullopt;
  }
  return cfg;
}

ScoreBreakdown score(const Embedding& q_emb, const Embedding& c_emb, std::span<const Embedding> hyp_embs,
                     const ScoreConfig& cfg) {
  ScoreBreakdown out;
  out.qc_term = similarity(q_emb, c_emb, cfg.qc_mode);
  if (hyp_embs.empty()) {
    out.total = out.qc_term;
    return out;
  }
  if (cfg.aggregation == Aggregation::max) {
    double best = similarity(q_emb, hyp_embs[0], cfg.qh_mode);
    std::size_t best_index = 0;
    for (std::size_t i = 1; i < hyp_embs.size(); ++i) {
      const double s = similarity(q_emb, hyp_embs[i], cfg.qh_mode);
      if (s > best) {
        best = s;
        best_index = i;
      }
    }
    out.qh_term = best;
    out.best_hyp_index = best_index;
  } else {
    double sum = 0.0;
    for (const auto& h : hyp_embs) sum += similarity(q_emb, h, cfg.qh_mode);
    out.qh_term = sum / static_cast<double>(hyp_embs.size());
  }
  out.total = out.qc_term + cfg.lambda * out.qh_term;
  return out;
}

HypotheticalQuerySet downsample(const HypotheticalQuerySet& hyps, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw PreconditionError("downsample ratio must be in (0, 1]");
  const std::size_t n = hyps.queries.size();
  if (ratio == 1.0 || n == 0) return hyps;
  // The epsilon absorbs products such as 0.7 * 10 = 7.000000000000001.
  const auto keep = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  if (keep >= n) return hyps;

  // Partial Fisher-Yates over indices. Bounded draws use rejection sampling on
  // raw engine output so the sample is identical across standard libraries.
  std::mt19937_64 rng(seed);
  auto below = [&rng](std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = rng();
    } while (x >= limit);
    return x % bound;
  };
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < keep; ++i) {
    std::swap(idx[i], idx[i + below(n - i)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());

  HypotheticalQuerySet out{hyps.context_id, hyps.fingerprint, {}, std::nullopt};
  out.queries.reserve(keep);
  for (auto i : idx) out.queries.push_back(hyps.queries[i]);
  if (hyps.embeddings) {
    std::vector<Embedding> embs;
    embs.reserve(keep);
    for (auto i : idx) embs.push_back((*hyps.embeddings)[i]);
    out.embeddings = std::move(embs);
  }
  return out;
}

std::uint64_t context_seed(std::uint64_t run_seed, const std::string& context_id) noexcept {
  std::uint64_t state = run_seed ^ fnv1a64(context_id);
  return splitmix64(state);
}

}  // namespace hyqe
