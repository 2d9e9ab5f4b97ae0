#pragma once

#include <cstddef>
#include <optional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyqe/errors.hpp"

namespace hyqe {

/// Fixed-dimension real vector produced by an embedder. Immutable after
/// construction; every value is finite and the dimension is at least one.
class Embedding {
 public:
  explicit Embedding(std::vector<double> values);
  Embedding(std::initializer_list<double> values);

  static Embedding from_floats(std::span<const float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  double norm() const noexcept;

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<double> values_;
};

struct Query {
  std::string id;
  std::string text;
};

struct ContextDoc {
  std::string id;
  std::string text;
  std::optional<std::string> title;

  friend bool operator==(const ContextDoc&, const ContextDoc&) = default;
};

struct ScoredContext {
  std::string context_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const ScoredContext&, const ScoredContext&) = default;
};

enum class SimilarityMode { cosine, inner_product };

const char* to_string(SimilarityMode mode) noexcept;
SimilarityMode similarity_mode_from_string(const std::string& name);

/// Sum of a_i * b_i, accumulated in double. Throws DimensionError.
double inner_product(const Embedding& a, const Embedding& b);

/// Cosine or raw inner product. Cosine mode throws ZeroNormError for a
/// zero vector rather than returning 0.
double similarity(const Embedding& a, const Embedding& b, SimilarityMode mode);

/// Validates a query: non-empty text after trimming.
void validate(const Query& query);

/// Ranks are 1..n in order and scores never increase.
void validate_ranked_list(std::span<const ScoredContext> list);

std::string_view trim(std::string_view s) noexcept;

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace hyqe
