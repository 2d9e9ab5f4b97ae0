#include "hyqe/core.hpp"

#include <charconv>
#include <cmath>
#include <unordered_set>

namespace hyqe {

namespace {

void check_values(const std::vector<double>& values) {
  if (values.empty()) throw InvalidInputError("embedding must have dim >= 1");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InvalidInputError("embedding value at index " + std::to_string(i) + " is not finite");
    }
  }
}

void check_dims(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
}

}  // namespace

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  check_values(values_);
}

Embedding::Embedding(std::initializer_list<double> values) : values_(values) {
  check_values(values_);
}

Embedding Embedding::from_floats(std::span<const float> values) {
  return Embedding(std::vector<double>(values.begin(), values.end()));
}

double Embedding::norm() const noexcept {
  double sum = 0.0;
  for (double v : values_) sum += v * v;
  return std::sqrt(sum);
}

const char* to_string(SimilarityMode mode) noexcept {
  return mode == SimilarityMode::cosine ? "cosine" : "inner_product";
}

SimilarityMode similarity_mode_from_string(const std::string& name) {
  if (name == "cosine") return SimilarityMode::cosine;
  if (name == "inner_product" || name == "dot") return SimilarityMode::inner_product;
  throw ConfigError("unknown similarity mode '" + name + "'");
}

double inner_product(const Embedding& a, const Embedding& b) {
  check_dims(a, b);
  double sum = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) sum += av[i] * bv[i];
  return sum;
}

double similarity(const Embedding& a, const Embedding& b, SimilarityMode mode) {
  const double dot = inner_product(a, b);
  if (mode == SimilarityMode::inner_product) return dot;
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ZeroNormError("cosine similarity of a zero-norm vector");
  return dot / (na * nb);
}

std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void validate(const Query& query) {
  if (trim(query.text).empty()) throw InvalidInputError("query '" + query.id + "' has empty text");
}

void validate_ranked_list(std::span<const ScoredContext> list) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (list[i].rank != i + 1) {
      throw InvalidInputError("rank " + std::to_string(list[i].rank) + " at position " +
                              std::to_string(i + 1));
    }
    if (i > 0 && list[i].score > list[i - 1].score) {
      throw InvalidInputError("scores increase at rank " + std::to_string(i + 1));
    }
    if (!seen.insert(list[i].context_id).second) {
      throw DuplicateIdError("duplicate context id '" + list[i].context_id + "' in ranked list");
    }
  }
}

}  // namespace hyqe
