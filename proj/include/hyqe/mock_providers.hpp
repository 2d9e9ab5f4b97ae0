#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyqe/providers.hpp"

namespace hyqe {

/// Test double whose completion is produced by a caller-supplied function of
/// the user message. The responder must itself be thread-safe.
class ScriptedGenerator : public TextGenerator {
 public:
  using Responder = std::function<std::string(const std::string& user_message)>;

  explicit ScriptedGenerator(Responder responder, std::size_t window_tokens = 3900,
                             std::string model = "scripted");

  std::size_t context_window_tokens() const override { return window_; }
  std::string model_name() const override { return model_; }

 protected:
  std::string do_generate(const std::vector<ChatMessage>& messages,
                          const GenerationParams& params) const override;

 private:
  Responder responder_;
  std::size_t window_;
  std::string model_;
};

/// Returns the text between "<passage>\n" and "\n</passage>" in a rendered
/// query-generation prompt, or nullopt when the markers are absent.
std::optional<std::string> extract_passage(std::string_view prompt);

/// Deterministic offline generator. Passages found in `responses` get the
/// scripted completion; any other passage gets one question per sentence,
/// and a blank passage gets "No Content". Prompts without a passage section
/// (hypothetical-context prompts) are answered with a short echo passage.
class FixtureGenerator : public TextGenerator {
 public:
  explicit FixtureGenerator(std::map<std::string, std::string> responses = {},
                            std::size_t window_tokens = 3900, std::string model = "fixture-generator");

  /// Loads {"model": ..., "context_window": ..., "responses": {passage: completion}}.
  static FixtureGenerator from_json_file(const std::string& path);

  static std::string default_response(std::string_view user_message);

  std::size_t context_window_tokens() const override { return window_; }
  std::string model_name() const override { return model_; }

 protected:
  std::string do_generate(const std::vector<ChatMessage>& messages,
                          const GenerationParams& params) const override;

 private:
  std::map<std::string, std::string> responses_;
  std::size_t window_;
  std::string model_;
};

/// Seeded hash of the text expanded into `dim` raw (unnormalized) values in
/// [-1, 1). Pure: identical bytes for identical text in every process.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 8, std::uint64_t seed = 0, std::size_t batch_limit = 64);

  Embedding embed_one(std::string_view text) const;

  std::string name() const override;
  std::size_t batch_limit() const override { return batch_limit_; }
  std::size_t dim() const noexcept { return dim_; }

 protected:
  std::vector<Embedding> do_embed(std::span<const std::string> texts) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::size_t batch_limit_;
};

/// Looks texts up in a fixed table; unknown texts fall back to a HashEmbedder
/// of the same dimension, or raise InvalidInputError when `strict`.
class FixtureEmbedder : public Embedder {
 public:
  FixtureEmbedder(std::map<std::string, Embedding> vectors, std::size_t dim, bool strict = false,
                  std::string name = "fixture-embedder");

  /// Loads {"name": ..., "dim": n, "strict": bool, "vectors": {text: [..]}}.
  static FixtureEmbedder from_json_file(const std::string& path);

  std::string name() const override { return name_; }

 protected:
  std::vector<Embedding> do_embed(std::span<const std::string> texts) const override;

 private:
  std::map<std::string, Embedding> vectors_;
  HashEmbedder fallback_;
  bool strict_;
  std::string name_;
};

}  // namespace hyqe
