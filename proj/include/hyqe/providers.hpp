#pragma once

#include <atomic>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyqe/core.hpp"

namespace hyqe {

/// Sampling configuration for one generation request. Defaults follow the
/// configuration used for the hosted chat models: temperature 0.1, a single
/// candidate, up to 1024 output tokens.
struct GenerationParams {
  double temperature = 0.1;
  // Generic sampling slot. Values in (0, 1] are sent as top_p, larger values
  // as an integer top_k (understood by most OpenAI-compatible local servers).
  std::optional<double> top_p_or_k;
  int n_samples = 1;
  int max_output_tokens = 1024;

  void validate() const;
  /// Stable hash of every field; part of the generator fingerprint.
  std::string digest() const;
};

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// System rules plus a user-message template with a single {prompt}
/// placeholder. An empty system_text produces a user-only sequence.
struct PromptWrapper {
  std::string wrapper_id;
  std::string system_text;
  std::string user_wrap = "{prompt}";

  std::vector<ChatMessage> render(std::string_view prompt) const;

  /// "openai-system": rules as a system message, prompt as the user message.
  static PromptWrapper openai_system();
  /// "mistral-inst": rules and prompt inlined into one [INST] user message.
  static PromptWrapper mistral_inst();
  /// "plain": the prompt alone.
  static PromptWrapper plain();
  static PromptWrapper builtin(std::string_view wrapper_id);
};

/// Identifies a generation configuration. Two configurations that differ in
/// model, template, parameters or wrapper never share a fingerprint.
struct GeneratorFingerprint {
  std::string model_name;
  std::string prompt_template_id;
  std::string params_digest;
  std::string wrapper_id;

  std::string canonical() const;
  std::string digest() const;

  auto operator<=>(const GeneratorFingerprint&) const = default;
};

/// Conservative token estimate: whitespace separates words, every ASCII
/// punctuation character counts as one token, and a word of L bytes counts
/// as ceil(L / chars_per_token) tokens. Monotone under prefix extension.
std::size_t estimate_tokens(std::string_view text, double chars_per_token = 4.0);

/// Text generator H. Implementations override do_generate; the public entry
/// point validates the prompt, enforces the context window and counts calls.
class TextGenerator {
 public:
  TextGenerator() = default;
  // A copy is a fresh provider: its call counter starts at zero.
  TextGenerator(const TextGenerator&) {}
  TextGenerator& operator=(const TextGenerator&) = delete;
  virtual ~TextGenerator() = default;

  std::string generate(const std::string& prompt, const GenerationParams& params,
                       const PromptWrapper& wrapper) const;

  virtual std::size_t context_window_tokens() const = 0;
  virtual std::string model_name() const = 0;
  virtual double chars_per_token() const { return 4.0; }

  /// Number of completions requested from the backend since construction.
  std::size_t call_count() const noexcept { return calls_.load(); }

 protected:
  virtual std::string do_generate(const std::vector<ChatMessage>& messages,
                                  const GenerationParams& params) const = 0;

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

/// Embedding model E. Order and cardinality of the input are preserved.
class Embedder {
 public:
  Embedder() = default;
  Embedder(const Embedder&) {}
  Embedder& operator=(const Embedder&) = delete;
  virtual ~Embedder() = default;

  /// One batch; every text must be non-empty and the batch must not exceed
  /// batch_limit().
  std::vector<Embedding> embed(std::span<const std::string> texts) const;

  virtual std::string name() const = 0;
  virtual std::size_t batch_limit() const { return 64; }

  std::size_t call_count() const noexcept { return calls_.load(); }
  std::size_t texts_embedded() const noexcept { return texts_.load(); }

 protected:
  virtual std::vector<Embedding> do_embed(std::span<const std::string> texts) const = 0;

 private:
  mutable std::atomic<std::size_t> calls_{0};
  mutable std::atomic<std::size_t> texts_{0};
};

/// Splits `texts` into batch_limit()-sized batches and concatenates results.
std::vector<Embedding> embed_all(const Embedder& embedder, std::span<const std::string> texts);

}  // namespace hyqe
