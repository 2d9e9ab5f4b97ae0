#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hyqe/core.hpp"
#include "hyqe/providers.hpp"

namespace hyqe {

/// Prompt text with exactly one placeholder. Query-generation templates use
/// {context}; the hypothetical-context template uses {query}.
struct PromptTemplate {
  std::string template_id;
  std::string body;
  std::string placeholder = "{context}";

  void validate() const;
  std::string render(std::string_view value) const;
  /// template_id plus a short digest of the body.
  std::string versioned_id() const;

  /// "default": the general question-generation prompt.
  static PromptTemplate default_template();
  /// "argument": topic questions for argumentative passages.
  static PromptTemplate argument_template();
  /// "hyde-default": asks for a passage answering the query.
  static PromptTemplate hyde_template();
  static PromptTemplate builtin(std::string_view template_id);
  /// Reads `<dir>/<template_id>.txt` when it exists, otherwise a built-in.
  static PromptTemplate load(std::string_view template_id, const std::string& dir = {});
};

struct HypotheticalQuerySet {
  std::string context_id;
  GeneratorFingerprint fingerprint;
  std::vector<std::string> queries;
  std::optional<std::vector<Embedding>> embeddings;

  /// Unique non-empty queries; embeddings (when present) aligned and of one dim.
  void validate() const;
};

GeneratorFingerprint make_fingerprint(const TextGenerator& generator, const PromptTemplate& tpl,
                                      const GenerationParams& params, const PromptWrapper& wrapper);

/// Template with {context} replaced by the context text; a title, when
/// present, precedes the text on its own line. No escaping is applied.
std::string build_prompt(const ContextDoc& context, const PromptTemplate& tpl);

/// Splits a completion into queries. Lines are trimmed, list markers
/// ("1.", "2)", "-", "*", "•") are stripped, blank lines dropped. Any line
/// reading "No Content" (any case, optional quotes/punctuation) makes the
/// result empty. Exact duplicates are dropped keeping the first.
std::vector<std::string> parse_queries(std::string_view raw);

/// Splits `text` into pieces whose estimated token count fits within
/// budget - overhead - output_reserve. Splits at sentence ends when possible
/// and hard-splits overlong sentences. Concatenating the chunks gives back
/// `text` exactly.
std::vector<std::string> chunk_context(std::string_view text, std::size_t budget_tokens,
                                       std::size_t prompt_overhead_tokens,
                                       std::size_t output_reserve_tokens = 0,
                                       double chars_per_token = 4.0);

/// Prompt tokens consumed by the template and wrapper with an empty context.
std::size_t prompt_overhead_tokens(const PromptTemplate& tpl, const PromptWrapper& wrapper,
                                   double chars_per_token = 4.0);

/// Builds H(c): one generation per chunk, parsed and unioned in chunk order.
/// Embeddings are left unset. A blank context yields an empty set without
/// calling the generator.
HypotheticalQuerySet generate_for_context(const ContextDoc& context, const PromptTemplate& tpl,
                                          const TextGenerator& generator,
                                          const GenerationParams& params,
                                          const PromptWrapper& wrapper);

}  // namespace hyqe
