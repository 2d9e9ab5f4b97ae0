#include "hyqe/providers.hpp"

#include <cctype>
#include <cmath>

#include "hyqe/hashing.hpp"

namespace hyqe {

namespace {

constexpr std::string_view kAssistantRules =
    "You are an AI assistant. Here are some rules you always follow:\n"
    "- Generate human readable output, avoid creating output with gibberish text.\n"
    "- Don't plainly replicate the given instruction.\n"
    "- Generate only the requested output, don't include any other language before or after "
    "the requested output.\n"
    "- Never say thank you, that you are happy to help, that you are an AI agent, etc. Just "
    "answer directly.\n"
    "- Generate professional language typically used in business documents in North America.\n"
    "- Never generate offensive or foul language.";

std::string replace_first(std::string_view text, std::string_view needle, std::string_view with) {
  std::string out(text);
  const auto pos = out.find(needle);
  if (pos != std::string::npos) out.replace(pos, needle.size(), with);
  return out;
}

}  // namespace

void GenerationParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be a finite value >= 0");
  }
  if (top_p_or_k && (!(*top_p_or_k > 0.0) || !std::isfinite(*top_p_or_k))) {
    throw ConfigError("top_p_or_k must be positive");
  }
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (max_output_tokens < 1) throw ConfigError("max_output_tokens must be >= 1");
}

std::string GenerationParams::digest() const {
  std::string canonical = "temperature=" + format_double(temperature);
  canonical += ";top_p_or_k=" + (top_p_or_k ? format_double(*top_p_or_k) : std::string("none"));
  canonical += ";n=" + std::to_string(n_samples);
  canonical += ";max_output_tokens=" + std::to_string(max_output_tokens);
  return sha256_hex(canonical).substr(0, 16);
}

std::vector<ChatMessage> PromptWrapper::render(std::string_view prompt) const {
  std::vector<ChatMessage> messages;
  if (!system_text.empty()) messages.push_back({"system", system_text});
  messages.push_back({"user", replace_first(user_wrap, "{prompt}", prompt)});
  return messages;
}

PromptWrapper PromptWrapper::openai_system() {
  return {"openai-system", std::string(kAssistantRules), "{prompt}"};
}

PromptWrapper PromptWrapper::mistral_inst() {
  std::string wrap = "<s>[INST]\n";
  wrap += kAssistantRules;
  wrap += "\n\nThe user prompt is as follows:\n\n{prompt}[/INST]</s>";
  return {"mistral-inst", "", std::move(wrap)};
}

PromptWrapper PromptWrapper::plain() { return {"plain", "", "{prompt}"}; }

PromptWrapper PromptWrapper::builtin(std::string_view wrapper_id) {
  if (wrapper_id == "openai-system") return openai_system();
  if (wrapper_id == "mistral-inst") return mistral_inst();
  if (wrapper_id == "plain") return plain();
  throw ConfigError("unknown prompt wrapper '" + std::string(wrapper_id) + "'");
}

std::string GeneratorFingerprint::canonical() const {
  std::string out;
  for (const auto* field : {&model_name, &prompt_template_id, &params_digest, &wrapper_id}) {
    out += std::to_string(field->size());
    out += ':';
    out += *field;
  }
  return out;
}

std::string GeneratorFingerprint::digest() const { return sha256_hex(canonical()); }

std::size_t estimate_tokens(std::string_view text, double chars_per_token) {
  std::size_t tokens = 0;
  std::size_t word_len = 0;
  auto flush = [&] {
    if (word_len > 0) {
      tokens += static_cast<std::size_t>(std::ceil(static_cast<double>(word_len) / chars_per_token));
      word_len = 0;
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      ++tokens;
    } else {
      ++word_len;
    }
  }
  flush();
  return tokens;
}

std::string TextGenerator::generate(const std::string& prompt, const GenerationParams& params,
                                    const PromptWrapper& wrapper) const {
  if (trim(prompt).empty()) throw InvalidInputError("generation prompt is empty");
  params.validate();
  const auto messages = wrapper.render(prompt);
  std::size_t prompt_tokens = 0;
  for (const auto& m : messages) prompt_tokens += estimate_tokens(m.content, chars_per_token());
  const std::size_t needed = prompt_tokens + static_cast<std::size_t>(params.max_output_tokens);
  if (needed > context_window_tokens()) {
    throw WindowExceededError("prompt needs ~" + std::to_string(prompt_tokens) + " + " +
                              std::to_string(params.max_output_tokens) + " output tokens, window is " +
                              std::to_string(context_window_tokens()));
  }
  calls_.fetch_add(1);
  return do_generate(messages, params);
}

std::vector<Embedding> Embedder::embed(std::span<const std::string> texts) const {
  if (texts.size() > batch_limit()) {
    throw InvalidInputError("batch of " + std::to_string(texts.size()) + " exceeds limit " +
                            std::to_string(batch_limit()));
  }
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) throw InvalidInputError("text " + std::to_string(i) + " is empty");
  }
  if (texts.empty()) return {};
  calls_.fetch_add(1);
  texts_.fetch_add(texts.size());
  auto out = do_embed(texts);
  if (out.size() != texts.size()) {
    throw ProviderError("embedder returned " + std::to_string(out.size()) + " vectors for " +
                            std::to_string(texts.size()) + " texts",
                        false);
  }
  for (const auto& e : out) {
    if (e.dim() != out.front().dim()) throw ProviderError("embedder returned mixed dimensions", false);
  }
  return out;
}

std::vector<Embedding> embed_all(const Embedder& embedder, std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  const std::size_t batch = std::max<std::size_t>(embedder.batch_limit(), 1);
  for (std::size_t start = 0; start < texts.size(); start += batch) {
    auto part = embedder.embed(texts.subspan(start, std::min(batch, texts.size() - start)));
    for (auto& e : part) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace hyqe
