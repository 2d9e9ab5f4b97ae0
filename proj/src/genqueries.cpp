#include "hyqe/genqueries.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "hyqe/hashing.hpp"

namespace hyqe {

namespace {

constexpr std::string_view kDefaultBody =
    "Which kinds of questions can be answered \n"
    "based on the following passage\n"
    "\n"
    "```<passage>\n"
    "{context}\n"
    "</passage>'''\n"
    "\n"
    "Questions must be very short, different, \n"
    "and be written on separate lines.\n"
    "If the passage provides no meaningful \n"
    "content, respond with a 'No Content'.";

constexpr std::string_view kArgumentBody =
    "Which topics could the 'Content' section of the following passage be arguing about.\n"
    "If the 'Content' section provides no meaningful argument, respond with a single 'No content'.\n"
    "\n"
    "```<passage>\n"
    "{context}\n"
    "</passage>``` \n"
    "\n"
    "Topics are questions.\n"
    "Each question must be very short, different, and be written on separate lines.\n"
    "Do not mention the passage itself or the author of the passage...";

constexpr std::string_view kHydeBody = "Write a short passage that answers the question: {query}";

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

// Length of a leading list marker (including following blanks), or 0.
std::size_t list_marker_length(std::string_view line) {
  std::size_t i = 0;
  if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) {
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size() || (line[i] != '.' && line[i] != ')')) return 0;
    ++i;
    if (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) return 0;  // "1.5"
  } else if (line.starts_with("\xE2\x80\xA2")) {
    i = 3;
  } else if (line.starts_with("- ") || line.starts_with("-\t") || line == "-" ||
             line.starts_with("* ") || line.starts_with("*\t") || line == "*") {
    i = 1;
  } else {
    return 0;
  }
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  return i;
}

bool is_no_content(std::string_view line) {
  constexpr std::string_view strip = " \t'\"`.!:;,";
  const auto first = line.find_first_not_of(strip);
  if (first == std::string_view::npos) return false;
  const auto last = line.find_last_not_of(strip);
  const auto core = line.substr(first, last - first + 1);
  constexpr std::string_view target = "no content";
  if (core.size() != target.size()) return false;
  for (std::size_t i = 0; i < core.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(core[i])) != target[i]) return false;
  }
  return true;
}

// Sentence-level segments. Each ends after terminal punctuation plus the
// following whitespace, or after a newline; together they cover `text`.
std::vector<std::string_view> sentence_segments(std::string_view text) {
  std::vector<std::string_view> segments;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      ++i;
      segments.push_back(text.substr(start, i - start));
      start = i;
      continue;
    }
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
      if (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) {
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        segments.push_back(text.substr(start, j - start));
        start = j;
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (start < text.size()) segments.push_back(text.substr(start));
  return segments;
}

bool is_utf8_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

// Longest prefix of `text` within `limit` tokens, preferring to end at
// whitespace. Never empty while limit >= 1.
std::size_t fitting_prefix(std::string_view text, std::size_t limit, double cpt) {
  std::size_t lo = 1;
  std::size_t hi = text.size();
  std::size_t best = 0;
  while (lo <= hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (estimate_tokens(text.substr(0, mid), cpt) <= limit) {
      best = mid;
      lo = mid + 1;
    } else {
      hi = mid - 1;
    }
  }
  while (best > 0 && best < text.size() && is_utf8_continuation(text[best])) --best;
  if (best == 0) {
    best = 1;
    while (best < text.size() && is_utf8_continuation(text[best])) ++best;
    return best;
  }
  if (best < text.size()) {
    const auto ws = text.substr(0, best).find_last_of(" \t\n");
    if (ws != std::string_view::npos && ws > 0) return ws + 1;
  }
  return best;
}

}  // namespace

void PromptTemplate::validate() const {
  if (placeholder.empty()) throw ConfigError("template '" + template_id + "' has no placeholder name");
  const auto n = count_occurrences(body, placeholder);
  if (n != 1) {
    throw ConfigError("template '" + template_id + "' must contain exactly one " + placeholder +
                      " placeholder, found " + std::to_string(n));
  }
}

std::string PromptTemplate::render(std::string_view value) const {
  validate();
  std::string out = body;
  out.replace(out.find(placeholder), placeholder.size(), value);
  return out;
}

std::string PromptTemplate::versioned_id() const {
  return template_id + "@" + sha256_hex(body).substr(0, 12);
}

PromptTemplate PromptTemplate::default_template() {
  return {"default", std::string(kDefaultBody), "{context}"};
}

PromptTemplate PromptTemplate::argument_template() {
  return {"argument", std::string(kArgumentBody), "{context}"};
}

PromptTemplate PromptTemplate::hyde_template() {
  return {"hyde-default", std::string(kHydeBody), "{query}"};
}

PromptTemplate PromptTemplate::builtin(std::string_view template_id) {
  if (template_id == "default") return default_template();
  if (template_id == "argument") return argument_template();
  if (template_id == "hyde-default") return hyde_template();
  throw ConfigError("unknown prompt template '" + std::string(template_id) + "'");
}

PromptTemplate PromptTemplate::load(std::string_view template_id, const std::string& dir) {
  if (!dir.empty()) {
    const auto path = std::filesystem::path(dir) / (std::string(template_id) + ".txt");
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      PromptTemplate tpl{std::string(template_id), buf.str(), "{context}"};
      if (template_id.starts_with("hyde")) tpl.placeholder = "{query}";
      tpl.validate();
      return tpl;
    }
  }
  return builtin(template_id);
}

void HypotheticalQuerySet::validate() const {
  std::unordered_set<std::string_view> seen;
  for (const auto& q : queries) {
    if (q.empty()) throw InvalidInputError("empty hypothetical query for context " + context_id);
    if (!seen.insert(q).second) {
      throw DuplicateIdError("duplicate hypothetical query '" + q + "' for context " + context_id);
    }
  }
  if (embeddings) {
    if (embeddings->size() != queries.size()) {
      throw InvalidInputError("hypothetical query embeddings are not aligned for context " + context_id);
    }
    for (const auto& e : *embeddings) {
      if (e.dim() != embeddings->front().dim()) {
        throw DimensionError("mixed embedding dims for context " + context_id);
      }
    }
  }
}

GeneratorFingerprint make_fingerprint(const TextGenerator& generator, const PromptTemplate& tpl,
                                      const GenerationParams& params, const PromptWrapper& wrapper) {
  const std::string params_canonical = params.digest() + ";window=" +
                                       std::to_string(generator.context_window_tokens()) +
                                       ";cpt=" + format_double(generator.chars_per_token());
  return {generator.model_name(), tpl.versioned_id(), sha256_hex(params_canonical).substr(0, 16),
          wrapper.wrapper_id + "@" +
              sha256_hex(wrapper.system_text + '\x1f' + wrapper.user_wrap).substr(0, 12)};
}

std::string build_prompt(const ContextDoc& context, const PromptTemplate& tpl) {
  if (context.title && !context.title->empty()) {
    return tpl.render(*context.title + "\n" + context.text);
  }
  return tpl.render(context.text);
}

std::vector<std::string> parse_queries(std::string_view raw) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::size_t start = 0;
  while (start <= raw.size()) {
    auto end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    auto line = trim(raw.substr(start, end - start));
    start = end + 1;
    for (auto n = list_marker_length(line); n > 0; n = list_marker_length(line)) {
      line = trim(line.substr(n));
    }
    if (line.empty()) continue;
    if (is_no_content(line)) return {};
    std::string q(line);
    if (seen.insert(q).second) out.push_back(std::move(q));
  }
  return out;
}

std::vector<std::string> chunk_context(std::string_view text, std::size_t budget_tokens,
                                       std::size_t prompt_overhead_tokens,
                                       std::size_t output_reserve_tokens, double chars_per_token) {
  if (budget_tokens <= prompt_overhead_tokens + output_reserve_tokens) {
    throw PreconditionError("token budget " + std::to_string(budget_tokens) +
                            " leaves no room after overhead " + std::to_string(prompt_overhead_tokens) +
                            " and output reserve " + std::to_string(output_reserve_tokens));
  }
  const std::size_t limit = budget_tokens - prompt_overhead_tokens - output_reserve_tokens;
  if (estimate_tokens(text, chars_per_token) <= limit) return {std::string(text)};

  std::vector<std::string> chunks;
  std::string current;
  for (auto segment : sentence_segments(text)) {
    if (estimate_tokens(current + std::string(segment), chars_per_token) <= limit) {
      current += segment;
      continue;
    }
    if (!current.empty()) chunks.push_back(std::exchange(current, {}));
    while (estimate_tokens(segment, chars_per_token) > limit) {
      const auto n = fitting_prefix(segment, limit, chars_per_token);
      chunks.emplace_back(segment.substr(0, n));
      segment.remove_prefix(n);
    }
    current = std::string(segment);
  }
  if (!current.empty()) chunks.push_back(std::move(current));
  return chunks;
}

std::size_t prompt_overhead_tokens(const PromptTemplate& tpl, const PromptWrapper& wrapper,
                                   double chars_per_token) {
  std::size_t tokens = 0;
  for (const auto& m : wrapper.render(tpl.render(""))) tokens += estimate_tokens(m.content, chars_per_token);
  return tokens;
}

HypotheticalQuerySet generate_for_context(const ContextDoc& context, const PromptTemplate& tpl,
                                          const TextGenerator& generator,
                                          const GenerationParams& params,
                                          const PromptWrapper& wrapper) {
  HypotheticalQuerySet set{context.id, make_fingerprint(generator, tpl, params, wrapper), {}, std::nullopt};
  if (trim(context.text).empty()) return set;

  const double cpt = generator.chars_per_token();
  std::size_t overhead = prompt_overhead_tokens(tpl, wrapper, cpt);
  if (context.title && !context.title->empty()) overhead += estimate_tokens(*context.title, cpt);
  const auto chunks = chunk_context(context.text, generator.context_window_tokens(), overhead,
                                    static_cast<std::size_t>(params.max_output_tokens), cpt);

  std::unordered_set<std::string> seen;
  for (const auto& chunk : chunks) {
    if (trim(chunk).empty()) continue;
    const ContextDoc part{context.id, chunk, context.title};
    for (auto& q : parse_queries(generator.generate(build_prompt(part, tpl), params, wrapper))) {
      if (seen.insert(q).second) set.queries.push_back(std::move(q));
    }
  }
  return set;
}

}  // namespace hyqe
