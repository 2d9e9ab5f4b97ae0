#include "hyqe/mock_providers.hpp"

#include <fstream>

#include "json.hpp"

#include "hyqe/hashing.hpp"

namespace hyqe {

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

const std::string& user_message(const std::vector<ChatMessage>& messages) {
  return messages.back().content;
}

}  // namespace

ScriptedGenerator::ScriptedGenerator(Responder responder, std::size_t window_tokens, std::string model)
    : responder_(std::move(responder)), window_(window_tokens), model_(std::move(model)) {}

std::string ScriptedGenerator::do_generate(const std::vector<ChatMessage>& messages,
                                           const GenerationParams&) const {
  return responder_(user_message(messages));
}

std::optional<std::string> extract_passage(std::string_view prompt) {
  constexpr std::string_view open = "<passage>\n";
  constexpr std::string_view close = "\n</passage>";
  const auto start = prompt.find(open);
  if (start == std::string_view::npos) return std::nullopt;
  const auto body = start + open.size();
  const auto end = prompt.rfind(close);
  if (end == std::string_view::npos || end < body) return std::nullopt;
  return std::string(prompt.substr(body, end - body));
}

FixtureGenerator::FixtureGenerator(std::map<std::string, std::string> responses,
                                   std::size_t window_tokens, std::string model)
    : responses_(std::move(responses)), window_(window_tokens), model_(std::move(model)) {}

FixtureGenerator FixtureGenerator::from_json_file(const std::string& path) {
  const auto j = read_json_file(path);
  std::map<std::string, std::string> responses;
  if (j.contains("responses")) {
    for (const auto& [passage, completion] : j.at("responses").items()) {
      responses.emplace(passage, completion.get<std::string>());
    }
  }
  return FixtureGenerator(std::move(responses), j.value("context_window", std::size_t{3900}),
                          j.value("model", std::string("fixture-generator")));
}

std::string FixtureGenerator::default_response(std::string_view user_msg) {
  const auto passage = extract_passage(user_msg);
  if (!passage) {
    const auto body = trim(user_msg);
    const auto nl = body.rfind('\n');
    const auto last = trim(nl == std::string_view::npos ? body : body.substr(nl + 1));
    return "This passage answers the question: " + std::string(last);
  }
  std::string out;
  std::string sentence;
  int emitted = 0;
  auto emit = [&] {
    auto s = trim(sentence);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) {
      s.remove_suffix(1);
    }
    s = trim(s);
    if (!s.empty() && emitted < 12) {
      out += "What is meant by: " + std::string(s) + "?\n";
      ++emitted;
    }
    sentence.clear();
  };
  for (char c : *passage) {
    if (c == '\n') {
      emit();
      continue;
    }
    sentence.push_back(c);
    if (c == '.' || c == '!' || c == '?') emit();
  }
  emit();
  return emitted == 0 ? std::string("No Content") : out;
}

std::string FixtureGenerator::do_generate(const std::vector<ChatMessage>& messages,
                                          const GenerationParams&) const {
  const auto& msg = user_message(messages);
  if (const auto passage = extract_passage(msg)) {
    if (const auto it = responses_.find(*passage); it != responses_.end()) return it->second;
  }
  return default_response(msg);
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed, std::size_t batch_limit)
    : dim_(dim), seed_(seed), batch_limit_(batch_limit) {
  if (dim_ == 0) throw ConfigError("hash embedder dim must be >= 1");
}

Embedding HashEmbedder::embed_one(std::string_view text) const {
  std::uint64_t state = fnv1a64(text) ^ (seed_ * 0xd1342543de82ef95ULL);
  std::vector<double> values(dim_);
  for (auto& v : values) {
    const double unit = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    v = 2.0 * unit - 1.0;
  }
  return Embedding(std::move(values));
}

std::string HashEmbedder::name() const {
  return "hash-embedder-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

std::vector<Embedding> HashEmbedder::do_embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

FixtureEmbedder::FixtureEmbedder(std::map<std::string, Embedding> vectors, std::size_t dim,
                                 bool strict, std::string name)
    : vectors_(std::move(vectors)), fallback_(dim), strict_(strict), name_(std::move(name)) {
  for (const auto& [text, e] : vectors_) {
    if (e.dim() != dim) throw ConfigError("fixture vector for '" + text + "' has wrong dim");
  }
}

FixtureEmbedder FixtureEmbedder::from_json_file(const std::string& path) {
  const auto j = read_json_file(path);
  const auto dim = j.at("dim").get<std::size_t>();
  std::map<std::string, Embedding> vectors;
  for (const auto& [text, values] : j.at("vectors").items()) {
    vectors.emplace(text, Embedding(values.get<std::vector<double>>()));
  }
  return FixtureEmbedder(std::move(vectors), dim, j.value("strict", false),
                         j.value("name", std::string("fixture-embedder")));
}

std::vector<Embedding> FixtureEmbedder::do_embed(std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    if (const auto it = vectors_.find(t); it != vectors_.end()) {
      out.push_back(it->second);
    } else if (strict_) {
      throw InvalidInputError("no fixture embedding for text '" + t + "'");
    } else {
      out.push_back(fallback_.embed_one(t));
    }
  }
  return out;
}

}  // namespace hyqe
