#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "json.hpp"

#include "hyqe/providers.hpp"

namespace hyqe {

/// Connection and policy settings shared by the chat and embedding clients.
struct OpenAiConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string chat_model = "gpt-3.5-turbo";
  std::string embedding_model = "text-embedding-3-large";
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t context_window = 3900;
  std::size_t batch_size = 64;
  std::size_t concurrency = 8;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
};

/// Base URL split into the pieces cpp-httplib wants.
struct Endpoint {
  std::string scheme_host_port;  // e.g. "https://api.openai.com"
  std::string path_prefix;       // e.g. "/v1"
};

Endpoint parse_base_url(const std::string& base_url);

nlohmann::json build_chat_request(const std::string& model, const std::vector<ChatMessage>& messages,
                                  const GenerationParams& params);
/// Content of choices[0].message.content. Throws ProviderError on shape errors.
std::string parse_chat_response(const nlohmann::json& body);

nlohmann::json build_embeddings_request(const std::string& model, std::span<const std::string> texts);
/// data[].embedding reordered by data[].index.
std::vector<Embedding> parse_embeddings_response(const nlohmann::json& body, std::size_t expected);

/// Issues POST requests with bounded concurrency and exponential-backoff
/// retries on transport failures, 429 and 5xx responses.
class OpenAiTransport {
 public:
  explicit OpenAiTransport(OpenAiConfig config);

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const;

  const OpenAiConfig& config() const noexcept { return config_; }

 private:
  OpenAiConfig config_;
  Endpoint endpoint_;
  std::string api_key_;
  mutable std::counting_semaphore<1024> in_flight_;
};

class OpenAiGenerator : public TextGenerator {
 public:
  explicit OpenAiGenerator(std::shared_ptr<const OpenAiTransport> transport);

  std::size_t context_window_tokens() const override;
  std::string model_name() const override;

 protected:
  std::string do_generate(const std::vector<ChatMessage>& messages,
                          const GenerationParams& params) const override;

 private:
  std::shared_ptr<const OpenAiTransport> transport_;
};

class OpenAiEmbedder : public Embedder {
 public:
  explicit OpenAiEmbedder(std::shared_ptr<const OpenAiTransport> transport);

  std::string name() const override;
  std::size_t batch_limit() const override;

 protected:
  std::vector<Embedding> do_embed(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const OpenAiTransport> transport_;
};

}  // namespace hyqe
