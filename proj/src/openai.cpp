#include "hyqe/openai.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"

namespace hyqe {

Endpoint parse_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  if (path_start == std::string::npos) {
    ep.scheme_host_port = base_url;
  } else {
    ep.scheme_host_port = base_url.substr(0, path_start);
    ep.path_prefix = base_url.substr(path_start);
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  }
  return ep;
}

nlohmann::json build_chat_request(const std::string& model, const std::vector<ChatMessage>& messages,
                                  const GenerationParams& params) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json body = {{"model", model},
                         {"messages", std::move(msgs)},
                         {"temperature", params.temperature},
                         {"n", params.n_samples},
                         {"max_tokens", params.max_output_tokens}};
  if (params.top_p_or_k) {
    if (*params.top_p_or_k <= 1.0) {
      body["top_p"] = *params.top_p_or_k;
    } else {
      body["top_k"] = static_cast<int>(std::lround(*params.top_p_or_k));
    }
  }
  return body;
}

std::string parse_chat_response(const nlohmann::json& body) {
  try {
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed chat completion response: ") + e.what(), false);
  }
}

nlohmann::json build_embeddings_request(const std::string& model, std::span<const std::string> texts) {
  return {{"model", model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
}

std::vector<Embedding> parse_embeddings_response(const nlohmann::json& body, std::size_t expected) {
  try {
    const auto& data = body.at("data");
    if (data.size() != expected) {
      throw ProviderError("embeddings response has " + std::to_string(data.size()) +
                              " items, expected " + std::to_string(expected),
                          false);
    }
    std::vector<std::pair<std::size_t, std::vector<double>>> items;
    items.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      items.emplace_back(data[i].value("index", i), data[i].at("embedding").get<std::vector<double>>());
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Embedding> out;
    out.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].first != i) throw ProviderError("embeddings response indices are not 0..n-1", false);
      out.emplace_back(std::move(items[i].second));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed embeddings response: ") + e.what(), false);
  } catch (const InvalidInputError& e) {
    throw ProviderError(std::string("invalid embedding in response: ") + e.what(), false);
  }
}

OpenAiTransport::OpenAiTransport(OpenAiConfig config)
    : config_(std::move(config)),
      endpoint_(parse_base_url(config_.base_url)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.concurrency, 1, 1024))) {
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

nlohmann::json OpenAiTransport::post_json(const std::string& path, const nlohmann::json& body) const {
  const std::string payload = body.dump();
  const std::string full_path = endpoint_.path_prefix + path;
  auto backoff = config_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Result res;
    {
      in_flight_.acquire();
      httplib::Client client(endpoint_.scheme_host_port);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      res = client.Post(full_path, headers, payload, "application/json");
      in_flight_.release();
    }
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status != 200) {
      throw ProviderError("HTTP " + std::to_string(res->status) + " from " + full_path + ": " + res->body,
                          false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("response is not JSON: ") + e.what(), false);
    }
  }
  throw ProviderError(full_path + " failed after " + std::to_string(config_.max_retries + 1) +
                          " attempts: " + last_error,
                      true);
}

OpenAiGenerator::OpenAiGenerator(std::shared_ptr<const OpenAiTransport> transport)
    : transport_(std::move(transport)) {}

std::size_t OpenAiGenerator::context_window_tokens() const { return transport_->config().context_window; }

std::string OpenAiGenerator::model_name() const { return transport_->config().chat_model; }

std::string OpenAiGenerator::do_generate(const std::vector<ChatMessage>& messages,
                                         const GenerationParams& params) const {
  return parse_chat_response(
      transport_->post_json("/chat/completions", build_chat_request(model_name(), messages, params)));
}

OpenAiEmbedder::OpenAiEmbedder(std::shared_ptr<const OpenAiTransport> transport)
    : transport_(std::move(transport)) {}

std::string OpenAiEmbedder::name() const { return transport_->config().embedding_model; }

std::size_t OpenAiEmbedder::batch_limit() const { return transport_->config().batch_size; }

std::vector<Embedding> OpenAiEmbedder::do_embed(std::span<const std::string> texts) const {
  return parse_embeddings_response(
      transport_->post_json("/embeddings", build_embeddings_request(name(), texts)), texts.size());
}

}  // namespace hyqe
