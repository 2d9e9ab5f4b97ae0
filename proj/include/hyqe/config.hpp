#pragma once

#include <memory>
#include <string>

#include "json.hpp"

#include "hyqe/openai.hpp"
#include "hyqe/pipeline.hpp"
#include "hyqe/providers.hpp"

namespace hyqe {

struct ProviderSettings {
  std::string kind = "openai";  // "openai" or "mock"
  OpenAiConfig openai;
  // mock providers
  std::size_t mock_dim = 8;
  std::uint64_t mock_seed = 0;
  std::size_t mock_window = 3900;
  std::string mock_generator_fixture;  // optional FixtureGenerator JSON
  std::string mock_embedding_fixture;  // optional FixtureEmbedder JSON
};

/// Everything a command needs besides its file arguments. Built from
/// defaults, then the config file, then command-line overrides.
struct AppConfig {
  PipelineConfig pipeline;
  bool lambda_set = false;  // false: lambda follows the embedding model
  GenerationParams generation;
  std::string wrapper_id = "openai-system";
  std::string templates_dir;
  ProviderSettings providers;
  std::size_t eval_k = 10;
  std::size_t query_concurrency = 4;
  std::string run_tag = "hyqe";

  /// Fills model-dependent defaults (lambda, qh_mode) unless set explicitly.
  void resolve_defaults();
  nlohmann::json to_json() const;
};

/// Applies the keys present in `j` on top of `cfg`. Unknown keys are errors.
void apply_config_json(AppConfig& cfg, const nlohmann::json& j);
AppConfig load_config(const std::string& path);

std::string embedding_model_name(const ProviderSettings& settings);

struct Providers {
  std::shared_ptr<const TextGenerator> generator;
  std::shared_ptr<const Embedder> embedder;
};

Providers make_providers(const ProviderSettings& settings);

}  // namespace hyqe
