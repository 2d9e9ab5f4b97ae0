#include "hyqe/config.hpp"

#include <fstream>
#include <set>

#include "hyqe/mock_providers.hpp"

namespace hyqe {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

void apply_score(ScoreConfig& score, bool& lambda_set, const json& j) {
  check_keys(j, {"lambda", "aggregation", "qc_mode", "qh_mode", "downsample"}, "score");
  if (j.contains("lambda")) {
    read(j, "lambda", score.lambda);
    lambda_set = true;
  }
  if (j.contains("aggregation")) score.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  if (j.contains("qc_mode")) score.qc_mode = similarity_mode_from_string(j.at("qc_mode").get<std::string>());
  if (j.contains("qh_mode")) score.qh_mode = similarity_mode_from_string(j.at("qh_mode").get<std::string>());
  if (j.contains("downsample")) {
    const auto& d = j.at("downsample");
    if (d.is_null()) {
      score.downsample.reset();
    } else {
      check_keys(d, {"ratio", "seed"}, "score.downsample");
      if (!d.contains("ratio") || !d.contains("seed")) throw ConfigError("score.downsample needs ratio and seed");
      DownsampleConfig ds;
      read(d, "ratio", ds.ratio);
      read(d, "seed", ds.seed);
      score.downsample = ds;
    }
  }
}

}  // namespace

void apply_config_json(AppConfig& cfg, const json& j) {
  check_keys(j, {"pipeline", "score", "generation", "providers", "templates_dir", "eval_k", "query_concurrency",
                 "run_tag"},
             "config");
  read(j, "templates_dir", cfg.templates_dir);
  read(j, "eval_k", cfg.eval_k);
  read(j, "query_concurrency", cfg.query_concurrency);
  read(j, "run_tag", cfg.run_tag);
  if (const auto it = j.find("pipeline"); it != j.end()) {
    check_keys(*it, {"k", "retrieval_depth", "template_id", "hyde", "hyde_n_contexts", "strict", "concurrency"},
               "pipeline");
    read(*it, "k", cfg.pipeline.k);
    read(*it, "retrieval_depth", cfg.pipeline.retrieval_depth);
    read(*it, "template_id", cfg.pipeline.template_id);
    if (it->contains("hyde")) cfg.pipeline.hyde = hyde_mode_from_string(it->at("hyde").get<std::string>());
    read(*it, "hyde_n_contexts", cfg.pipeline.hyde_n_contexts);
    read(*it, "strict", cfg.pipeline.strict);
    read(*it, "concurrency", cfg.pipeline.concurrency);
  }
  if (const auto it = j.find("score"); it != j.end()) apply_score(cfg.pipeline.score, cfg.lambda_set, *it);
  if (const auto it = j.find("generation"); it != j.end()) {
    check_keys(*it, {"temperature", "top_p_or_k", "n", "max_output_tokens", "wrapper"}, "generation");
    read(*it, "temperature", cfg.generation.temperature);
    if (it->contains("top_p_or_k")) {
      const auto& v = it->at("top_p_or_k");
      cfg.generation.top_p_or_k = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    read(*it, "n", cfg.generation.n_samples);
    read(*it, "max_output_tokens", cfg.generation.max_output_tokens);
    read(*it, "wrapper", cfg.wrapper_id);
  }
  if (const auto it = j.find("providers"); it != j.end()) {
    auto& p = cfg.providers;
    check_keys(*it, {"kind", "base_url", "chat_model", "embedding_model", "api_key_env", "context_window",
                     "batch_size", "concurrency", "max_retries", "initial_backoff_ms", "timeout_s", "mock"},
               "providers");
    read(*it, "kind", p.kind);
    read(*it, "base_url", p.openai.base_url);
    read(*it, "chat_model", p.openai.chat_model);
    read(*it, "embedding_model", p.openai.embedding_model);
    read(*it, "api_key_env", p.openai.api_key_env);
    read(*it, "context_window", p.openai.context_window);
    read(*it, "batch_size", p.openai.batch_size);
    read(*it, "concurrency", p.openai.concurrency);
    read(*it, "max_retries", p.openai.max_retries);
    if (it->contains("initial_backoff_ms")) {
      p.openai.initial_backoff = std::chrono::milliseconds(it->at("initial_backoff_ms").get<long long>());
    }
    if (it->contains("timeout_s")) p.openai.timeout = std::chrono::seconds(it->at("timeout_s").get<long long>());
    if (const auto m = it->find("mock"); m != it->end()) {
      check_keys(*m, {"dim", "seed", "context_window", "generator_fixture", "embedding_fixture"}, "providers.mock");
      read(*m, "dim", p.mock_dim);
      read(*m, "seed", p.mock_seed);
      read(*m, "context_window", p.mock_window);
      read(*m, "generator_fixture", p.mock_generator_fixture);
      read(*m, "embedding_fixture", p.mock_embedding_fixture);
    }
    if (p.kind != "openai" && p.kind != "mock") throw ConfigError("providers.kind must be 'openai' or 'mock'");
  }
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  AppConfig cfg;
  try {
    apply_config_json(cfg, json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

std::string embedding_model_name(const ProviderSettings& settings) {
  if (settings.kind == "openai") return settings.openai.embedding_model;
  if (!settings.mock_embedding_fixture.empty()) return "fixture-embedder";
  return HashEmbedder(settings.mock_dim, settings.mock_seed).name();
}

void AppConfig::resolve_defaults() {
  if (!lambda_set) {
    if (const auto tuned = ScoreConfig::for_embedding_model(embedding_model_name(providers))) {
      pipeline.score.lambda = tuned->lambda;
      pipeline.score.qh_mode = tuned->qh_mode;
    }
    lambda_set = true;
  }
  pipeline.validate();
  generation.validate();
}

json AppConfig::to_json() const {
  const auto& s = pipeline.score;
  json score = {{"lambda", s.lambda},
                {"aggregation", to_string(s.aggregation)},
                {"qc_mode", to_string(s.qc_mode)},
                {"qh_mode", to_string(s.qh_mode)},
                {"downsample", nullptr}};
  if (s.downsample) score["downsample"] = {{"ratio", s.downsample->ratio}, {"seed", s.downsample->seed}};
  json providers_json = {{"kind", providers.kind}};
  if (providers.kind == "openai") {
    providers_json.update({{"base_url", providers.openai.base_url},
                           {"chat_model", providers.openai.chat_model},
                           {"embedding_model", providers.openai.embedding_model},
                           {"api_key_env", providers.openai.api_key_env},
                           {"context_window", providers.openai.context_window},
                           {"batch_size", providers.openai.batch_size},
                           {"concurrency", providers.openai.concurrency},
                           {"max_retries", providers.openai.max_retries}});
  } else {
    providers_json["mock"] = {{"dim", providers.mock_dim},
                              {"seed", providers.mock_seed},
                              {"context_window", providers.mock_window},
                              {"generator_fixture", providers.mock_generator_fixture},
                              {"embedding_fixture", providers.mock_embedding_fixture}};
  }
  return {{"pipeline",
           {{"k", pipeline.k},
            {"retrieval_depth", pipeline.retrieval_depth},
            {"template_id", pipeline.template_id},
            {"hyde", to_string(pipeline.hyde)},
            {"hyde_n_contexts", pipeline.hyde_n_contexts},
            {"strict", pipeline.strict},
            {"concurrency", pipeline.concurrency}}},
          {"score", std::move(score)},
          {"generation",
           {{"temperature", generation.temperature},
            {"top_p_or_k", generation.top_p_or_k ? json(*generation.top_p_or_k) : json(nullptr)},
            {"n", generation.n_samples},
            {"max_output_tokens", generation.max_output_tokens},
            {"wrapper", wrapper_id}}},
          {"providers", std::move(providers_json)},
          {"templates_dir", templates_dir},
          {"eval_k", eval_k},
          {"query_concurrency", query_concurrency},
          {"run_tag", run_tag}};
}

Providers make_providers(const ProviderSettings& settings) {
  if (settings.kind == "openai") {
    auto transport = std::make_shared<const OpenAiTransport>(settings.openai);
    return {std::make_shared<const OpenAiGenerator>(transport), std::make_shared<const OpenAiEmbedder>(transport)};
  }
  Providers p;
  if (!settings.mock_generator_fixture.empty()) {
    p.generator = std::make_shared<const FixtureGenerator>(FixtureGenerator::from_json_file(settings.mock_generator_fixture));
  } else {
    p.generator = std::make_shared<const FixtureGenerator>(std::map<std::string, std::string>{}, settings.mock_window);
  }
  if (!settings.mock_embedding_fixture.empty()) {
    p.embedder = std::make_shared<const FixtureEmbedder>(FixtureEmbedder::from_json_file(settings.mock_embedding_fixture));
  } else {
    p.embedder = std::make_shared<const HashEmbedder>(settings.mock_dim, settings.mock_seed);
  }
  return p;
}

}  // namespace hyqe
