#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>
#include <thread>

#include "cli_support.hpp"
#include "httplib.h"
#include "hyqe/eval.hpp"
#include "hyqe/mock_providers.hpp"
#include "hyqe/service.hpp"
#include "json.hpp"

using namespace hyqe;
using nlohmann::json;
using Catch::Matchers::WithinAbs;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double mean_ndcg(const std::string& run, const std::string& qrels, std::size_t k = 10) {
  EvaluationReport report;
  cmd_eval(run, qrels, k, &report);
  return report.mean;
}

json rerank_request() {
  json candidates = json::array();
  for (int i = 0; i < 4; ++i) {
    candidates.push_back({{"id", "c" + std::to_string(i)},
                          {"text", "Passage number " + std::to_string(i) + " about topic " + std::to_string(i * 7) + "."},
                          {"baseline_score", 1.0 - 0.1 * i}});
  }
  return {{"query_id", "q1"}, {"query", "Which topic is discussed?"}, {"candidates", candidates}};
}

}  // namespace

TEST_CASE("pregen fills the store once", "[commands]") {
  test::TempDir tmp;
  const auto cache = tmp.str("cache");
  {
    auto ws = Workspace::from_config(test::mock_config(), cache);
    const auto m = cmd_pregen(ws, test::fixture("tiny/corpus.jsonl"));
    CHECK(m.cache.misses == 10);
    CHECK(m.cache.records == 10);
    CHECK(m.generator_calls == 10);
    CHECK(m.to_json().at("provider_calls").at("generator") == 10);
  }
  {
    auto ws = Workspace::from_config(test::mock_config(), cache);
    const auto m = cmd_pregen(ws, test::fixture("tiny/corpus.jsonl"));
    CHECK(m.cache.hits == 10);
    CHECK(m.cache.misses == 0);
    CHECK(m.generator_calls == 0);
  }
  {
    auto cfg = test::mock_config();
    cfg.pipeline.template_id = "argument";
    auto ws = Workspace::from_config(cfg, cache);
    const auto m = cmd_pregen(ws, test::fixture("tiny/corpus.jsonl"));
    CHECK(m.cache.misses == 10);
    CHECK(m.cache.records == 20);
  }
}

TEST_CASE("pregen reports failed contexts after storing the rest", "[commands]") {
  auto providers = make_providers(test::mock_config().providers);
  providers.generator = std::make_shared<const ScriptedGenerator>([](const std::string& p) -> std::string {
    if (p.find("Volcanoes") != std::string::npos) throw ProviderError("boom", false);
    return "Question?";
  });
  auto store = std::make_shared<HypotheticalQueryStore>();
  Workspace ws(test::mock_config(), providers, store);
  try {
    cmd_pregen(ws, test::fixture("tiny/corpus.jsonl"));
    FAIL("expected a provider error");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("1 of 10 contexts failed") != std::string::npos);
  }
  CHECK(store->stats().records == 9);
}

TEST_CASE("rank and sweep reuse stored hypothetical queries", "[commands]") {
  test::TempDir tmp;
  const auto cache = tmp.str("cache");
  {
    auto ws = Workspace::from_config(test::mock_config(), cache);
    cmd_pregen(ws, test::fixture("tiny/corpus.jsonl"));
  }
  auto ws = Workspace::from_config(test::mock_config(), cache);
  const auto rank = cmd_rank(ws, test::tiny_inputs(), tmp.str("out.run"));
  CHECK(rank.generator_calls == 0);
  CHECK(rank.cache.misses == 0);
  CHECK(read_run(tmp.str("out.run")).rankings.size() == 20);

  std::vector<SweepRow> rows;
  auto ws2 = Workspace::from_config(test::mock_config(), cache);
  const auto sweep = cmd_sweep(ws2, test::tiny_inputs(), test::fixture("tiny/qrels.txt"), {0.0, 0.5, 1.0}, &rows);
  CHECK(sweep.generator_calls == 0);
  CHECK(sweep.cache.misses == 0);
  REQUIRE(rows.size() == 3);
  // Each sweep row equals a standalone rank at that lambda.
  for (const auto& row : rows) {
    auto cfg = test::mock_config();
    cfg.pipeline.score.lambda = row.lambda;
    cfg.lambda_set = true;
    auto ws3 = Workspace::from_config(cfg, cache);
    cmd_rank(ws3, test::tiny_inputs(), tmp.str("l.run"));
    CHECK(mean_ndcg(tmp.str("l.run"), test::fixture("tiny/qrels.txt")) == row.mean_ndcg);
  }
  CHECK(format_sweep_table(rows, 10).starts_with("lambda\tndcg@10\n0\t"));
}

TEST_CASE("lambda zero reproduces the embedding order", "[commands]") {
  test::TempDir tmp;
  auto cfg = test::mock_config();
  cfg.pipeline.score.lambda = 0.0;
  cfg.lambda_set = true;
  auto ws = Workspace::from_config(cfg, std::nullopt);
  cmd_rank(ws, test::tiny_inputs(), tmp.str("out.run"));
  const auto run = read_run(tmp.str("out.run"));
  const auto corpus = load_corpus(test::fixture("tiny/corpus.jsonl"));
  const auto queries = load_queries(test::fixture("tiny/queries.jsonl"));
  const HashEmbedder embedder(8, 0);
  for (const auto& q : queries) {
    const auto& ranking = run.rankings.at(q.id);
    const auto qe = embedder.embed_one(q.text);
    for (std::size_t i = 1; i < ranking.size(); ++i) {
      auto sim = [&](const std::string& id) {
        const auto* d = corpus.find(id);
        return similarity(qe, embedder.embed_one(*d->title + " " + d->text), SimilarityMode::cosine);
      };
      CHECK(sim(ranking[i - 1].context_id) >= sim(ranking[i].context_id));
    }
  }
}

TEST_CASE("distractor fixture: hypothetical queries fix the ranking", "[commands][distractor]") {
  test::TempDir tmp;
  auto ws = Workspace::from_config(test::distractor_config(), std::nullopt);
  cmd_rank(ws, test::distractor_inputs(), tmp.str("hyqe.run"));
  const auto qrels = test::fixture("distractor/qrels.txt");
  const double baseline = mean_ndcg(test::fixture("distractor/baseline.run"), qrels);
  const double hyqe = mean_ndcg(tmp.str("hyqe.run"), qrels);
  CHECK_THAT(baseline, WithinAbs(0.7503986983501385, 1e-9));
  CHECK_THAT(hyqe, WithinAbs(1.0, 1e-9));
  const auto run = read_run(tmp.str("hyqe.run"));
  CHECK(run.rankings.at("q3").at(1).context_id == "q3-n");
  CHECK_THAT(run.rankings.at("q1").at(0).score, WithinAbs(1.65, 1e-9));
}

TEST_CASE("hyde times generates n passages per query", "[commands][hyde]") {
  test::TempDir tmp;
  auto cfg = test::mock_config();
  cfg.pipeline.hyde = HydeMode::times;
  cfg.pipeline.hyde_n_contexts = 2;
  {
    auto ws = Workspace::from_config(cfg, tmp.str("cache"));
    cmd_pregen(ws, test::fixture("tiny/corpus.jsonl"));
  }
  auto ws = Workspace::from_config(cfg, tmp.str("cache"));
  const auto m = cmd_rank(ws, test::tiny_inputs(), tmp.str("out.run"));
  CHECK(m.generator_calls == 20 * 2);
  CHECK(m.cache.misses == 0);
}

TEST_CASE("downsampling at ratio one reproduces the full run", "[commands][downsample]") {
  test::TempDir tmp;
  const auto cache = tmp.str("cache");
  auto ws = Workspace::from_config(test::mock_config(), cache);
  cmd_rank(ws, test::tiny_inputs(), tmp.str("full.run"));
  const double full = mean_ndcg(tmp.str("full.run"), test::fixture("tiny/qrels.txt"));

  std::vector<DownsampleRow> rows;
  cmd_downsample(ws, test::tiny_inputs(), test::fixture("tiny/qrels.txt"), {0.5, 1.0}, 3, 42, &rows);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].mean_ndcg == full);
  CHECK(rows[1].stddev == 0.0);
  CHECK(rows[0].trial_ndcg.size() == 3);

  auto cfg = test::mock_config();
  cfg.pipeline.score.downsample = DownsampleConfig{1.0, 99};
  auto ws1 = Workspace::from_config(cfg, cache);
  cmd_rank(ws1, test::tiny_inputs(), tmp.str("ratio1.run"));
  CHECK(slurp(tmp.str("ratio1.run")) == slurp(tmp.str("full.run")));
  CHECK_THROWS_AS(cmd_downsample(ws, test::tiny_inputs(), test::fixture("tiny/qrels.txt"), {0.5}, 0, 1),
                  ConfigError);
}

TEST_CASE("embedding export", "[commands]") {
  test::TempDir tmp;
  auto ws = Workspace::from_config(test::distractor_config(), std::nullopt);
  const auto m = cmd_export_embeddings(ws, test::distractor_inputs(), tmp.str("emb.tsv"));
  std::istringstream in(slurp(tmp.str("emb.tsv")));
  std::string line;
  std::getline(in, line);
  CHECK(line == "role\tid\tparent_id\tquery_id\tvalues");
  std::size_t rows = 0, queries = 0;
  while (std::getline(in, line)) {
    ++rows;
    queries += line.starts_with("query\t");
  }
  CHECK(queries == 5);
  CHECK(m.results.at("rows") == rows);
}

TEST_CASE("candidate lists reject unknown ids", "[commands]") {
  const auto corpus = load_corpus(test::fixture("tiny/corpus.jsonl"));
  const auto queries = load_queries(test::fixture("tiny/queries.jsonl"));
  RankedRun run;
  run.rankings["q00"] = {{"nope", 1.0, 1}};
  CHECK_THROWS_AS(build_candidate_lists(corpus, queries, run, 10), ParseError);
  run.rankings.clear();
  run.rankings["zz"] = {{"d0", 1.0, 1}};
  CHECK_THROWS_AS(build_candidate_lists(corpus, queries, run, 10), ParseError);
}

TEST_CASE("rerank service", "[service]") {
  auto ws = Workspace::from_config(test::mock_config(), std::nullopt);
  const RerankService service(ws);
  const auto body = rerank_request().dump();
  const auto [status, first] = service.handle(body);
  REQUIRE(status == 200);
  CHECK(first.at("query_id") == "q1");
  CHECK(first.at("results").size() == 4);
  CHECK(first.at("results")[0].at("rank") == 1);
  CHECK(first.at("results")[0].contains("best_hypothetical_query"));
  const auto [status2, second] = service.handle(body);
  CHECK(status2 == 200);
  CHECK(second == first);

  CHECK(service.handle("{not json").first == 400);
  CHECK(service.handle(R"({"query": "x"})").first == 400);
  CHECK(service.handle(R"({"query": "x", "candidates": [{"id": "a"}]})").first == 400);
  auto rising = rerank_request();
  rising["candidates"][1]["baseline_score"] = 5.0;
  CHECK(service.handle(rising.dump()).first == 400);
}

TEST_CASE("rerank service at lambda zero follows embedding similarity", "[service]") {
  auto cfg = test::mock_config();
  cfg.pipeline.score.lambda = 0.0;
  cfg.lambda_set = true;
  auto ws = Workspace::from_config(cfg, std::nullopt);
  const auto [status, out] = RerankService(ws).handle(rerank_request().dump());
  REQUIRE(status == 200);
  for (std::size_t i = 1; i < out.at("results").size(); ++i) {
    CHECK(out.at("results")[i - 1].at("qc_term").get<double>() >= out.at("results")[i].at("qc_term").get<double>());
    CHECK(out.at("results")[i].at("score") == out.at("results")[i].at("qc_term"));
  }
}

TEST_CASE("rerank service maps provider failures", "[service]") {
  auto providers = make_providers(test::mock_config().providers);
  providers.generator = std::make_shared<const ScriptedGenerator>([](const std::string&) -> std::string {
    throw ProviderError("upstream unavailable", true);
  });
  auto cfg = test::mock_config();
  Workspace lenient(cfg, providers, std::make_shared<HypotheticalQueryStore>());
  const auto [ok, body] = RerankService(lenient).handle(rerank_request().dump());
  CHECK(ok == 200);
  CHECK(body.at("incidents").size() == 4);

  cfg.pipeline.strict = true;
  Workspace strict(cfg, providers, std::make_shared<HypotheticalQueryStore>());
  const auto [status, err] = RerankService(strict).handle(rerank_request().dump());
  CHECK(status == 502);
  CHECK(err.at("error") == "ProviderError");
}

TEST_CASE("rerank over HTTP", "[service][http]") {
  auto ws = Workspace::from_config(test::mock_config(), std::nullopt);
  RerankHttpServer server(ws);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  for (int attempt = 0; attempt < 100 && !client.Get("/health"); ++attempt) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  const auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  const auto res = client.Post("/rerank", rerank_request().dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body) == RerankService(ws).handle(rerank_request().dump()).second);
  const auto bad = client.Post("/rerank", "[]", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  server.stop();
  t.join();
}

TEST_CASE("command-line tool", "[cli]") {
  test::TempDir tmp;
  const auto ok = test::run_cli("eval --run '" + test::fixture("distractor/baseline.run") + "' --qrels '" +
                                test::fixture("distractor/qrels.txt") + "' --manifest '" + tmp.str("m.json") + "'");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("all\tndcg@10\t0.7504") != std::string::npos);
  CHECK(json::parse(slurp(tmp.str("m.json"))).at("command") == "eval");

  const auto bad = test::run_cli("eval --run '" + test::fixture("runs/bad_rank.run") + "' --qrels '" +
                                 test::fixture("distractor/qrels.txt") + "'");
  CHECK(bad.exit_code == 1);
  const auto err = json::parse(bad.output.substr(bad.output.find('{')));
  CHECK(err.at("error") == "ParseError");
  CHECK(err.at("line") == 3);

  const auto missing = test::run_cli("rank --mock --corpus /nonexistent --queries x --run y --out z");
  CHECK(missing.exit_code == 1);
  CHECK(missing.output.find("\"error\"") != std::string::npos);

  const auto half = test::run_cli("rank --mock --downsample-ratio 0.5 --corpus '" + test::fixture("tiny/corpus.jsonl") +
                                  "' --queries x --run y --out z");
  CHECK(half.exit_code == 1);
  CHECK(half.output.find("ConfigError") != std::string::npos);

  const auto rank = test::run_cli("rank --mock --lambda 0.5 --corpus '" + test::fixture("tiny/corpus.jsonl") +
                                  "' --queries '" + test::fixture("tiny/queries.jsonl") + "' --run '" +
                                  test::fixture("tiny/baseline.run") + "' --out '" + tmp.str("cli.run") +
                                  "' --cache '" + tmp.str("cache") + "'");
  CHECK(rank.exit_code == 0);
  CHECK(rank.output.find("manifest: ") != std::string::npos);
  CHECK(read_run(tmp.str("cli.run")).rankings.size() == 20);
}

TEST_CASE("config files", "[config]") {
  test::TempDir tmp;
  std::ofstream(tmp.str("c.json")) << R"({"pipeline": {"k": 3, "hyde": "plus"},
    "score": {"lambda": 0.25, "aggregation": "mean", "downsample": {"ratio": 0.5, "seed": 9}},
    "providers": {"kind": "mock", "mock": {"dim": 4}}})";
  auto cfg = load_config(tmp.str("c.json"));
  CHECK(cfg.pipeline.k == 3);
  CHECK(cfg.pipeline.hyde == HydeMode::plus);
  CHECK(cfg.pipeline.score.lambda == 0.25);
  CHECK(cfg.lambda_set);
  CHECK(cfg.pipeline.score.aggregation == Aggregation::mean);
  CHECK(cfg.pipeline.score.downsample->seed == 9);
  CHECK(cfg.providers.mock_dim == 4);

  std::ofstream(tmp.str("bad.json")) << R"({"pipeline": {"kk": 3}})";
  CHECK_THROWS_AS(load_config(tmp.str("bad.json")), ConfigError);

  AppConfig defaults;
  defaults.resolve_defaults();
  CHECK(defaults.pipeline.score.lambda == 0.3);  // text-embedding-3-large
  AppConfig bge;
  bge.providers.openai.embedding_model = "BAAI/bge-base-en-v1.5";
  bge.resolve_defaults();
  CHECK(bge.pipeline.score.lambda == 0.03);
  CHECK(bge.pipeline.score.qh_mode == SimilarityMode::inner_product);
}
