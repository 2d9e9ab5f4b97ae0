#include <catch_amalgamated.hpp>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "hyqe/cache.hpp"
#include "hyqe/mock_providers.hpp"
#include "test_support.hpp"

using namespace hyqe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_records(const fs::path& root) {
  std::size_t n = 0;
  for (const auto& f : fs::directory_iterator(root / "records")) n += f.path().extension() == ".json";
  return n;
}

struct Env {
  FixtureGenerator generator;
  HashEmbedder embedder{8, 1};
  GenerationDeps deps;
  Env() {
    deps.generator = &generator;
    deps.embedder = &embedder;
  }
};

const ContextDoc kDoc{"d1", "Retrieval uses embeddings. Caches amortize work.", "Title"};

}  // namespace

TEST_CASE("record serialization round-trips", "[cache]") {
  Env env;
  HypotheticalQueryStore store;
  const auto rec = store.get_or_generate(kDoc, env.deps);
  CHECK(rec.queries.size() == 3);  // title line plus two sentences
  CHECK(rec.embeddings.size() == rec.queries.size());
  CHECK(rec.embedder_name == env.embedder.name());
  CHECK(rec.created_at.ends_with("Z"));
  const auto text = serialize_record(rec);
  CHECK(deserialize_record(text, rec.key) == rec);
  CHECK(serialize_record(deserialize_record(text, rec.key)) == text);

  CacheKey other = rec.key;
  other.context_id = "d2";
  CHECK_THROWS_AS(deserialize_record(text, other), CorruptRecordError);
  CHECK_THROWS_AS(deserialize_record("{not json", rec.key), CorruptRecordError);
}

TEST_CASE("persistent store reopens with identical records", "[cache]") {
  test::TempDir tmp;
  Env env;
  CacheRecord first;
  {
    HypotheticalQueryStore store(tmp.path());
    first = store.get_or_generate(kDoc, env.deps);
    CHECK(store.stats().misses == 1);
    CHECK(store.get_or_generate(kDoc, env.deps) == first);
    CHECK(store.stats().hits == 1);
  }
  CHECK(fs::exists(tmp.path() / "manifest.json"));
  CHECK(count_records(tmp.path()) == 1);
  const auto record_file = fs::directory_iterator(tmp.path() / "records")->path();
  const auto bytes = slurp(record_file);
  {
    HypotheticalQueryStore store(tmp.path());
    CHECK(store.stats().records == 1);
    CHECK(store.stats().queries == first.queries.size());
    CHECK(store.get_or_generate(kDoc, env.deps) == first);
    CHECK(store.stats().hits == 1);
    CHECK(store.stats().misses == 0);
  }
  CHECK(env.generator.call_count() == 1);
  CHECK(slurp(record_file) == bytes);
}

TEST_CASE("hit and miss accounting", "[cache]") {
  Env env;
  HypotheticalQueryStore store;
  for (int i = 0; i < 3; ++i) {
    store.get_or_generate({"c" + std::to_string(i), "Text " + std::to_string(i) + ".", std::nullopt}, env.deps);
  }
  store.get_or_generate({"c0", "Text 0.", std::nullopt}, env.deps);
  store.get_or_generate({"c2", "Text 2.", std::nullopt}, env.deps);
  const auto s = store.stats();
  CHECK(s.misses == 3);
  CHECK(s.hits == 2);
  CHECK(s.records == 3);
  CHECK(s.queries == 3);
  CHECK(env.generator.call_count() == 3);
}

TEST_CASE("fingerprint changes miss", "[cache]") {
  Env env;
  HypotheticalQueryStore store;
  store.get_or_generate(kDoc, env.deps);
  auto changed = env.deps;
  changed.prompt_template = PromptTemplate::argument_template();
  store.get_or_generate(kDoc, changed);
  changed = env.deps;
  changed.params.temperature = 0.9;
  store.get_or_generate(kDoc, changed);
  CHECK(store.stats().misses == 3);
  CHECK(store.stats().records == 3);
}

TEST_CASE("concurrent misses generate once", "[cache]") {
  std::atomic<int> calls{0};
  const ScriptedGenerator slow([&](const std::string&) {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    return "A?\nB?";
  });
  HashEmbedder embedder;
  GenerationDeps deps;
  deps.generator = &slow;
  deps.embedder = &embedder;
  HypotheticalQueryStore store;
  std::vector<CacheRecord> results(4);
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < results.size(); ++i) {
      threads.emplace_back([&, i] { results[i] = store.get_or_generate(kDoc, deps); });
    }
  }
  CHECK(calls == 1);
  for (const auto& r : results) CHECK(r == results[0]);
  CHECK(store.stats().misses == 1);
  CHECK(store.stats().hits == 3);
}

TEST_CASE("a new embedder re-embeds without regenerating", "[cache]") {
  test::TempDir tmp;
  Env env;
  HypotheticalQueryStore store(tmp.path());
  const auto first = store.get_or_generate(kDoc, env.deps);
  const HashEmbedder swapped(8, 99);
  auto deps = env.deps;
  deps.embedder = &swapped;
  const auto second = store.get_or_generate(kDoc, deps);
  CHECK(env.generator.call_count() == 1);
  CHECK(swapped.texts_embedded() == first.queries.size());
  CHECK(second.queries == first.queries);
  CHECK(second.embedder_name == swapped.name());
  CHECK(second.embeddings != first.embeddings);
  CHECK(store.stats().reembedded == 1);
  CHECK(store.stats().records == 1);
}

TEST_CASE("corrupt records are reported, not silently regenerated", "[cache]") {
  test::TempDir tmp;
  Env env;
  CacheKey key;
  {
    HypotheticalQueryStore store(tmp.path());
    key = store.get_or_generate(kDoc, env.deps).key;
  }
  std::ofstream(tmp.path() / "records" / (key.digest() + ".json"), std::ios::trunc) << "{\"truncated\": ";
  HypotheticalQueryStore store(tmp.path());
  CHECK_THROWS_AS(store.get(key), CorruptRecordError);
  CHECK_THROWS_AS(store.get_or_generate(kDoc, env.deps), CorruptRecordError);
  CHECK(env.generator.call_count() == 1);
}

TEST_CASE("generation failures leave no record", "[cache]") {
  test::TempDir tmp;
  const ScriptedGenerator failing([](const std::string&) -> std::string {
    throw ProviderError("upstream down", true);
  });
  HashEmbedder embedder;
  GenerationDeps deps;
  deps.generator = &failing;
  deps.embedder = &embedder;
  HypotheticalQueryStore store(tmp.path());
  CHECK_THROWS_AS(store.get_or_generate(kDoc, deps), ProviderError);
  CHECK(store.stats().records == 0);
  CHECK(count_records(tmp.path()) == 0);
  CHECK_FALSE(store.get(deps.key_for(kDoc.id)));
}

TEST_CASE("unlisted record files are reconciled on open", "[cache]") {
  test::TempDir src_dir, dst_dir;
  Env env;
  CacheRecord rec;
  {
    HypotheticalQueryStore store(src_dir.path());
    rec = store.get_or_generate(kDoc, env.deps);
  }
  {
    HypotheticalQueryStore empty(dst_dir.path());
  }
  fs::copy(src_dir.path() / "records", dst_dir.path() / "records", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  HypotheticalQueryStore store(dst_dir.path());
  CHECK(store.stats().records == 1);
  CHECK(store.get(rec.key) == rec);
}

TEST_CASE("put validates records", "[cache]") {
  HypotheticalQueryStore store;
  CacheRecord rec;
  rec.key.context_id = "c";
  rec.queries = {"a", "b"};
  rec.embeddings = {Embedding{1.0}};
  CHECK_THROWS_AS(store.put(rec), InvalidInputError);
  rec.queries = {"a", "a"};
  rec.embeddings = {Embedding{1.0}, Embedding{1.0}};
  CHECK_THROWS_AS(store.put(rec), DuplicateIdError);
}
