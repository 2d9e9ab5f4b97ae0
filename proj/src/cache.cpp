#include "hyqe/cache.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hyqe/hashing.hpp"

namespace hyqe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kManifestFlushEvery = 256;

json fingerprint_to_json(const GeneratorFingerprint& fp) {
  return {{"model_name", fp.model_name},
          {"prompt_template_id", fp.prompt_template_id},
          {"params_digest", fp.params_digest},
          {"wrapper_id", fp.wrapper_id}};
}

GeneratorFingerprint fingerprint_from_json(const json& j) {
  return {j.at("model_name").get<std::string>(), j.at("prompt_template_id").get<std::string>(),
          j.at("params_digest").get<std::string>(), j.at("wrapper_id").get<std::string>()};
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomically(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string CacheKey::digest() const {
  return sha256_hex(std::to_string(context_id.size()) + ":" + context_id + fingerprint.canonical());
}

std::string CacheKey::describe() const {
  return "(" + context_id + ", " + fingerprint.model_name + ", " + fingerprint.prompt_template_id + ")";
}

HypotheticalQuerySet CacheRecord::to_query_set() const {
  return {key.context_id, key.fingerprint, queries, embeddings};
}

std::string serialize_record(const CacheRecord& record) {
  json emb = json::array();
  for (const auto& e : record.embeddings) {
    emb.push_back(std::vector<double>(e.values().begin(), e.values().end()));
  }
  const json j = {{"context_id", record.key.context_id},
                  {"fingerprint", fingerprint_to_json(record.key.fingerprint)},
                  {"queries", record.queries},
                  {"embeddings", std::move(emb)},
                  {"embedder_name", record.embedder_name},
                  {"created_at", record.created_at}};
  return j.dump(1) + "\n";
}

CacheRecord deserialize_record(const std::string& text, const CacheKey& expected) {
  const auto where = expected.describe();
  try {
    const auto j = json::parse(text);
    CacheRecord r;
    r.key.context_id = j.at("context_id").get<std::string>();
    r.key.fingerprint = fingerprint_from_json(j.at("fingerprint"));
    if (r.key != expected) throw CorruptRecordError(where, "record belongs to " + r.key.describe());
    r.queries = j.at("queries").get<std::vector<std::string>>();
    for (const auto& v : j.at("embeddings")) r.embeddings.emplace_back(v.get<std::vector<double>>());
    r.embedder_name = j.at("embedder_name").get<std::string>();
    r.created_at = j.at("created_at").get<std::string>();
    r.to_query_set().validate();
    return r;
  } catch (const CorruptRecordError&) {
    throw;
  } catch (const json::exception& e) {
    throw CorruptRecordError(where, e.what());
  } catch (const Error& e) {
    throw CorruptRecordError(where, e.what());
  }
}

CacheKey GenerationDeps::key_for(const std::string& context_id) const {
  return {context_id, make_fingerprint(*generator, prompt_template, params, wrapper)};
}

HypotheticalQueryStore::HypotheticalQueryStore() = default;

HypotheticalQueryStore::HypotheticalQueryStore(const fs::path& root) : root_(root) {
  fs::create_directories(root / "records");
  load_index();
}

HypotheticalQueryStore::~HypotheticalQueryStore() {
  try {
    flush();
  } catch (...) {
  }
}

fs::path HypotheticalQueryStore::record_path(const std::string& digest) const {
  return *root_ / "records" / (digest + ".json");
}

void HypotheticalQueryStore::load_index() {
  const auto manifest_path = *root_ / "manifest.json";
  if (fs::exists(manifest_path)) {
    try {
      const auto j = json::parse(read_file(manifest_path));
      for (const auto& e : j.at("records")) {
        IndexEntry entry{{e.at("context_id").get<std::string>(), fingerprint_from_json(e.at("fingerprint"))},
                         e.at("queries").get<std::size_t>(),
                         e.at("embedder_name").get<std::string>()};
        const auto digest = entry.key.digest();
        if (fs::exists(record_path(digest))) index_.emplace(digest, std::move(entry));
      }
    } catch (const json::exception& e) {
      throw CorruptRecordError("manifest " + manifest_path.string(), e.what());
    }
  }
  // Pick up records whose manifest entry was never flushed.
  for (const auto& file : fs::directory_iterator(*root_ / "records")) {
    if (file.path().extension() != ".json") continue;
    const auto digest = file.path().stem().string();
    if (index_.contains(digest)) continue;
    try {
      const auto j = json::parse(read_file(file.path()));
      CacheKey key{j.at("context_id").get<std::string>(), fingerprint_from_json(j.at("fingerprint"))};
      if (key.digest() != digest) continue;
      auto record = deserialize_record(read_file(file.path()), key);
      index_.emplace(digest, IndexEntry{key, record.queries.size(), record.embedder_name});
      ++unflushed_;
    } catch (const std::exception&) {
      // Left for get() to report against the key that asks for it.
    }
  }
}

void HypotheticalQueryStore::write_manifest_locked() const {
  std::vector<const IndexEntry*> entries;
  entries.reserve(index_.size());
  for (const auto& [digest, entry] : index_) entries.push_back(&entry);
  std::sort(entries.begin(), entries.end(), [](const auto* a, const auto* b) { return a->key < b->key; });
  json records = json::array();
  for (const auto* e : entries) {
    records.push_back({{"digest", e->key.digest()},
                       {"context_id", e->key.context_id},
                       {"fingerprint", fingerprint_to_json(e->key.fingerprint)},
                       {"queries", e->query_count},
                       {"embedder_name", e->embedder_name}});
  }
  write_atomically(*root_ / "manifest.json", json{{"version", 1}, {"records", std::move(records)}}.dump(1) + "\n");
}

void HypotheticalQueryStore::flush() {
  std::unique_lock lock(mu_);
  if (!root_ || unflushed_ == 0) return;
  write_manifest_locked();
  unflushed_ = 0;
}

std::optional<CacheRecord> HypotheticalQueryStore::get(const CacheKey& key) const {
  const auto digest = key.digest();
  {
    std::shared_lock lock(mu_);
    if (const auto it = loaded_.find(digest); it != loaded_.end()) return it->second;
    if (!root_) return std::nullopt;
  }
  const auto path = record_path(digest);
  if (!fs::exists(path)) return std::nullopt;
  auto record = deserialize_record(read_file(path), key);
  std::unique_lock lock(mu_);
  loaded_.insert_or_assign(digest, record);
  return record;
}

void HypotheticalQueryStore::put(const CacheRecord& record) {
  record.to_query_set().validate();
  if (record.embeddings.size() != record.queries.size()) {
    throw InvalidInputError("cache record embeddings are not aligned with queries");
  }
  const auto digest = record.key.digest();
  if (root_) write_atomically(record_path(digest), serialize_record(record));
  std::unique_lock lock(mu_);
  loaded_.insert_or_assign(digest, record);
  index_.insert_or_assign(digest, IndexEntry{record.key, record.queries.size(), record.embedder_name});
  if (root_ && ++unflushed_ >= kManifestFlushEvery) {
    write_manifest_locked();
    unflushed_ = 0;
  }
}

CacheRecord HypotheticalQueryStore::get_or_generate(const ContextDoc& context, const GenerationDeps& deps) {
  return get_or_generate(deps.key_for(context.id), context, deps);
}

CacheRecord HypotheticalQueryStore::get_or_generate(const CacheKey& key, const ContextDoc& context,
                                                    const GenerationDeps& deps) {
  if (!deps.generator || !deps.embedder) throw PreconditionError("generation deps need a generator and an embedder");
  if (key.context_id != context.id) throw PreconditionError("cache key does not match context " + context.id);
  const auto embedder_name = deps.embedder->name();
  if (auto existing = get(key); existing && existing->embedder_name == embedder_name) {
    hits_.fetch_add(1);
    return *existing;
  }

  const auto digest = key.digest();
  std::promise<CacheRecord> promise;
  {
    std::unique_lock lock(flight_mu_);
    if (const auto it = in_flight_.find(digest); it != in_flight_.end()) {
      auto pending = it->second;
      lock.unlock();
      auto record = pending.get();
      hits_.fetch_add(1);
      return record;
    }
    in_flight_.emplace(digest, promise.get_future().share());
  }
  auto finish = [&] {
    std::lock_guard lock(flight_mu_);
    in_flight_.erase(digest);
  };

  try {
    auto existing = get(key);
    CacheRecord record;
    if (existing && existing->embedder_name == embedder_name) {
      hits_.fetch_add(1);
      record = std::move(*existing);
    } else {
      if (existing) {
        record = std::move(*existing);
        hits_.fetch_add(1);
        reembedded_.fetch_add(1);
      } else {
        auto set = generate_for_context(context, deps.prompt_template, *deps.generator, deps.params,
                                        deps.wrapper);
        misses_.fetch_add(1);
        record.key = key;
        record.queries = std::move(set.queries);
        record.created_at = now_iso8601();
      }
      record.embeddings = embed_all(*deps.embedder, record.queries);
      record.embedder_name = embedder_name;
      put(record);
    }
    promise.set_value(record);
    finish();
    return record;
  } catch (...) {
    promise.set_exception(std::current_exception());
    finish();
    throw;
  }
}

CacheStats HypotheticalQueryStore::stats() const {
  CacheStats s;
  {
    std::shared_lock lock(mu_);
    s.records = index_.size();
    for (const auto& [digest, entry] : index_) s.queries += entry.query_count;
  }
  s.hits = hits_.load();
  s.misses = misses_.load();
  s.reembedded = reembedded_.load();
  return s;
}

}  // namespace hyqe
