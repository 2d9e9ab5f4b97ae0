#pragma once

#include <atomic>
#include <compare>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "hyqe/genqueries.hpp"
#include "hyqe/providers.hpp"

namespace hyqe {

struct CacheKey {
  std::string context_id;
  GeneratorFingerprint fingerprint;

  /// Content-addressed name of the record file.
  std::string digest() const;
  std::string describe() const;

  auto operator<=>(const CacheKey&) const = default;
};

struct CacheRecord {
  CacheKey key;
  std::vector<std::string> queries;
  std::vector<Embedding> embeddings;  // aligned 1:1 with queries
  std::string embedder_name;
  std::string created_at;  // ISO-8601 UTC

  HypotheticalQuerySet to_query_set() const;

  friend bool operator==(const CacheRecord&, const CacheRecord&) = default;
};

/// Serialized form written to disk. Stable: equal records give equal bytes.
std::string serialize_record(const CacheRecord& record);
/// Throws CorruptRecordError naming `expected`'s key on any inconsistency.
CacheRecord deserialize_record(const std::string& text, const CacheKey& expected);

struct CacheStats {
  std::size_t records = 0;
  std::size_t queries = 0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t reembedded = 0;  // hits whose embeddings were recomputed for a new embedder
};

/// Everything needed to produce a record on a cache miss.
struct GenerationDeps {
  const TextGenerator* generator = nullptr;
  const Embedder* embedder = nullptr;
  PromptTemplate prompt_template = PromptTemplate::default_template();
  GenerationParams params;
  PromptWrapper wrapper = PromptWrapper::openai_system();

  CacheKey key_for(const std::string& context_id) const;
};

/// Persistent store of hypothetical-query sets and their embeddings.
///
/// Layout: <root>/manifest.json indexes every record; each record lives in
/// <root>/records/<key digest>.json. Records are written to a temporary file
/// and renamed into place. Opening a store reconciles the manifest with the
/// records directory, so records written before a crash are not lost.
///
/// Any number of threads may call into one store. Concurrent misses on the
/// same key run generation once; the other callers wait for its result.
class HypotheticalQueryStore {
 public:
  /// A store that keeps records in memory only.
  HypotheticalQueryStore();
  /// Opens or creates a store rooted at `root`.
  explicit HypotheticalQueryStore(const std::filesystem::path& root);

  HypotheticalQueryStore(const HypotheticalQueryStore&) = delete;
  HypotheticalQueryStore& operator=(const HypotheticalQueryStore&) = delete;
  ~HypotheticalQueryStore();

  std::optional<CacheRecord> get(const CacheKey& key) const;
  void put(const CacheRecord& record);

  /// Stored record when present and embedded by deps.embedder; stored
  /// queries re-embedded when the embedder changed; otherwise generates,
  /// embeds and persists a new record.
  CacheRecord get_or_generate(const CacheKey& key, const ContextDoc& context, const GenerationDeps& deps);
  CacheRecord get_or_generate(const ContextDoc& context, const GenerationDeps& deps);

  CacheStats stats() const;
  /// Writes the manifest if it changed since the last flush.
  void flush();

  const std::optional<std::filesystem::path>& root() const noexcept { return root_; }

 private:
  struct IndexEntry {
    CacheKey key;
    std::size_t query_count = 0;
    std::string embedder_name;
  };

  void load_index();
  void write_manifest_locked() const;
  std::filesystem::path record_path(const std::string& digest) const;

  std::optional<std::filesystem::path> root_;
  mutable std::shared_mutex mu_;
  std::map<std::string, IndexEntry> index_;            // digest -> entry
  mutable std::map<std::string, CacheRecord> loaded_;  // digest -> record
  std::size_t unflushed_ = 0;

  std::mutex flight_mu_;
  std::map<std::string, std::shared_future<CacheRecord>> in_flight_;

  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
  std::atomic<std::size_t> reembedded_{0};
};

}  // namespace hyqe
