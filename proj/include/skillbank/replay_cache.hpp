#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "skillbank/rollout.hpp"
#include "skillbank/skill.hpp"

namespace skillbank {

// Channel only affects hit/miss accounting, not lookup semantics.
enum class CacheChannel { Factual, Loo };

struct CacheKey {
  std::string digest;          // 64 hex chars
  std::string worker_version;  // context the key was derived under
  bool operator==(const CacheKey&) const = default;
};

// SHA-256 over length-prefixed components: worker version, task id, then
// each retrieved skill's canonical bytes in rank order. Any reordering or
// single-byte content change yields a different digest.
CacheKey make_key(const std::string& worker_version, const std::string& task_id,
                  const std::vector<Skill>& retrieved);

struct CacheEntry {
  Trajectory trajectory;
  std::string worker_version;
  int created_round = 0;
  bool operator==(const CacheEntry&) const = default;
};

struct CacheRoundStats {
  long hits = 0, misses = 0;
  long loo_hits = 0, loo_misses = 0;  // subset of the totals
  double hit_rate() const {
    long n = hits + misses;
    return n > 0 ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }
  double loo_hit_rate() const {
    long n = loo_hits + loo_misses;
    return n > 0 ? static_cast<double>(loo_hits) / static_cast<double>(n) : 0.0;
  }
};

// In-memory map with optional one-file-per-entry persistence (filename =
// digest, JSON body). Reads go to disk only when constructed with
// read_through = true, so a fresh run never observes a previous run's
// entries unless asked to. Thread-safe.
class ReplayCache {
 public:
  explicit ReplayCache(std::optional<std::filesystem::path> dir = {},
                       bool read_through = false);

  // Present iff the digest is known and the stored worker version matches
  // the key's; a stale version counts as a miss (lazy invalidation).
  std::optional<CacheEntry> get(const CacheKey& key,
                                CacheChannel channel = CacheChannel::Factual);

  // Idempotent; the first entry for a digest wins. The entry's version
  // must match the key's derivation context.
  void put(const CacheKey& key, const CacheEntry& entry);

  std::size_t size() const;
  long total_hits() const { return hits_.load(); }
  long total_misses() const { return misses_.load(); }

  // Stats accumulated since the previous snapshot; appends to history().
  CacheRoundStats snapshot_round();
  const std::vector<CacheRoundStats>& history() const { return history_; }

  // Removes persisted entries whose version differs from keep_version
  // (corrupted files are removed too). Returns the number removed.
  static std::size_t purge_dir(const std::filesystem::path& dir,
                               const std::string& keep_version);

 private:
  std::optional<CacheEntry> load_from_disk(const std::string& digest);
  void persist(const std::string& digest, const CacheEntry& entry);

  mutable std::mutex mu_;
  std::unordered_map<std::string, CacheEntry> map_;
  std::optional<std::filesystem::path> dir_;
  bool read_through_ = false;
  std::atomic<long> hits_{0}, misses_{0}, loo_hits_{0}, loo_misses_{0};
  CacheRoundStats last_{};
  std::vector<CacheRoundStats> history_;
};

std::string cache_entry_to_json(const CacheEntry& entry);
CacheEntry cache_entry_from_json(const std::string& text);

}  // namespace skillbank
