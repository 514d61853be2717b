#include "skillbank/replay_cache.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "skillbank/hash.hpp"
#include "json.hpp"

namespace skillbank {

using ordered_json = nlohmann::ordered_json;

namespace {

void frame(std::string& buf, std::string_view component) {
  buf += std::to_string(component.size());
  buf += ':';
  buf += component;
}

}  // namespace

CacheKey make_key(const std::string& worker_version, const std::string& task_id,
                  const std::vector<Skill>& retrieved) {
  if (worker_version.empty()) throw InvalidInput("make_key: empty worker version");
  if (task_id.empty()) throw InvalidInput("make_key: empty task id");
  std::string buf;
  frame(buf, worker_version);
  frame(buf, task_id);
  for (const Skill& s : retrieved) frame(buf, canonical_bytes(s));
  return CacheKey{sha256_hex(buf), worker_version};
}

ReplayCache::ReplayCache(std::optional<std::filesystem::path> dir,
                         bool read_through)
    : dir_(std::move(dir)), read_through_(read_through) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

std::optional<CacheEntry> ReplayCache::get(const CacheKey& key,
                                           CacheChannel channel) {
  std::optional<CacheEntry> found;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key.digest);
    if (it != map_.end()) {
      found = it->second;
    } else if (read_through_ && dir_) {
      found = load_from_disk(key.digest);
      if (found) map_.emplace(key.digest, *found);
    }
  }
  bool hit = found && found->worker_version == key.worker_version;
  (hit ? hits_ : misses_).fetch_add(1, std::memory_order_relaxed);
  if (channel == CacheChannel::Loo)
    (hit ? loo_hits_ : loo_misses_).fetch_add(1, std::memory_order_relaxed);
  if (!hit) return std::nullopt;
  return found;
}

void ReplayCache::put(const CacheKey& key, const CacheEntry& entry) {
  if (entry.worker_version != key.worker_version)
    throw InvalidInput("cache put: entry worker version '" +
                       entry.worker_version + "' does not match key context '" +
                       key.worker_version + "'");
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = map_.emplace(key.digest, entry);
  if (inserted && dir_) persist(key.digest, entry);
}

std::size_t ReplayCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return map_.size();
}

CacheRoundStats ReplayCache::snapshot_round() {
  CacheRoundStats now{hits_.load(), misses_.load(), loo_hits_.load(),
                      loo_misses_.load()};
  CacheRoundStats delta{now.hits - last_.hits, now.misses - last_.misses,
                        now.loo_hits - last_.loo_hits,
                        now.loo_misses - last_.loo_misses};
  last_ = now;
  history_.push_back(delta);
  return delta;
}

std::string cache_entry_to_json(const CacheEntry& entry) {
  ordered_json o;
  o["task_id"] = entry.trajectory.task_id;
  o["retrieved"] = entry.trajectory.retrieved;
  o["reward"] = entry.trajectory.reward;
  o["success"] = entry.trajectory.success;
  o["steps"] = entry.trajectory.steps;
  o["worker_version"] = entry.worker_version;
  o["created_round"] = entry.created_round;
  return o.dump(2) + "\n";
}

CacheEntry cache_entry_from_json(const std::string& text) {
  ordered_json o;
  try {
    o = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cache entry: ") + e.what());
  }
  CacheEntry e;
  try {
    e.trajectory.task_id = o.at("task_id").get<std::string>();
    e.trajectory.retrieved = o.at("retrieved").get<std::vector<std::string>>();
    e.trajectory.reward = o.at("reward").get<double>();
    e.trajectory.success = o.at("success").get<bool>();
    e.trajectory.steps = o.at("steps").get<int>();
    e.worker_version = o.at("worker_version").get<std::string>();
    e.created_round = o.at("created_round").get<int>();
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("cache entry: ") + err.what());
  }
  return e;
}

std::optional<CacheEntry> ReplayCache::load_from_disk(const std::string& digest) {
  std::filesystem::path p = *dir_ / (digest + ".json");
  std::ifstream in(p);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return cache_entry_from_json(ss.str());
  } catch (const ParseError& e) {
    std::cerr << "replay cache: ignoring corrupted entry " << p.string() << ": "
              << e.what() << "\n";
    return std::nullopt;
  }
}

void ReplayCache::persist(const std::string& digest, const CacheEntry& entry) {
  std::filesystem::path final_path = *dir_ / (digest + ".json");
  std::filesystem::path tmp = *dir_ / (digest + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) {
      std::cerr << "replay cache: cannot persist entry to " << tmp.string() << "\n";
      return;
    }
    out << cache_entry_to_json(entry);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
  if (ec)
    std::cerr << "replay cache: rename failed for " << final_path.string()
              << ": " << ec.message() << "\n";
}

std::size_t ReplayCache::purge_dir(const std::filesystem::path& dir,
                                   const std::string& keep_version) {
  if (!std::filesystem::is_directory(dir)) return 0;
  std::size_t removed = 0;
  for (const auto& de : std::filesystem::directory_iterator(dir)) {
    if (!de.is_regular_file() || de.path().extension() != ".json") continue;
    bool drop = false;
    std::ifstream in(de.path());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      drop = cache_entry_from_json(ss.str()).worker_version != keep_version;
    } catch (const ParseError&) {
      drop = true;  // corrupted entries are purged too
    }
    if (drop) {
      std::filesystem::remove(de.path());
      ++removed;
    }
  }
  return removed;
}

// --- cached rollout plumbing (declared in rollout.hpp) ---

Trajectory cached_rollout(const Worker& worker, const TaskQuery& task,
                          const std::vector<Skill>& retrieved,
                          ReplayCache* cache, int round, CacheChannel channel) {
  if (!cache) return rollout(worker, task, retrieved);
  CacheKey key = make_key(worker.version_tag(), task.task_id, retrieved);
  if (auto hit = cache->get(key, channel)) return hit->trajectory;
  Trajectory t = rollout(worker, task, retrieved);
  cache->put(key, CacheEntry{t, worker.version_tag(), round});
  return t;
}

Trajectory loo_replay(const Worker& worker, const TaskQuery& task,
                      const std::vector<Skill>& retrieved,
                      const std::string& excluded_id, ReplayCache* cache,
                      int round) {
  std::vector<Skill> rest;
  rest.reserve(retrieved.size() > 0 ? retrieved.size() - 1 : 0);
  bool found = false;
  for (const Skill& s : retrieved) {
    if (!found && s.id == excluded_id) {
      found = true;
      continue;
    }
    rest.push_back(s);
  }
  if (!found)
    throw InvalidInput("loo_replay: excluded skill '" + excluded_id +
                       "' is not in the retrieval set of task '" + task.task_id +
                       "'");
  return cached_rollout(worker, task, rest, cache, round, CacheChannel::Loo);
}

}  // namespace skillbank
