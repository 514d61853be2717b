#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "skillbank/skill.hpp"

namespace skillbank {

enum class Split { Support, Query, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct TaskQuery {
  std::string task_id;
  std::string text;
  Split split = Split::Support;
  bool operator==(const TaskQuery&) const = default;
};

struct Trajectory {
  std::string task_id;
  std::vector<std::string> retrieved;  // skill ids, retrieval rank order
  double reward = 0;                   // in [0, 1]
  bool success = false;               // reward >= success threshold
  int steps = 0;
  bool operator==(const Trajectory&) const = default;
};

// A worker failure, annotated with the task that triggered it.
struct RolloutError : std::runtime_error {
  RolloutError(std::string task, const std::string& what)
      : std::runtime_error("rollout of task '" + task + "' failed: " + what),
        task_id(std::move(task)) {}
  std::string task_id;
};

class Worker {
 public:
  virtual ~Worker() = default;
  // Identifies model + prompt template; changing it invalidates cached
  // rollouts. Must be stable across calls.
  virtual std::string version_tag() const = 0;
  // Deterministic given (task, retrieved); safe for concurrent calls.
  virtual Trajectory run(const TaskQuery& task,
                         const std::vector<Skill>& retrieved) const = 0;
};

// Validates the worker result and wraps failures in RolloutError.
Trajectory rollout(const Worker& worker, const TaskQuery& task,
                   const std::vector<Skill>& retrieved);

// Success/failure crossed with empty/non-empty retrieval.
struct QuadrantPartition {
  std::vector<Trajectory> success_no_retrieval;
  std::vector<Trajectory> failure_no_retrieval;
  std::vector<Trajectory> success_retrieval;
  std::vector<Trajectory> failure_retrieval;
};

QuadrantPartition partition_quadrants(const std::vector<Trajectory>& trajectories);

// Tag annotations parsed from a skill's when_to_apply, format
// "tags: helpful=<tag,...>; harmful=<tag,...>". Absent lists are empty.
struct SkillTags {
  std::vector<std::string> helpful;  // sorted, unique
  std::vector<std::string> harmful;
};

SkillTags parse_skill_tags(const std::string& when_to_apply);

struct WorldTask {
  TaskQuery query;
  std::string required_tag;
  bool base_solvable = false;
};

struct WorldGenSpec {
  int n_tags = 4;
  int n_tasks_per_split = 6;
  double solvable_fraction = 0.25;
  std::uint64_t seed = 42;
};

// Deterministic capability-tag environment. Task ids are globally unique,
// which makes the splits pairwise disjoint.
class SyntheticWorld {
 public:
  static SyntheticWorld from_components(std::vector<std::string> tags,
                                        std::vector<WorldTask> tasks);
  static SyntheticWorld generate(const WorldGenSpec& spec);
  static SyntheticWorld load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_json_string() const;

  std::vector<TaskQuery> tasks(Split split) const;  // file order
  const WorldTask& task(const std::string& task_id) const;
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<WorldTask>& all_tasks() const { return tasks_; }
  // Content digest; feeds the synthetic worker's version tag.
  const std::string& digest() const { return digest_; }

 private:
  SyntheticWorld() = default;
  std::vector<std::string> tags_;
  std::vector<WorldTask> tasks_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::string digest_;
};

// Reward rule: 1 if the task is base solvable, or some retrieved skill
// lists required_tag as helpful and none lists it as harmful; else 0.
// Single step; success means reward >= success_threshold.
class SyntheticWorker final : public Worker {
 public:
  explicit SyntheticWorker(const SyntheticWorld& world,
                           double success_threshold = 1.0);
  std::string version_tag() const override;
  Trajectory run(const TaskQuery& task,
                 const std::vector<Skill>& retrieved) const override;
  long calls() const { return calls_.load(); }

 private:
  const SyntheticWorld& world_;
  double success_threshold_;
  std::string version_;
  mutable std::atomic<long> calls_{0};
};

// Forward declarations; definitions live with the cache (replay_cache).
class ReplayCache;
enum class CacheChannel;

// Rollout served through the cache when one is provided; a miss runs the
// worker and stores the result.
Trajectory cached_rollout(const Worker& worker, const TaskQuery& task,
                          const std::vector<Skill>& retrieved,
                          ReplayCache* cache, int round, CacheChannel channel);

// Replay with `excluded_id` removed from the retrieval set, survivor order
// preserved. The excluded skill must be present.
Trajectory loo_replay(const Worker& worker, const TaskQuery& task,
                      const std::vector<Skill>& retrieved,
                      const std::string& excluded_id, ReplayCache* cache,
                      int round);

// JSON-lines serialization of trajectories.
std::string trajectory_to_json_line(const Trajectory& t);
Trajectory trajectory_from_json_line(const std::string& line);

}  // namespace skillbank
