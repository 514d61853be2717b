#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skillbank/objectives.hpp"
#include "skillbank/pareto.hpp"
#include "skillbank/proposers.hpp"
#include "skillbank/remote_proposer.hpp"
#include "skillbank/replay_cache.hpp"
#include "skillbank/retrieval.hpp"
#include "skillbank/rollout.hpp"

namespace skillbank {

enum class ProposerMode { RuleBased, Remote };

struct EditOpSet {
  bool add = true;  // always enabled
  bool rewrite = true;
  bool remove = true;
  bool operator==(const EditOpSet&) const = default;
};

struct RunConfig {
  std::filesystem::path world_path;
  int rounds = 10;
  int candidates = 4;  // K
  double epsilon_tol = 0.03;
  RetrievalConfig retrieval;
  double epsilon_reg = 1e-6;
  ObjectiveSet objectives;
  EditOpSet edit_ops;
  double success_threshold = 1.0;
  std::uint64_t seed = 42;
  int embedding_dim = 256;
  std::optional<std::filesystem::path> cache_dir;
  bool reuse_cache = false;  // read persisted entries from previous runs
  ProposerMode proposer = ProposerMode::RuleBased;
  RemoteConfig remote;
};

// Throws ValidationError when an invariant is broken (util or Add
// disabled, non-positive rounds/candidates, bad tolerances).
void validate_config(const RunConfig& cfg);

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

ObjectiveSet objectives_from_list(const std::vector<std::string>& names);
EditOpSet edit_ops_from_list(const std::vector<std::string>& names);

struct CandidateSummary {
  std::string bank_id;
  ObjectiveProfile profile;
  bool is_null = false;
  bool selected = false;
  bool eval_failed = false;
  std::string combo;  // "null" for the incumbent
  EditCounts applied;
  std::vector<std::string> skill_ids;
  std::string diagnostic;  // present when eval_failed
};

struct RoundReport {
  int round = 0;
  std::string bank_id;          // winner
  std::size_t bank_size = 0;
  ObjectiveProfile profile;     // winner profile
  bool winner_is_null = false;
  int n_candidates = 0;         // proposed banks, null excluded
  EditCounts edit_counts;       // applied diff of the winner
  double cache_hit_rate = 0;    // this round, factual + LOO
  double loo_hit_rate = 0;      // this round, LOO only
  double wall_time_s = 0;       // in-memory only, never serialized
  std::vector<std::string> bank_skill_ids;
  std::vector<CandidateSummary> candidates;  // evaluation order
  double u_max = 0;
  std::vector<std::string> tie_pool;
  std::map<std::string, double> contributions;
  std::vector<std::string> support_task_ids;  // split-separation audit
  std::vector<std::string> query_task_ids;
};

// Deterministic serialization; wall_time_s is deliberately omitted so
// identical runs produce byte-identical report streams.
std::string round_report_to_json_line(const RoundReport& report);

struct InnerResult {
  std::vector<PlannedCandidate> candidates;
  EditPools pools;
  std::vector<std::string> support_task_ids;
  std::vector<Trajectory> support_trajectories;
};

// Non-owning wiring; every pointer must outlive the loop.
struct LoopComponents {
  const Worker* worker = nullptr;
  const EmbeddingProvider* provider = nullptr;
  Distiller* distiller = nullptr;
  Diagnoser* diagnoser = nullptr;
  EditPlanner* planner = nullptr;
  ReplayCache* cache = nullptr;  // optional
};

class CurationLoop {
 public:
  CurationLoop(const RunConfig& cfg, const SyntheticWorld& world,
               LoopComponents components);

  // Rolls out every support task with empty retrieval and distills the
  // failures into the initial bank (round 0).
  SkillBank cold_start();

  // Algorithm: support rollouts with retrieval, quadrant split, distill,
  // leave-one-out evidence, per-skill verdicts, edit planning.
  InnerResult inner_loop(const SkillBank& bank, int round);

  // Evaluates candidates plus the injected null on the query split,
  // selects Pareto-then-hypervolume, applies the winner.
  std::pair<SkillBank, RoundReport> outer_step(const SkillBank& current,
                                               const InnerResult& inner,
                                               int round);

  struct Result {
    SkillBank initial_bank;
    SkillBank final_bank;
    std::vector<RoundReport> reports;
    std::vector<Skill> skill_catalog;  // every skill seen in any candidate
    CacheRoundStats cold_start_stats;
  };

  // cold_start then `rounds` iterations of inner_loop + outer_step.
  Result run();

  // Incremental sinks, invoked as artifacts are produced.
  std::function<void(const RoundReport&)> on_round;
  std::function<void(int round, const char* phase, const Trajectory&)> on_trajectory;

 private:
  ProfileReport evaluate(const SkillBank& bank, int round) const;
  void catalog_insert(const Skill& s);

  const RunConfig& cfg_;
  const SyntheticWorld& world_;
  LoopComponents c_;
  std::map<std::string, Skill> catalog_;
};

// The full curate command: builds the rule-based (or remote) stack, runs
// the loop, writes bank.json / bank_initial.json / rounds.jsonl /
// trajectories.jsonl / skills.json / cache_stats.json under out_dir.
CurationLoop::Result run_curation_to_dir(const RunConfig& cfg,
                                         const std::filesystem::path& out_dir);

// CSV projection of a rounds.jsonl stream:
// round,bank_size,util,div,cov,winner_is_null,cache_hit_rate
std::string rounds_to_csv(const std::filesystem::path& rounds_jsonl);

}  // namespace skillbank
