#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skillbank/replay_cache.hpp"
#include "skillbank/retrieval.hpp"
#include "skillbank/rollout.hpp"
#include "skillbank/skill.hpp"

namespace skillbank {

struct ObjectiveProfile {
  double util = 0;
  double div = 0;  // in [0, 1]
  double cov = 0;  // in [0, 1]
  bool operator==(const ObjectiveProfile&) const = default;
};

// Which objectives participate in selection. util is always on; disabled
// objectives are still measured and reported.
struct ObjectiveSet {
  bool util = true;
  bool div = true;
  bool cov = true;
  bool operator==(const ObjectiveSet&) const = default;
};

// (reward with skill, reward with it removed) pairs for one skill.
struct SkillEvidence {
  std::vector<std::pair<double, double>> pairs;
  long n_retrieved() const { return static_cast<long>(pairs.size()); }
};

struct UtilityEvidence {
  std::map<std::string, SkillEvidence> per_skill;  // id-sorted
  long n_nonempty_retrieval = 0;                   // N_R
};

// r_with - r_without; both rewards must lie in [0, 1].
double delta(double r_with, double r_without);

// Mean delta over the evidence pairs; empty evidence is invalid input.
double skill_utility(const std::vector<std::pair<double, double>>& pairs);

// Sum over skills of (|T_s| / N_R) * mean delta, taken literally: the
// weights are not renormalized under co-retrieval. N_R == 0 yields 0.
double bank_utility(const UtilityEvidence& evidence);

// det(G + eps*I)^(1/n) over the Gram matrix of the unit embeddings,
// computed via Cholesky in log space and clamped to at most 1. Empty
// bank -> 0, singleton -> 1.
double diversity(const SkillBank& bank, double epsilon_reg = 1e-6);

// density * usage: mean retrieved-slot fill over the query results times
// the fraction of the bank retrieved at least once. Empty bank -> 0.
double coverage(const std::vector<RetrievalResult>& query_results,
                const SkillBank& bank, int k_top);

struct PerSkillSummary {
  std::string skill_id;
  long n_retrieved = 0;
  double mean_delta = 0;
};

struct ProfileReport {
  std::string bank_id;
  ObjectiveProfile profile;
  long n_query_tasks = 0;
  long n_nonempty_retrieval = 0;  // N_R
  std::vector<PerSkillSummary> per_skill;  // id-sorted
};

std::string profile_report_to_json(const ProfileReport& report);

// Runs retrieval for every query task (sorted by task id), factual
// rollouts and one leave-one-out replay per retrieved skill through the
// cache, then assembles the profile. All three objectives are always
// measured; config-disabled ones are excluded later, at selection.
ProfileReport evaluate_profile(const SkillBank& bank,
                               std::vector<TaskQuery> query_tasks,
                               const Worker& worker,
                               const EmbeddingProvider& provider,
                               const RetrievalConfig& retrieval_cfg,
                               double epsilon_reg, ReplayCache* cache,
                               int round);

}  // namespace skillbank
