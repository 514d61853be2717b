#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skillbank/rollout.hpp"
#include "skillbank/skill.hpp"

namespace skillbank {

// A proposer role failed (e.g. a remote backend returned garbage twice).
// The curation loop degrades that role to an empty pool for the round.
struct ProposerError : std::runtime_error {
  ProposerError(const std::string& what, std::string payload = {})
      : std::runtime_error(what), raw_payload(std::move(payload)) {}
  std::string raw_payload;  // retained for debugging
};

struct TaskTrajectory {
  TaskQuery task;
  Trajectory trajectory;
};

// One (factual, counterfactual) replay pair for a retrieved skill.
struct EvidencePair {
  TaskQuery task;
  Trajectory factual;
  Trajectory counterfactual;
  double delta() const;
};

enum class VerdictKind { Keep, Rewrite, Remove };

std::string to_string(VerdictKind kind);

struct Verdict {
  std::string skill_id;
  VerdictKind kind = VerdictKind::Keep;
  std::optional<Skill> rewritten;  // present iff kind == Rewrite
  long n_pairs = 0;
  double mean_delta = 0;
};

void validate_verdict(const Verdict& v, const Skill& original);

struct EditPools {
  std::vector<Skill> add;
  std::vector<std::pair<std::string, Skill>> rewrite;  // original id -> new
  std::vector<std::string> remove;
  std::vector<std::string> keep;  // protected slots

  bool all_empty_edits() const {
    return add.empty() && rewrite.empty() && remove.empty();
  }
};

// Disjoint id sets; rewrite/remove/keep ids must exist in the bank; add
// ids must not. Violations are errors, never silently repaired.
void validate_pools(const EditPools& pools, const SkillBank& bank);

class Distiller {
 public:
  virtual ~Distiller() = default;
  // failures/successes are the no-retrieval quadrants of the support split.
  virtual std::vector<Skill> distill(const std::vector<TaskTrajectory>& failures,
                                     const std::vector<TaskTrajectory>& successes,
                                     SkillOrigin origin, int round) = 0;
};

class Diagnoser {
 public:
  virtual ~Diagnoser() = default;
  // pairs must be non-empty; skill is the current bank member under review.
  virtual Verdict diagnose(const Skill& skill,
                           const std::vector<EvidencePair>& pairs, int round) = 0;
};

struct EditCounts {
  int added = 0, rewritten = 0, removed = 0, kept = 0;
  bool operator==(const EditCounts&) const = default;
};

struct PlannedCandidate {
  SkillBank bank;
  EditCounts applied;
  std::string combo;  // e.g. "add+remove"
};

class EditPlanner {
 public:
  virtual ~EditPlanner() = default;
  // At most k distinct banks, none equal to the current bank; keep-pool
  // skills appear unmodified in every candidate.
  virtual std::vector<PlannedCandidate> plan(const SkillBank& current,
                                             const EditPools& pools, int k) = 0;
};

// Applies a subset of the pools. Combos that would produce a duplicate
// skill id are rejected (nullopt) rather than repaired.
std::optional<PlannedCandidate> apply_edits(const SkillBank& current,
                                            const EditPools& pools,
                                            bool use_add, bool use_rewrite,
                                            bool use_remove);

// Groups no-retrieval failures by the synthetic world's required tag and
// emits one helpful-tagged skill per group, skipping tags the base agent
// already solved without skills. Skill text is rebuilt from the tokens
// shared across the group so the retriever can find it.
class RuleBasedDistiller final : public Distiller {
 public:
  RuleBasedDistiller(const SyntheticWorld& world, const EmbeddingProvider& provider);
  std::vector<Skill> distill(const std::vector<TaskTrajectory>& failures,
                             const std::vector<TaskTrajectory>& successes,
                             SkillOrigin origin, int round) override;

 private:
  const SyntheticWorld& world_;
  const EmbeddingProvider& provider_;
};

// mean delta > theta_keep -> Keep; < theta_remove -> Remove; otherwise
// Rewrite, narrowing when_to_apply to the tags of tasks where delta >= 0.
// A rewrite that reproduces the original content degrades to Keep.
class RuleBasedDiagnoser final : public Diagnoser {
 public:
  RuleBasedDiagnoser(const SyntheticWorld& world, const EmbeddingProvider& provider,
                     double theta_keep = 0.0, double theta_remove = 0.0);
  Verdict diagnose(const Skill& skill, const std::vector<EvidencePair>& pairs,
                   int round) override;

 private:
  const SyntheticWorld& world_;
  const EmbeddingProvider& provider_;
  double theta_keep_;
  double theta_remove_;
};

// Candidate #1 applies everything; the rest walk a fixed combo order
// (adds, rewrites, removes, then pairwise unions) until k is reached.
class DeterministicPlanner final : public EditPlanner {
 public:
  std::vector<PlannedCandidate> plan(const SkillBank& current,
                                     const EditPools& pools, int k) override;
};

}  // namespace skillbank
