#pragma once

#include <memory>
#include <string>

#include "skillbank/proposers.hpp"

namespace skillbank {

struct RemoteConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8089"
  std::string path = "/v1/propose";
  std::string model = "default";
  std::string auth_env = "SKILLBANK_TOKEN";  // bearer token env var, optional
  int timeout_ms = 30000;
};

// Chat-completion-style backend for the three proposer roles. Each call
// POSTs one JSON payload ({"role": "distiller"|"diagnoser"|"planner", ...})
// and expects a structured JSON reply. A malformed reply is retried once;
// a second failure raises ProposerError with the raw payload retained, and
// the curation loop degrades that role to an empty pool for the round.
class RemoteProposer final : public Distiller, public Diagnoser, public EditPlanner {
 public:
  RemoteProposer(RemoteConfig cfg, const EmbeddingProvider& provider);

  std::vector<Skill> distill(const std::vector<TaskTrajectory>& failures,
                             const std::vector<TaskTrajectory>& successes,
                             SkillOrigin origin, int round) override;
  Verdict diagnose(const Skill& skill, const std::vector<EvidencePair>& pairs,
                   int round) override;
  std::vector<PlannedCandidate> plan(const SkillBank& current,
                                     const EditPools& pools, int k) override;

 private:
  std::string post(const std::string& body);

  RemoteConfig cfg_;
  const EmbeddingProvider& provider_;
};

}  // namespace skillbank
