#include "skillbank/proposers.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "skillbank/objectives.hpp"
#include "skillbank/retrieval.hpp"

namespace skillbank {

double EvidencePair::delta() const {
  return skillbank::delta(factual.reward, counterfactual.reward);
}

std::string to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::Keep: return "keep";
    case VerdictKind::Rewrite: return "rewrite";
    case VerdictKind::Remove: return "remove";
  }
  throw std::logic_error("to_string: unknown VerdictKind");
}

void validate_verdict(const Verdict& v, const Skill& original) {
  if (v.skill_id != original.id)
    throw ValidationError("verdict targets skill " + v.skill_id +
                          " but was produced for " + original.id);
  if (v.kind == VerdictKind::Rewrite) {
    if (!v.rewritten)
      throw ValidationError("rewrite verdict for " + original.id +
                            " carries no rewritten skill");
    if (v.rewritten->id == original.id)
      throw ValidationError("rewrite verdict for " + original.id +
                            " does not change the skill content");
    validate_skill(*v.rewritten);
  } else if (v.rewritten) {
    throw ValidationError(to_string(v.kind) + " verdict for " + original.id +
                          " must not carry a rewritten skill");
  }
}

void validate_pools(const EditPools& pools, const SkillBank& bank) {
  std::set<std::string> seen;
  auto claim = [&](const std::string& id, const char* pool) {
    if (!seen.insert(id).second)
      throw ValidationError(std::string("edit pools: id ") + id +
                            " appears in more than one pool (" + pool + ")");
  };
  for (const Skill& s : pools.add) {
    validate_skill(s);
    claim(s.id, "add");
    if (bank.contains(s.id))
      throw ValidationError("edit pools: add skill " + s.id +
                            " already exists in the bank");
  }
  for (const auto& [orig, repl] : pools.rewrite) {
    claim(orig, "rewrite");
    if (!bank.contains(orig))
      throw ValidationError("edit pools: rewrite references unknown skill id " + orig);
    validate_skill(repl);
    if (repl.id == orig)
      throw ValidationError("edit pools: rewrite of " + orig +
                            " does not change the content");
  }
  for (const std::string& id : pools.remove) {
    claim(id, "remove");
    if (!bank.contains(id))
      throw ValidationError("edit pools: remove references unknown skill id " + id);
  }
  for (const std::string& id : pools.keep) {
    claim(id, "keep");
    if (!bank.contains(id))
      throw ValidationError("edit pools: keep references unknown skill id " + id);
  }
}

std::optional<PlannedCandidate> apply_edits(const SkillBank& current,
                                            const EditPools& pools,
                                            bool use_add, bool use_rewrite,
                                            bool use_remove) {
  std::map<std::string, const Skill*> rewrites;
  if (use_rewrite)
    for (const auto& [orig, repl] : pools.rewrite) rewrites[orig] = &repl;
  std::set<std::string> removes;
  if (use_remove) removes.insert(pools.remove.begin(), pools.remove.end());

  PlannedCandidate out;
  std::vector<Skill> skills;
  for (const Skill& s : current.skills) {
    if (removes.count(s.id)) {
      ++out.applied.removed;
      continue;
    }
    auto it = rewrites.find(s.id);
    if (it != rewrites.end()) {
      skills.push_back(*it->second);
      ++out.applied.rewritten;
    } else {
      skills.push_back(s);
    }
  }
  if (use_add) {
    for (const Skill& s : pools.add) {
      skills.push_back(s);
      ++out.applied.added;
    }
  }
  out.applied.kept = static_cast<int>(pools.keep.size());

  std::set<std::string> ids;
  for (const Skill& s : skills)
    if (!ids.insert(s.id).second) return std::nullopt;  // combo is invalid

  out.bank = make_bank(std::move(skills), current.round + 1);
  // Label only the ops that changed something: a flag over an empty pool
  // is a no-op and must not show up in candidate metadata.
  std::string combo;
  auto tag = [&](bool on, const char* name) {
    if (!on) return;
    if (!combo.empty()) combo += '+';
    combo += name;
  };
  tag(out.applied.added > 0, "add");
  tag(out.applied.rewritten > 0, "rewrite");
  tag(out.applied.removed > 0, "remove");
  out.combo = combo.empty() ? "none" : combo;
  return out;
}

RuleBasedDistiller::RuleBasedDistiller(const SyntheticWorld& world,
                                       const EmbeddingProvider& provider)
    : world_(world), provider_(provider) {}

std::vector<Skill> RuleBasedDistiller::distill(
    const std::vector<TaskTrajectory>& failures,
    const std::vector<TaskTrajectory>& successes, SkillOrigin origin,
    int round) {
  // Tags the base agent already solves without skills need no distillate.
  std::set<std::string> covered;
  for (const TaskTrajectory& s : successes)
    covered.insert(world_.task(s.task.task_id).required_tag);

  std::map<std::string, std::vector<const TaskTrajectory*>> groups;
  for (const TaskTrajectory& f : failures)
    groups[world_.task(f.task.task_id).required_tag].push_back(&f);

  std::vector<Skill> out;
  std::set<std::string> ids;
  for (const auto& [tag, group] : groups) {
    if (covered.count(tag)) continue;
    // Tokens shared by every failing task text, in first-text order.
    std::vector<std::string> first = tokenize(group.front()->task.text);
    std::set<std::string> shared(first.begin(), first.end());
    for (std::size_t i = 1; i < group.size(); ++i) {
      auto toks = tokenize(group[i]->task.text);
      std::set<std::string> here(toks.begin(), toks.end());
      std::set<std::string> both;
      for (const auto& t : shared)
        if (here.count(t)) both.insert(t);
      shared = std::move(both);
    }
    std::string phrase;
    int taken = 0;
    for (const std::string& t : first) {
      if (!shared.count(t)) continue;
      shared.erase(t);  // each token once
      phrase += (taken ? " " : "") + t;
      if (++taken == 10) break;
    }
    if (phrase.empty()) phrase = tag;

    Skill s = make_skill(
        tag + " procedure",
        "for " + tag + " tasks: " + phrase,
        "use when the task mentions " + tag + ". tags: helpful=" + tag,
        provider_, Provenance{round, origin});
    if (ids.insert(s.id).second) out.push_back(std::move(s));
  }
  return out;
}

RuleBasedDiagnoser::RuleBasedDiagnoser(const SyntheticWorld& world,
                                       const EmbeddingProvider& provider,
                                       double theta_keep, double theta_remove)
    : world_(world),
      provider_(provider),
      theta_keep_(theta_keep),
      theta_remove_(theta_remove) {
  if (theta_remove > theta_keep)
    throw InvalidInput("diagnoser: theta_remove must not exceed theta_keep");
}

Verdict RuleBasedDiagnoser::diagnose(const Skill& skill,
                                     const std::vector<EvidencePair>& pairs,
                                     int round) {
  if (pairs.empty())
    throw InvalidInput("diagnose: no evidence pairs for skill " + skill.id);
  double mean = 0;
  for (const EvidencePair& p : pairs) mean += p.delta();
  mean /= static_cast<double>(pairs.size());

  Verdict v;
  v.skill_id = skill.id;
  v.n_pairs = static_cast<long>(pairs.size());
  v.mean_delta = mean;
  if (mean > theta_keep_) {
    v.kind = VerdictKind::Keep;
    return v;
  }
  if (mean < theta_remove_) {
    v.kind = VerdictKind::Remove;
    return v;
  }

  // Inert: narrow applicability to the claimed tags where the skill did not
  // hurt. Intersecting with the current claim keeps this a pure narrowing;
  // a zero delta on a foreign tag must not grant the skill that tag.
  std::set<std::string> observed;
  for (const EvidencePair& p : pairs)
    if (p.delta() >= 0) observed.insert(world_.task(p.task.task_id).required_tag);
  std::string joined;
  for (const std::string& t : parse_skill_tags(skill.when_to_apply).helpful)
    if (observed.count(t)) joined += (joined.empty() ? "" : ",") + t;

  std::string prose = skill.when_to_apply;
  if (auto pos = prose.find("tags:"); pos != std::string::npos)
    prose = trim_copy(prose.substr(0, pos));
  std::string narrowed =
      (prose.empty() ? "" : prose + " ") + "tags: helpful=" + joined;

  Skill rewritten = make_skill(skill.title, skill.principle, narrowed, provider_,
                               Provenance{round, SkillOrigin::Rewrite});
  if (rewritten.id == skill.id) {
    v.kind = VerdictKind::Keep;  // narrowing changed nothing
    return v;
  }
  v.kind = VerdictKind::Rewrite;
  v.rewritten = std::move(rewritten);
  validate_verdict(v, skill);
  return v;
}

std::vector<PlannedCandidate> DeterministicPlanner::plan(const SkillBank& current,
                                                         const EditPools& pools,
                                                         int k) {
  if (k < 1) throw InvalidInput("plan: k must be >= 1");
  validate_pools(pools, current);

  // Full-apply first, then singletons, then pairwise unions.
  static constexpr bool combos[][3] = {
      {true, true, true},  {true, false, false}, {false, true, false},
      {false, false, true}, {true, true, false}, {true, false, true},
      {false, true, true}};

  std::vector<PlannedCandidate> out;
  std::set<std::string> seen{current.bank_id};
  for (const auto& combo : combos) {
    if (out.size() == static_cast<std::size_t>(k)) break;
    auto cand = apply_edits(current, pools, combo[0], combo[1], combo[2]);
    if (!cand) continue;
    if (!seen.insert(cand->bank.bank_id).second) continue;
    out.push_back(std::move(*cand));
  }
  return out;
}

}  // namespace skillbank
