#include "skillbank/curation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace skillbank {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Rejects misspelled keys instead of silently ignoring them.
void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) {
      throw ValidationError("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key +
                          "': " + e.what());
  }
}

}  // namespace

ObjectiveSet objectives_from_list(const std::vector<std::string>& names) {
  ObjectiveSet set{false, false, false};
  for (const auto& name : names) {
    bool* flag = nullptr;
    if (name == "util") flag = &set.util;
    else if (name == "div") flag = &set.div;
    else if (name == "cov") flag = &set.cov;
    else throw ValidationError("config: unknown objective '" + name + "'");
    if (*flag) throw ValidationError("config: duplicate objective '" + name + "'");
    *flag = true;
  }
  return set;
}

EditOpSet edit_ops_from_list(const std::vector<std::string>& names) {
  EditOpSet set{false, false, false};
  for (const auto& name : names) {
    bool* flag = nullptr;
    if (name == "add") flag = &set.add;
    else if (name == "rewrite") flag = &set.rewrite;
    else if (name == "remove") flag = &set.remove;
    else throw ValidationError("config: unknown edit op '" + name + "'");
    if (*flag) throw ValidationError("config: duplicate edit op '" + name + "'");
    *flag = true;
  }
  return set;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.world_path.empty())
    throw ValidationError("config: 'world' is required");
  if (cfg.rounds < 1)
    throw ValidationError("config: rounds must be >= 1");
  if (cfg.candidates < 1)
    throw ValidationError("config: candidates must be >= 1");
  if (cfg.epsilon_tol < 0)
    throw ValidationError("config: epsilon_tol must be >= 0");
  if (cfg.epsilon_reg <= 0)
    throw ValidationError("config: epsilon_reg must be > 0");
  if (cfg.retrieval.k_top < 1)
    throw ValidationError("config: retrieval.k_top must be >= 1");
  if (cfg.retrieval.w_bm25 < 0 || cfg.retrieval.w_dense < 0 ||
      cfg.retrieval.w_bm25 + cfg.retrieval.w_dense <= 0)
    throw ValidationError("config: retrieval weights must be >= 0, not both 0");
  if (cfg.retrieval.score_threshold < 0)
    throw ValidationError("config: retrieval.score_threshold must be >= 0");
  if (!cfg.objectives.util)
    throw ValidationError("config: the util objective cannot be disabled");
  if (!cfg.edit_ops.add)
    throw ValidationError("config: the add edit op cannot be disabled");
  if (!(cfg.success_threshold > 0) || cfg.success_threshold > 1)
    throw ValidationError("config: success_threshold must be in (0, 1]");
  if (cfg.embedding_dim < 1)
    throw ValidationError("config: embedding_dim must be >= 1");
  if (cfg.proposer == ProposerMode::Remote && cfg.remote.base_url.empty())
    throw ValidationError("config: remote proposer requires remote.base_url");
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config: top level must be an object");

  check_keys(root,
             {"world", "rounds", "candidates", "epsilon_tol", "retrieval",
              "epsilon_reg", "objectives", "edit_ops", "success_threshold",
              "seed", "embedding_dim", "cache_dir", "reuse_cache", "proposer",
              "remote"},
             "top level");

  RunConfig cfg;
  std::string world;
  read_field(root, "world", world);
  cfg.world_path = world;
  read_field(root, "rounds", cfg.rounds);
  read_field(root, "candidates", cfg.candidates);
  read_field(root, "epsilon_tol", cfg.epsilon_tol);
  read_field(root, "epsilon_reg", cfg.epsilon_reg);
  read_field(root, "success_threshold", cfg.success_threshold);
  read_field(root, "seed", cfg.seed);
  read_field(root, "embedding_dim", cfg.embedding_dim);
  read_field(root, "reuse_cache", cfg.reuse_cache);

  if (root.contains("retrieval")) {
    const json& r = root.at("retrieval");
    if (!r.is_object()) throw ValidationError("config: 'retrieval' must be an object");
    check_keys(r, {"k_top", "w_bm25", "w_dense", "score_threshold"}, "retrieval");
    read_field(r, "k_top", cfg.retrieval.k_top);
    read_field(r, "w_bm25", cfg.retrieval.w_bm25);
    read_field(r, "w_dense", cfg.retrieval.w_dense);
    read_field(r, "score_threshold", cfg.retrieval.score_threshold);
  }
  if (root.contains("objectives")) {
    std::vector<std::string> names;
    read_field(root, "objectives", names);
    cfg.objectives = objectives_from_list(names);
  }
  if (root.contains("edit_ops")) {
    std::vector<std::string> names;
    read_field(root, "edit_ops", names);
    cfg.edit_ops = edit_ops_from_list(names);
  }
  if (root.contains("cache_dir")) {
    std::string dir;
    read_field(root, "cache_dir", dir);
    if (!dir.empty()) cfg.cache_dir = dir;
  }
  if (root.contains("proposer")) {
    std::string mode;
    read_field(root, "proposer", mode);
    if (mode == "rule") cfg.proposer = ProposerMode::RuleBased;
    else if (mode == "remote") cfg.proposer = ProposerMode::Remote;
    else throw ValidationError("config: proposer must be 'rule' or 'remote'");
  }
  if (root.contains("remote")) {
    const json& r = root.at("remote");
    if (!r.is_object()) throw ValidationError("config: 'remote' must be an object");
    check_keys(r, {"base_url", "path", "model", "auth_env", "timeout_ms"}, "remote");
    read_field(r, "base_url", cfg.remote.base_url);
    read_field(r, "path", cfg.remote.path);
    read_field(r, "model", cfg.remote.model);
    read_field(r, "auth_env", cfg.remote.auth_env);
    read_field(r, "timeout_ms", cfg.remote.timeout_ms);
  }

  validate_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

namespace {

ordered_json edit_counts_json(const EditCounts& c) {
  return ordered_json{{"added", c.added},
                      {"rewritten", c.rewritten},
                      {"removed", c.removed},
                      {"kept", c.kept}};
}

ordered_json candidate_json(const CandidateSummary& c) {
  ordered_json j{{"bank_id", c.bank_id},
                 {"util", c.profile.util},
                 {"div", c.profile.div},
                 {"cov", c.profile.cov},
                 {"is_null", c.is_null},
                 {"selected", c.selected},
                 {"eval_failed", c.eval_failed},
                 {"combo", c.combo},
                 {"applied", edit_counts_json(c.applied)},
                 {"skill_ids", c.skill_ids}};
  if (c.eval_failed) j["diagnostic"] = c.diagnostic;
  return j;
}

}  // namespace

std::string round_report_to_json_line(const RoundReport& r) {
  ordered_json j{{"round", r.round},
                 {"bank_id", r.bank_id},
                 {"bank_size", r.bank_size},
                 {"util", r.profile.util},
                 {"div", r.profile.div},
                 {"cov", r.profile.cov},
                 {"winner_is_null", r.winner_is_null},
                 {"n_candidates", r.n_candidates},
                 {"edit_counts", edit_counts_json(r.edit_counts)},
                 {"cache_hit_rate", r.cache_hit_rate},
                 {"loo_hit_rate", r.loo_hit_rate},
                 {"bank_skill_ids", r.bank_skill_ids}};
  ordered_json cands = ordered_json::array();
  for (const auto& c : r.candidates) cands.push_back(candidate_json(c));
  j["candidates"] = std::move(cands);
  j["selection"] = ordered_json{{"u_max", r.u_max},
                                {"tie_pool", r.tie_pool},
                                {"contributions", r.contributions}};
  j["audit"] = ordered_json{{"support_task_ids", r.support_task_ids},
                            {"query_task_ids", r.query_task_ids}};
  return j.dump() + "\n";
}

CurationLoop::CurationLoop(const RunConfig& cfg, const SyntheticWorld& world,
                           LoopComponents components)
    : cfg_(cfg), world_(world), c_(components) {
  if (!c_.worker || !c_.provider || !c_.distiller || !c_.diagnoser || !c_.planner)
    throw InvalidInput("curation loop: missing component");
}

void CurationLoop::catalog_insert(const Skill& s) {
  catalog_.emplace(s.id, s);
}

ProfileReport CurationLoop::evaluate(const SkillBank& bank, int round) const {
  return evaluate_profile(bank, world_.tasks(Split::Query), *c_.worker,
                          *c_.provider, cfg_.retrieval, cfg_.epsilon_reg,
                          c_.cache, round);
}

SkillBank CurationLoop::cold_start() {
  auto tasks = world_.tasks(Split::Support);
  std::sort(tasks.begin(), tasks.end(),
            [](const TaskQuery& a, const TaskQuery& b) {
              return a.task_id < b.task_id;
            });

  std::vector<TaskTrajectory> failures, successes;
  for (const auto& task : tasks) {
    Trajectory t = cached_rollout(*c_.worker, task, {}, c_.cache, 0,
                                  CacheChannel::Factual);
    if (on_trajectory) on_trajectory(0, "cold_start", t);
    (t.success ? successes : failures).push_back({task, t});
  }

  std::vector<Skill> skills =
      c_.distiller->distill(failures, successes, SkillOrigin::ColdStart, 0);
  SkillBank bank = make_bank(std::move(skills), 0);
  for (const auto& s : bank.skills) catalog_insert(s);
  return bank;
}

InnerResult CurationLoop::inner_loop(const SkillBank& bank, int round) {
  InnerResult result;

  auto tasks = world_.tasks(Split::Support);
  std::sort(tasks.begin(), tasks.end(),
            [](const TaskQuery& a, const TaskQuery& b) {
              return a.task_id < b.task_id;
            });

  std::map<std::string, TaskQuery> task_by_id;
  std::map<std::string, std::vector<Skill>> retrieved_by_task;
  for (const auto& task : tasks) {
    RetrievalResult hits = hybrid_retrieve(task.text, bank, *c_.provider,
                                           cfg_.retrieval);
    std::vector<Skill> retrieved;
    for (const auto& entry : hits.entries) retrieved.push_back(*bank.find(entry.skill_id));

    Trajectory t = cached_rollout(*c_.worker, task, retrieved, c_.cache, round,
                                  CacheChannel::Factual);
    if (on_trajectory) on_trajectory(round, "support", t);
    result.support_task_ids.push_back(task.task_id);
    result.support_trajectories.push_back(t);
    task_by_id.emplace(task.task_id, task);
    retrieved_by_task.emplace(task.task_id, std::move(retrieved));
  }

  QuadrantPartition quadrants = partition_quadrants(result.support_trajectories);
  auto with_tasks = [&](const std::vector<Trajectory>& quadrant) {
    std::vector<TaskTrajectory> out;
    for (const auto& t : quadrant) out.push_back({task_by_id.at(t.task_id), t});
    return out;
  };

  // Distill new skills from tasks still failing with nothing retrieved;
  // successes in the same quadrant suppress already-covered groups.
  std::vector<Skill> adds;
  try {
    adds = c_.distiller->distill(with_tasks(quadrants.failure_no_retrieval),
                                 with_tasks(quadrants.success_no_retrieval),
                                 SkillOrigin::Add, round);
  } catch (const ProposerError& e) {
    std::cerr << "round " << round << ": distiller degraded: " << e.what() << "\n";
  }
  std::set<std::string> add_ids;
  for (const auto& s : adds) {
    if (bank.contains(s.id)) continue;  // already present, nothing to add
    if (!add_ids.insert(s.id).second) continue;
    result.pools.add.push_back(s);
  }

  // Leave-one-out evidence, accumulated per skill in task order.
  std::map<std::string, std::vector<EvidencePair>> evidence;
  for (const auto& fact : result.support_trajectories) {
    if (fact.retrieved.empty()) continue;
    const TaskQuery& task = task_by_id.at(fact.task_id);
    const std::vector<Skill>& retrieved = retrieved_by_task.at(fact.task_id);
    for (const auto& skill_id : fact.retrieved) {
      Trajectory cf = loo_replay(*c_.worker, task, retrieved, skill_id,
                                 c_.cache, round);
      evidence[skill_id].push_back({task, fact, cf});
    }
  }

  // Verdicts in bank order; skills without evidence this round are kept.
  for (const auto& skill : bank.skills) {
    auto it = evidence.find(skill.id);
    if (it == evidence.end() || it->second.empty()) {
      result.pools.keep.push_back(skill.id);
      continue;
    }
    Verdict v;
    try {
      v = c_.diagnoser->diagnose(skill, it->second, round);
    } catch (const ProposerError& e) {
      std::cerr << "round " << round << ": diagnoser degraded for " << skill.id
                << ": " << e.what() << "\n";
      result.pools.keep.push_back(skill.id);
      continue;
    }
    validate_verdict(v, skill);
    switch (v.kind) {
      case VerdictKind::Keep:
        result.pools.keep.push_back(skill.id);
        break;
      case VerdictKind::Rewrite:
        if (cfg_.edit_ops.rewrite)
          result.pools.rewrite.emplace_back(skill.id, *v.rewritten);
        else
          result.pools.keep.push_back(skill.id);
        break;
      case VerdictKind::Remove:
        if (cfg_.edit_ops.remove)
          result.pools.remove.push_back(skill.id);
        else
          result.pools.keep.push_back(skill.id);
        break;
    }
  }

  try {
    result.candidates = c_.planner->plan(bank, result.pools, cfg_.candidates);
  } catch (const ProposerError& e) {
    std::cerr << "round " << round << ": planner degraded: " << e.what() << "\n";
    result.candidates.clear();
  }
  for (const auto& cand : result.candidates)
    for (const auto& s : cand.bank.skills) catalog_insert(s);
  return result;
}

std::pair<SkillBank, RoundReport> CurationLoop::outer_step(
    const SkillBank& current, const InnerResult& inner, int round) {
  const auto started = std::chrono::steady_clock::now();

  RoundReport report;
  report.round = round;
  report.n_candidates = static_cast<int>(inner.candidates.size());
  report.support_task_ids = inner.support_task_ids;
  for (const auto& task : world_.tasks(Split::Query))
    report.query_task_ids.push_back(task.task_id);
  std::sort(report.query_task_ids.begin(), report.query_task_ids.end());

  // Proposed banks in plan order, the incumbent (null) last.
  std::vector<Candidate> pool;
  for (const auto& planned : inner.candidates) {
    CandidateSummary summary;
    summary.bank_id = planned.bank.bank_id;
    summary.combo = planned.combo;
    summary.applied = planned.applied;
    for (const auto& s : planned.bank.skills) summary.skill_ids.push_back(s.id);
    try {
      ProfileReport prof = evaluate(planned.bank, round);
      summary.profile = prof.profile;
      pool.push_back({planned.bank.bank_id, prof.profile, false,
                      planned.bank.size()});
    } catch (const std::exception& e) {
      summary.eval_failed = true;
      summary.diagnostic = e.what();
      std::cerr << "round " << round << ": candidate " << planned.bank.bank_id
                << " evaluation failed: " << e.what() << "\n";
    }
    report.candidates.push_back(std::move(summary));
  }

  ProfileReport null_prof = evaluate(current, round);
  CandidateSummary null_summary;
  null_summary.bank_id = current.bank_id;
  null_summary.is_null = true;
  null_summary.combo = "null";
  null_summary.profile = null_prof.profile;
  null_summary.applied.kept = static_cast<int>(inner.pools.keep.size());
  for (const auto& s : current.skills) null_summary.skill_ids.push_back(s.id);
  report.candidates.push_back(std::move(null_summary));
  pool.push_back({current.bank_id, null_prof.profile, true, current.size()});

  SelectionOutcome outcome = select(pool, cfg_.epsilon_tol, cfg_.objectives);

  report.u_max = outcome.u_max;
  for (const auto& c : outcome.tie_pool) report.tie_pool.push_back(c.bank_ref);
  report.contributions = outcome.contributions;

  SkillBank winner;
  if (outcome.winner.is_null) {
    winner = current;
    winner.round = round;  // content (and bank_id) carried unchanged
    report.winner_is_null = true;
    report.edit_counts = EditCounts{0, 0, 0,
                                    static_cast<int>(inner.pools.keep.size())};
  } else {
    auto it = std::find_if(inner.candidates.begin(), inner.candidates.end(),
                           [&](const PlannedCandidate& p) {
                             return p.bank.bank_id == outcome.winner.bank_ref;
                           });
    if (it == inner.candidates.end())
      throw std::logic_error("selection winner missing from candidate list");
    winner = it->bank;
    report.edit_counts = it->applied;
  }
  for (auto& summary : report.candidates)
    summary.selected = (summary.bank_id == outcome.winner.bank_ref &&
                        summary.is_null == outcome.winner.is_null);

  report.bank_id = winner.bank_id;
  report.bank_size = winner.size();
  report.profile = outcome.winner.profile;
  for (const auto& s : winner.skills) report.bank_skill_ids.push_back(s.id);

  if (c_.cache) {
    CacheRoundStats stats = c_.cache->snapshot_round();
    report.cache_hit_rate = stats.hit_rate();
    report.loo_hit_rate = stats.loo_hit_rate();
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return {std::move(winner), std::move(report)};
}

CurationLoop::Result CurationLoop::run() {
  Result result;
  result.initial_bank = cold_start();
  if (c_.cache) result.cold_start_stats = c_.cache->snapshot_round();

  SkillBank bank = result.initial_bank;
  for (int round = 1; round <= cfg_.rounds; ++round) {
    InnerResult inner = inner_loop(bank, round);
    auto [winner, report] = outer_step(bank, inner, round);
    bank = std::move(winner);
    if (on_round) on_round(report);
    result.reports.push_back(std::move(report));
  }
  result.final_bank = std::move(bank);
  for (const auto& [id, skill] : catalog_) result.skill_catalog.push_back(skill);
  return result;
}

namespace {

std::string cache_stats_json(const ReplayCache& cache,
                             const CurationLoop::Result& result) {
  ordered_json rounds = ordered_json::array();
  const auto& history = cache.history();
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& s = history[i];
    rounds.push_back(ordered_json{{"snapshot", i},
                                  {"hits", s.hits},
                                  {"misses", s.misses},
                                  {"loo_hits", s.loo_hits},
                                  {"loo_misses", s.loo_misses},
                                  {"hit_rate", s.hit_rate()},
                                  {"loo_hit_rate", s.loo_hit_rate()}});
  }
  ordered_json j{{"entries", cache.size()},
                 {"total_hits", cache.total_hits()},
                 {"total_misses", cache.total_misses()},
                 {"cold_start_misses", result.cold_start_stats.misses},
                 {"rounds", std::move(rounds)}};
  return j.dump(2) + "\n";
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace

CurationLoop::Result run_curation_to_dir(const RunConfig& cfg,
                                         const std::filesystem::path& out_dir) {
  validate_config(cfg);
  SyntheticWorld world = SyntheticWorld::load(cfg.world_path);

  TrigramHashEmbedding provider(cfg.embedding_dim);
  SyntheticWorker worker(world, cfg.success_threshold);
  ReplayCache cache(cfg.cache_dir, cfg.reuse_cache);

  RuleBasedDistiller rule_distiller(world, provider);
  RuleBasedDiagnoser rule_diagnoser(world, provider);
  DeterministicPlanner rule_planner;
  std::optional<RemoteProposer> remote;
  if (cfg.proposer == ProposerMode::Remote)
    remote.emplace(cfg.remote, provider);

  LoopComponents components;
  components.worker = &worker;
  components.provider = &provider;
  components.distiller = remote ? static_cast<Distiller*>(&*remote) : &rule_distiller;
  components.diagnoser = remote ? static_cast<Diagnoser*>(&*remote) : &rule_diagnoser;
  components.planner = remote ? static_cast<EditPlanner*>(&*remote) : &rule_planner;
  components.cache = &cache;

  std::filesystem::create_directories(out_dir);
  std::ofstream rounds_out(out_dir / "rounds.jsonl",
                           std::ios::binary | std::ios::trunc);
  std::ofstream traj_out(out_dir / "trajectories.jsonl",
                         std::ios::binary | std::ios::trunc);
  if (!rounds_out || !traj_out)
    throw std::runtime_error("cannot open output files under " + out_dir.string());

  CurationLoop loop(cfg, world, components);
  loop.on_round = [&](const RoundReport& report) {
    rounds_out << round_report_to_json_line(report);
    rounds_out.flush();
    std::cerr << "round " << report.round << ": bank " << report.bank_id
              << " size " << report.bank_size << " util " << report.profile.util
              << (report.winner_is_null ? " (held)" : "") << " ["
              << report.wall_time_s << "s]\n";
  };
  loop.on_trajectory = [&](int round, const char* phase, const Trajectory& t) {
    ordered_json j{{"round", round}, {"phase", phase}};
    j["trajectory"] = json::parse(trajectory_to_json_line(t));
    traj_out << j.dump() << "\n";
  };

  CurationLoop::Result result = loop.run();

  save_bank(result.initial_bank, out_dir / "bank_initial.json");
  save_bank(result.final_bank, out_dir / "bank.json");

  ordered_json catalog = ordered_json::array();
  for (const auto& s : result.skill_catalog) {
    catalog.push_back(ordered_json{{"id", s.id},
                                   {"title", s.title},
                                   {"principle", s.principle},
                                   {"when_to_apply", s.when_to_apply},
                                   {"origin", to_string(s.provenance.origin)},
                                   {"round", s.provenance.round_created}});
  }
  write_file(out_dir / "skills.json", catalog.dump(2) + "\n");
  write_file(out_dir / "cache_stats.json", cache_stats_json(cache, result));
  return result;
}

std::string rounds_to_csv(const std::filesystem::path& rounds_jsonl) {
  std::ifstream in(rounds_jsonl, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + rounds_jsonl.string());

  std::string csv = "round,bank_size,util,div,cov,winner_is_null,cache_hit_rate\n";
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(rounds_jsonl.string() + ":" +
                       std::to_string(line_no) + ": " + e.what());
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%zu,%.10g,%.10g,%.10g,%d,%.10g\n",
                  j.at("round").get<int>(), j.at("bank_size").get<std::size_t>(),
                  j.at("util").get<double>(), j.at("div").get<double>(),
                  j.at("cov").get<double>(), j.at("winner_is_null").get<bool>() ? 1 : 0,
                  j.at("cache_hit_rate").get<double>());
    csv += buf;
  }
  return csv;
}

}  // namespace skillbank
