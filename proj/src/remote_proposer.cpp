#include "skillbank/remote_proposer.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <set>

#include "httplib.h"
#include "json.hpp"

namespace skillbank {

using ordered_json = nlohmann::ordered_json;

RemoteProposer::RemoteProposer(RemoteConfig cfg, const EmbeddingProvider& provider)
    : cfg_(std::move(cfg)), provider_(provider) {
  if (cfg_.base_url.empty())
    throw InvalidInput("remote proposer: base_url is required");
}

std::string RemoteProposer::post(const std::string& body) {
  httplib::Client client(cfg_.base_url);
  client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
  client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
  httplib::Headers headers;
  if (const char* tok = std::getenv(cfg_.auth_env.c_str()); tok && *tok)
    headers.emplace("Authorization", std::string("Bearer ") + tok);
  auto res = client.Post(cfg_.path, headers, body, "application/json");
  if (!res)
    throw ProposerError("remote proposer: request to " + cfg_.base_url +
                        cfg_.path + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ProposerError("remote proposer: HTTP " + std::to_string(res->status),
                        res->body);
  return res->body;
}

namespace {

// One retry on a malformed reply, then give up with the raw payload.
template <typename Parse>
auto with_retry(const std::string& role, Parse&& parse,
                const std::function<std::string()>& fetch) {
  std::string body;
  for (int attempt = 0; attempt < 2; ++attempt) {
    body = fetch();
    try {
      return parse(body);
    } catch (const std::exception&) {
      continue;
    }
  }
  // Parse once more to surface the underlying reason.
  try {
    return parse(body);
  } catch (const std::exception& e) {
    throw ProposerError("remote proposer: malformed " + role + " reply: " +
                        e.what(), body);
  }
}

ordered_json skill_payload(const Skill& s) {
  return {{"title", s.title},
          {"principle", s.principle},
          {"when_to_apply", s.when_to_apply}};
}

}  // namespace

std::vector<Skill> RemoteProposer::distill(
    const std::vector<TaskTrajectory>& failures,
    const std::vector<TaskTrajectory>& successes, SkillOrigin origin,
    int round) {
  ordered_json req;
  req["role"] = "distiller";
  req["model"] = cfg_.model;
  auto pack = [](const std::vector<TaskTrajectory>& items) {
    ordered_json arr = ordered_json::array();
    for (const TaskTrajectory& tt : items)
      arr.push_back({{"task_id", tt.task.task_id},
                     {"text", tt.task.text},
                     {"reward", tt.trajectory.reward}});
    return arr;
  };
  req["failures"] = pack(failures);
  req["successes"] = pack(successes);
  const std::string body = req.dump();

  auto parse = [&](const std::string& text) {
    ordered_json o = ordered_json::parse(text);
    std::vector<Skill> out;
    std::set<std::string> ids;
    for (const auto& item : o.at("skills")) {
      Skill s = make_skill(item.at("title").get<std::string>(),
                           item.at("principle").get<std::string>(),
                           item.at("when_to_apply").get<std::string>(),
                           provider_, Provenance{round, origin});
      if (ids.insert(s.id).second) out.push_back(std::move(s));
    }
    return out;
  };
  return with_retry("distiller", parse, [&] { return post(body); });
}

Verdict RemoteProposer::diagnose(const Skill& skill,
                                 const std::vector<EvidencePair>& pairs,
                                 int round) {
  if (pairs.empty())
    throw InvalidInput("diagnose: no evidence pairs for skill " + skill.id);
  double mean = 0;
  for (const EvidencePair& p : pairs) mean += p.delta();
  mean /= static_cast<double>(pairs.size());

  ordered_json req;
  req["role"] = "diagnoser";
  req["model"] = cfg_.model;
  req["skill"] = skill_payload(skill);
  req["pairs"] = ordered_json::array();
  for (const EvidencePair& p : pairs)
    req["pairs"].push_back({{"task_id", p.task.task_id},
                            {"task_text", p.task.text},
                            {"reward_with", p.factual.reward},
                            {"reward_without", p.counterfactual.reward}});
  const std::string body = req.dump();

  auto parse = [&](const std::string& text) {
    ordered_json o = ordered_json::parse(text);
    Verdict v;
    v.skill_id = skill.id;
    v.n_pairs = static_cast<long>(pairs.size());
    v.mean_delta = mean;
    const std::string kind = o.at("verdict").get<std::string>();
    if (kind == "keep") {
      v.kind = VerdictKind::Keep;
    } else if (kind == "remove") {
      v.kind = VerdictKind::Remove;
    } else if (kind == "rewrite") {
      const auto& r = o.at("rewritten");
      Skill s = make_skill(r.at("title").get<std::string>(),
                           r.at("principle").get<std::string>(),
                           r.at("when_to_apply").get<std::string>(),
                           provider_, Provenance{round, SkillOrigin::Rewrite});
      if (s.id == skill.id) {
        v.kind = VerdictKind::Keep;  // no-op rewrite
      } else {
        v.kind = VerdictKind::Rewrite;
        v.rewritten = std::move(s);
      }
    } else {
      throw ParseError("unknown verdict kind '" + kind + "'");
    }
    validate_verdict(v, skill);
    return v;
  };
  return with_retry("diagnoser", parse, [&] { return post(body); });
}

std::vector<PlannedCandidate> RemoteProposer::plan(const SkillBank& current,
                                                   const EditPools& pools,
                                                   int k) {
  if (k < 1) throw InvalidInput("plan: k must be >= 1");
  validate_pools(pools, current);

  ordered_json req;
  req["role"] = "planner";
  req["model"] = cfg_.model;
  req["bank"] = ordered_json::array();
  for (const Skill& s : current.skills) {
    auto o = skill_payload(s);
    o["id"] = s.id;
    req["bank"].push_back(std::move(o));
  }
  req["pools"] = ordered_json::object();
  req["pools"]["add"] = ordered_json::array();
  for (const Skill& s : pools.add) {
    auto o = skill_payload(s);
    o["id"] = s.id;
    req["pools"]["add"].push_back(std::move(o));
  }
  req["pools"]["rewrite"] = ordered_json::array();
  for (const auto& [orig, repl] : pools.rewrite) {
    auto o = skill_payload(repl);
    o["original_id"] = orig;
    req["pools"]["rewrite"].push_back(std::move(o));
  }
  req["pools"]["remove"] = pools.remove;
  req["pools"]["keep"] = pools.keep;
  req["k"] = k;
  const std::string body = req.dump();

  auto parse = [&](const std::string& text) {
    ordered_json o = ordered_json::parse(text);
    std::vector<PlannedCandidate> out;
    std::set<std::string> seen{current.bank_id};
    for (const auto& sel : o.at("candidates")) {
      // Element-level selections, validated against the pools.
      EditPools sub;
      sub.keep = pools.keep;
      for (const auto& idx : sel.value("add", ordered_json::array())) {
        std::size_t i = idx.get<std::size_t>();
        if (i >= pools.add.size()) throw ParseError("add index out of range");
        sub.add.push_back(pools.add[i]);
      }
      for (const auto& id : sel.value("rewrite", ordered_json::array())) {
        const std::string orig = id.get<std::string>();
        auto it = std::find_if(pools.rewrite.begin(), pools.rewrite.end(),
                               [&](const auto& p) { return p.first == orig; });
        if (it == pools.rewrite.end())
          throw ParseError("rewrite id not in pool: " + orig);
        sub.rewrite.push_back(*it);
      }
      for (const auto& id : sel.value("remove", ordered_json::array())) {
        const std::string rid = id.get<std::string>();
        if (std::find(pools.remove.begin(), pools.remove.end(), rid) ==
            pools.remove.end())
          throw ParseError("remove id not in pool: " + rid);
        sub.remove.push_back(rid);
      }
      auto cand = apply_edits(current, sub, !sub.add.empty(),
                              !sub.rewrite.empty(), !sub.remove.empty());
      if (!cand) continue;
      if (!seen.insert(cand->bank.bank_id).second) continue;
      out.push_back(std::move(*cand));
      if (out.size() == static_cast<std::size_t>(k)) break;
    }
    return out;
  };
  return with_retry("planner", parse, [&] { return post(body); });
}

}  // namespace skillbank
