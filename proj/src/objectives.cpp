#include "skillbank/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace skillbank {

double delta(double r_with, double r_without) {
  if (!(r_with >= 0.0 && r_with <= 1.0) || !(r_without >= 0.0 && r_without <= 1.0))
    throw InvalidInput("delta: rewards must lie in [0, 1]");
  return r_with - r_without;
}

double skill_utility(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw InvalidInput("skill_utility: no evidence pairs");
  double sum = 0;
  for (const auto& [w, wo] : pairs) sum += delta(w, wo);
  return sum / static_cast<double>(pairs.size());
}

double bank_utility(const UtilityEvidence& evidence) {
  if (evidence.n_nonempty_retrieval == 0) return 0.0;
  const double n_r = static_cast<double>(evidence.n_nonempty_retrieval);
  double sum = 0;
  for (const auto& [id, ev] : evidence.per_skill) {
    if (ev.pairs.empty()) continue;
    if (ev.n_retrieved() > evidence.n_nonempty_retrieval)
      throw InvalidInput("bank_utility: skill " + id +
                         " retrieved more often than N_R");
    sum += (static_cast<double>(ev.n_retrieved()) / n_r) * skill_utility(ev.pairs);
  }
  return sum;
}

double diversity(const SkillBank& bank, double epsilon_reg) {
  if (epsilon_reg <= 0) throw InvalidInput("diversity: epsilon_reg must be > 0");
  const std::size_t n = bank.size();
  if (n == 0) return 0.0;
  for (const Skill& s : bank.skills) {
    double n2 = 0;
    for (double x : s.embedding) n2 += x * x;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
      throw InvalidInput("diversity: skill " + s.id + " embedding is not unit norm");
  }
  if (n == 1) return 1.0;

  // A = G + eps*I is symmetric positive definite (Gram + ridge), so an
  // in-place Cholesky works; log det accumulates from the pivots.
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double dot = 0;
      const auto& ei = bank.skills[i].embedding;
      const auto& ej = bank.skills[j].embedding;
      for (std::size_t k = 0; k < ei.size(); ++k) dot += ei[k] * ej[k];
      a[i * n + j] = dot + (i == j ? epsilon_reg : 0.0);
    }
  }
  double logdet = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double d = a[k * n + k];
    for (std::size_t j = 0; j < k; ++j) d -= a[k * n + j] * a[k * n + j];
    if (d <= 0)
      throw std::logic_error("diversity: Cholesky pivot not positive");
    logdet += std::log(d);
    double lkk = std::sqrt(d);
    a[k * n + k] = lkk;
    for (std::size_t i = k + 1; i < n; ++i) {
      double v = a[i * n + k];
      for (std::size_t j = 0; j < k; ++j) v -= a[i * n + j] * a[k * n + j];
      a[i * n + k] = v / lkk;
    }
  }
  return std::min(1.0, std::exp(logdet / static_cast<double>(n)));
}

double coverage(const std::vector<RetrievalResult>& query_results,
                const SkillBank& bank, int k_top) {
  if (k_top < 1) throw InvalidInput("coverage: k_top must be >= 1");
  if (bank.empty() || query_results.empty()) return 0.0;
  double density_sum = 0;
  std::set<std::string> used;
  for (const RetrievalResult& r : query_results) {
    if (r.entries.size() > static_cast<std::size_t>(k_top))
      throw InvalidInput("coverage: retrieval result exceeds k_top");
    density_sum += static_cast<double>(r.entries.size()) / static_cast<double>(k_top);
    for (const auto& e : r.entries) used.insert(e.skill_id);
  }
  double density = density_sum / static_cast<double>(query_results.size());
  long in_bank = 0;
  for (const Skill& s : bank.skills)
    if (used.count(s.id)) ++in_bank;
  double usage = static_cast<double>(in_bank) / static_cast<double>(bank.size());
  return density * usage;
}

ProfileReport evaluate_profile(const SkillBank& bank,
                               std::vector<TaskQuery> query_tasks,
                               const Worker& worker,
                               const EmbeddingProvider& provider,
                               const RetrievalConfig& retrieval_cfg,
                               double epsilon_reg, ReplayCache* cache,
                               int round) {
  if (query_tasks.empty())
    throw InvalidInput("evaluate_profile: query split is empty");
  std::sort(query_tasks.begin(), query_tasks.end(),
            [](const TaskQuery& a, const TaskQuery& b) {
              return a.task_id < b.task_id;
            });

  ProfileReport rep;
  rep.bank_id = bank.bank_id;
  rep.n_query_tasks = static_cast<long>(query_tasks.size());

  std::vector<RetrievalResult> results;
  results.reserve(query_tasks.size());
  UtilityEvidence evidence;

  for (const TaskQuery& task : query_tasks) {
    RetrievalResult r = hybrid_retrieve(task.text, bank, provider, retrieval_cfg);
    std::vector<Skill> retrieved;
    for (const auto& e : r.entries) retrieved.push_back(*bank.find(e.skill_id));
    Trajectory fact =
        cached_rollout(worker, task, retrieved, cache, round, CacheChannel::Factual);
    if (!retrieved.empty()) {
      ++evidence.n_nonempty_retrieval;
      for (const Skill& s : retrieved) {
        Trajectory cf = loo_replay(worker, task, retrieved, s.id, cache, round);
        evidence.per_skill[s.id].pairs.emplace_back(fact.reward, cf.reward);
      }
    }
    results.push_back(std::move(r));
  }

  rep.n_nonempty_retrieval = evidence.n_nonempty_retrieval;
  rep.profile.util = bank_utility(evidence);
  rep.profile.div = diversity(bank, epsilon_reg);
  rep.profile.cov = coverage(results, bank, retrieval_cfg.k_top);
  for (const auto& [id, ev] : evidence.per_skill)
    rep.per_skill.push_back({id, ev.n_retrieved(), skill_utility(ev.pairs)});
  return rep;
}

std::string profile_report_to_json(const ProfileReport& report) {
  nlohmann::ordered_json o;
  o["bank_id"] = report.bank_id;
  o["util"] = report.profile.util;
  o["div"] = report.profile.div;
  o["cov"] = report.profile.cov;
  o["n_query_tasks"] = report.n_query_tasks;
  o["N_R"] = report.n_nonempty_retrieval;
  o["per_skill"] = nlohmann::ordered_json::array();
  for (const auto& s : report.per_skill)
    o["per_skill"].push_back({{"skill_id", s.skill_id},
                              {"n_retrieved", s.n_retrieved},
                              {"mean_delta", s.mean_delta}});
  return o.dump(2) + "\n";
}

}  // namespace skillbank
