#include "skillbank/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace skillbank {

namespace {

void check_enabled(const ObjectiveSet& enabled) {
  if (!enabled.util)
    throw InvalidInput("objective set: util cannot be disabled");
}

std::vector<double> enabled_tuple(const ObjectiveProfile& p,
                                  const ObjectiveSet& on) {
  std::vector<double> t{p.util};
  if (on.div) t.push_back(p.div);
  if (on.cov) t.push_back(p.cov);
  return t;
}

}  // namespace

bool dominates(const ObjectiveProfile& a, const ObjectiveProfile& b,
               const ObjectiveSet& enabled) {
  check_enabled(enabled);
  bool all_ge = true, any_gt = false;
  auto cmp = [&](double x, double y) {
    all_ge = all_ge && x >= y;
    any_gt = any_gt || x > y;
  };
  cmp(a.util, b.util);
  if (enabled.div) cmp(a.div, b.div);
  if (enabled.cov) cmp(a.cov, b.cov);
  return all_ge && any_gt;
}

std::vector<Candidate> pareto_front(const std::vector<Candidate>& candidates,
                                    const ObjectiveSet& enabled) {
  check_enabled(enabled);
  if (candidates.empty()) throw InvalidInput("pareto_front: no candidates");

  // Lexicographic descending order: if a dominates b, a sorts before b,
  // so each point needs checking only against the front built so far.
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return enabled_tuple(candidates[i].profile, enabled) >
           enabled_tuple(candidates[j].profile, enabled);
  });

  std::vector<std::size_t> front;
  for (std::size_t idx : order) {
    bool dominated = false;
    for (auto it = front.rbegin(); it != front.rend(); ++it) {
      if (dominates(candidates[*it].profile, candidates[idx].profile, enabled)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) front.push_back(idx);
  }

  std::set<std::size_t> keep(front.begin(), front.end());
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (keep.count(i)) out.push_back(candidates[i]);
  return out;
}

double hypervolume_2d(const std::vector<std::pair<double, double>>& points) {
  for (const auto& [x, y] : points)
    if (!(std::isfinite(x) && std::isfinite(y)) || x < 0 || y < 0)
      throw InvalidInput("hypervolume_2d: coordinates must be finite and >= 0");
  std::vector<std::pair<double, double>> pts = points;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  });
  double hv = 0, ymax = 0;
  for (const auto& [x, y] : pts) {
    if (y > ymax) {
      hv += x * (y - ymax);
      ymax = y;
    }
  }
  return hv;
}

double hv_contribution(std::size_t index,
                       const std::vector<std::pair<double, double>>& pool) {
  if (index >= pool.size())
    throw InvalidInput("hv_contribution: index out of range");
  std::vector<std::pair<double, double>> rest;
  rest.reserve(pool.size() - 1);
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (i != index) rest.push_back(pool[i]);
  return std::max(0.0, hypervolume_2d(pool) - hypervolume_2d(rest));
}

SelectionOutcome select(const std::vector<Candidate>& candidates,
                        double epsilon_tol, const ObjectiveSet& enabled) {
  check_enabled(enabled);
  if (candidates.empty()) throw InvalidInput("select: no candidates");
  if (epsilon_tol < 0) throw InvalidInput("select: epsilon_tol must be >= 0");
  std::size_t n_null = 0;
  const Candidate* null_cand = nullptr;
  std::set<std::string> refs;
  for (const Candidate& c : candidates) {
    if (c.is_null) {
      ++n_null;
      null_cand = &c;
    }
    if (!refs.insert(c.bank_ref).second)
      throw InvalidInput("select: duplicate bank_ref '" + c.bank_ref + "'");
  }
  if (n_null != 1)
    throw InvalidInput("select: expected exactly one null candidate, got " +
                       std::to_string(n_null));

  SelectionOutcome out;
  out.front = pareto_front(candidates, enabled);
  out.u_max = out.front.front().profile.util;
  for (const Candidate& c : out.front)
    out.u_max = std::max(out.u_max, c.profile.util);
  for (const Candidate& c : out.front)
    if (c.profile.util >= out.u_max - epsilon_tol) out.tie_pool.push_back(c);

  // Disabled regularizers are projected to the constant 1 so the 2-D sweep
  // degenerates to the hypervolume over what remains enabled.
  std::vector<std::pair<double, double>> pts;
  for (const Candidate& c : out.tie_pool)
    pts.emplace_back(enabled.div ? c.profile.div : 1.0,
                     enabled.cov ? c.profile.cov : 1.0);
  for (std::size_t i = 0; i < out.tie_pool.size(); ++i)
    out.contributions[out.tie_pool[i].bank_ref] = hv_contribution(i, pts);

  auto better = [&](const Candidate& a, const Candidate& b) {
    double ca = out.contributions.at(a.bank_ref);
    double cb = out.contributions.at(b.bank_ref);
    if (ca != cb) return ca > cb;
    if (a.is_null != b.is_null) return a.is_null;  // stability bias
    if (a.profile.div != b.profile.div) return a.profile.div > b.profile.div;
    if (a.profile.cov != b.profile.cov) return a.profile.cov > b.profile.cov;
    if (a.bank_size != b.bank_size) return a.bank_size < b.bank_size;
    return a.bank_ref < b.bank_ref;
  };
  const Candidate* winner = &out.tie_pool.front();
  for (const Candidate& c : out.tie_pool)
    if (better(c, *winner)) winner = &c;
  out.winner = *winner;

  // Non-degradation guarantee, asserted on every selection.
  if (out.winner.profile.util < null_cand->profile.util - epsilon_tol - 1e-12)
    throw std::logic_error("select: non-degradation guarantee violated");
  return out;
}

}  // namespace skillbank
