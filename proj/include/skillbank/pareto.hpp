#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skillbank/objectives.hpp"

namespace skillbank {

struct Candidate {
  std::string bank_ref;  // unique within a selection round
  ObjectiveProfile profile;
  bool is_null = false;       // the incumbent bank
  std::size_t bank_size = 0;  // tie-break input
};

// Componentwise >= over the enabled objectives with at least one strict.
// Identical profiles never dominate each other.
bool dominates(const ObjectiveProfile& a, const ObjectiveProfile& b,
               const ObjectiveSet& enabled);

// The non-dominated subset, in input order. Sorts lexicographically so a
// point can only be dominated by an earlier one, then filters against the
// running front (brute-force dominance is the test oracle).
std::vector<Candidate> pareto_front(const std::vector<Candidate>& candidates,
                                    const ObjectiveSet& enabled);

// Area of the union of rectangles [0,x] x [0,y] (reference point (0,0)),
// by a descending-x sweep. Coordinates must be finite and >= 0.
double hypervolume_2d(const std::vector<std::pair<double, double>>& points);

// hv(pool) - hv(pool without element `index`); never negative.
double hv_contribution(std::size_t index,
                       const std::vector<std::pair<double, double>>& pool);

struct SelectionOutcome {
  Candidate winner;
  std::vector<Candidate> front;
  std::vector<Candidate> tie_pool;  // front members with util >= u_max - eps
  double u_max = 0;
  std::map<std::string, double> contributions;  // bank_ref -> hv contribution
};

// Front -> utility tie pool -> hypervolume contribution over (div, cov).
// A regularizer disabled by config is projected to the constant 1, which
// reduces the sweep to the hypervolume over the remaining enabled one.
// Exact contribution ties fall through a fixed chain: null candidate,
// higher div, higher cov, smaller bank, bank_ref ascending. Exactly one
// null candidate must be present; the winner is guaranteed to satisfy
// util(winner) >= util(null) - epsilon_tol.
SelectionOutcome select(const std::vector<Candidate>& candidates,
                        double epsilon_tol, const ObjectiveSet& enabled);

}  // namespace skillbank
