#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "skillbank/pareto.hpp"
#include "skillbank/skill.hpp"

using namespace skillbank;

namespace {

Candidate cand(std::string ref, double util, double div, double cov,
               bool is_null = false, std::size_t size = 3) {
  return Candidate{std::move(ref), {util, div, cov}, is_null, size};
}

// Quadratic reference implementation of the non-dominated set.
std::vector<Candidate> brute_force_front(const std::vector<Candidate>& all,
                                         const ObjectiveSet& enabled) {
  std::vector<Candidate> front;
  for (const auto& c : all) {
    bool dominated = false;
    for (const auto& other : all)
      if (dominates(other.profile, c.profile, enabled)) {
        dominated = true;
        break;
      }
    if (!dominated) front.push_back(c);
  }
  return front;
}

std::multiset<std::string> refs(const std::vector<Candidate>& cs) {
  std::multiset<std::string> out;
  for (const auto& c : cs) out.insert(c.bank_ref);
  return out;
}

}  // namespace

TEST_CASE("dominance requires at least one strict improvement") {
  ObjectiveSet all;
  CHECK(dominates({0.5, 0.5, 0.5}, {0.5, 0.5, 0.4}, all));
  CHECK(dominates({0.6, 0.5, 0.5}, {0.5, 0.5, 0.5}, all));
  CHECK_FALSE(dominates({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, all));  // equal
  CHECK_FALSE(dominates({0.6, 0.4, 0.5}, {0.5, 0.5, 0.5}, all));  // trade-off
  CHECK_FALSE(dominates({0.5, 0.5, 0.4}, {0.5, 0.5, 0.5}, all));
}

TEST_CASE("disabled objectives are invisible to dominance") {
  ObjectiveSet no_div{true, false, true};
  // Wins on util+cov, loses on (ignored) div.
  CHECK(dominates({0.6, 0.1, 0.6}, {0.5, 0.9, 0.5}, no_div));

  ObjectiveSet util_only{true, false, false};
  CHECK(dominates({0.6, 0.0, 0.0}, {0.5, 1.0, 1.0}, util_only));
  CHECK_FALSE(dominates({0.5, 0.9, 0.9}, {0.5, 0.1, 0.1}, util_only));

  ObjectiveSet util_off{false, true, true};
  CHECK_THROWS_AS(dominates({1, 1, 1}, {0, 0, 0}, util_off), InvalidInput);
}

TEST_CASE("pareto front matches brute force on random sets") {
  std::mt19937 rng(4242);
  auto coin = [&] { return (rng() % 2) == 0; };
  for (int trial = 0; trial < 200; ++trial) {
    ObjectiveSet enabled{true, coin(), coin()};
    int n = 1 + static_cast<int>(rng() % 40);
    std::vector<Candidate> all;
    for (int i = 0; i < n; ++i) {
      // Coarse grid on purpose: forces ties and duplicate profiles.
      auto coord = [&] { return static_cast<double>(rng() % 5) / 4.0; };
      all.push_back(cand("c" + std::to_string(i), coord(), coord(), coord()));
    }
    auto fast = pareto_front(all, enabled);
    auto slow = brute_force_front(all, enabled);
    REQUIRE(refs(fast) == refs(slow));
  }
}

TEST_CASE("pareto front preserves input order") {
  std::vector<Candidate> all{cand("b", 0.2, 0.9, 0.1), cand("a", 0.9, 0.2, 0.1),
                             cand("dom", 0.1, 0.1, 0.1), cand("c", 0.5, 0.5, 0.9)};
  auto front = pareto_front(all, ObjectiveSet{});
  REQUIRE(front.size() == 3);
  CHECK(front[0].bank_ref == "b");
  CHECK(front[1].bank_ref == "a");
  CHECK(front[2].bank_ref == "c");
  CHECK_THROWS_AS(pareto_front({}, ObjectiveSet{}), InvalidInput);
}

TEST_CASE("two-dimensional hypervolume sweeps match hand values") {
  CHECK(hypervolume_2d({}) == 0.0);
  CHECK(hypervolume_2d({{0.6, 0.5}}) == doctest::Approx(0.30));
  // 0.6*0.5 + 0.2*(0.9-0.5)
  CHECK(hypervolume_2d({{0.6, 0.5}, {0.2, 0.9}}) == doctest::Approx(0.38));
  // Dominated point contributes nothing.
  CHECK(hypervolume_2d({{0.6, 0.5}, {0.5, 0.4}}) == doctest::Approx(0.30));
  // Duplicates collapse.
  CHECK(hypervolume_2d({{0.5, 0.5}, {0.5, 0.5}}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(hypervolume_2d({{-0.1, 0.5}}), InvalidInput);
  double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(hypervolume_2d({{nan, 0.5}}), InvalidInput);
}

TEST_CASE("hypervolume contributions are leave-one-out differences") {
  // HV(all) = 0.38; dropping either non-dominated point leaves 0.30.
  std::vector<std::pair<double, double>> pts{{0.6, 0.5}, {0.2, 0.9}, {0.5, 0.4}};
  CHECK(hv_contribution(0, pts) == doctest::Approx(0.08));
  CHECK(hv_contribution(1, pts) == doctest::Approx(0.08));
  CHECK(hv_contribution(2, pts) == doctest::Approx(0.0));  // dominated
  CHECK_THROWS_AS(hv_contribution(3, pts), InvalidInput);
}

TEST_CASE("selection walks front, utility pool, then hypervolume") {
  // All three are mutually non-dominated; B trades a little util for a
  // large (div, cov) rectangle.
  std::vector<Candidate> pool{
      cand("null", 0.680, 0.4, 0.95, true),
      cand("A", 0.700, 0.3, 0.2),
      cand("B", 0.685, 0.6, 0.9),
  };
  SelectionOutcome out = select(pool, 0.03, ObjectiveSet{});
  CHECK(out.u_max == doctest::Approx(0.700));
  CHECK(out.front.size() == 3);
  CHECK(out.tie_pool.size() == 3);  // all within 0.03 of u_max
  CHECK(out.winner.bank_ref == "B");
  // HV(all) = 0.56, without B = 0.38, without null = 0.54, without A = 0.56.
  CHECK(out.contributions.at("B") == doctest::Approx(0.18));
  CHECK(out.contributions.at("null") == doctest::Approx(0.02));
  CHECK(out.contributions.at("A") == doctest::Approx(0.0));

  // Shrinking the tolerance ejects B and null from the pool.
  SelectionOutcome tight = select(pool, 0.005, ObjectiveSet{});
  CHECK(tight.tie_pool.size() == 1);
  CHECK(tight.winner.bank_ref == "A");
}

TEST_CASE("selection tie chain prefers the incumbent, then div, cov, size") {
  // Identical profiles: everyone contributes zero, the null wins.
  std::vector<Candidate> same{
      cand("null", 0.5, 0.4, 0.4, true),
      cand("X", 0.5, 0.4, 0.4),
  };
  CHECK(select(same, 0.03, ObjectiveSet{}).winner.bank_ref == "null");

  // A candidate that dominates everything wins through contribution alone.
  std::vector<Candidate> clear{
      cand("null", 0.40, 0.1, 0.1, true),
      cand("Z", 0.50, 0.9, 0.9),
      cand("X", 0.49, 0.5, 0.6),
  };
  CHECK(select(clear, 0.03, ObjectiveSet{}).winner.bank_ref == "Z");

  // Symmetric rectangles contribute identically; higher div decides.
  std::vector<Candidate> chain{
      cand("null", 0.40, 0.1, 0.1, true),
      cand("X", 0.49, 0.72, 0.25),
      cand("Y", 0.49, 0.25, 0.72),
  };
  SelectionOutcome c = select(chain, 0.03, ObjectiveSet{});
  CHECK(c.contributions.at("X") == doctest::Approx(c.contributions.at("Y")));
  CHECK(c.winner.bank_ref == "X");  // div breaks the tie

  // Fully tied profiles between two proposals: smaller bank wins.
  std::vector<Candidate> size_tie{
      cand("null", 0.10, 0.1, 0.1, true),
      cand("big", 0.49, 0.5, 0.5, false, 6),
      cand("small", 0.49, 0.5, 0.5, false, 2),
  };
  CHECK(select(size_tie, 0.03, ObjectiveSet{}).winner.bank_ref == "small");
}

TEST_CASE("selection with a disabled regularizer degrades to one dimension") {
  // div disabled: its coordinate projects to 1, the sweep ranks by cov.
  // A and B are non-comparable over (util, cov); the null is dominated.
  std::vector<Candidate> pool{
      cand("null", 0.50, 0.9, 0.5, true),
      cand("A", 0.49, 0.1, 0.9),
      cand("B", 0.50, 0.8, 0.7),
  };
  ObjectiveSet no_div{true, false, true};
  SelectionOutcome out = select(pool, 0.03, no_div);
  CHECK(out.winner.bank_ref == "A");
  CHECK(out.contributions.at("A") == doctest::Approx(0.2));  // 0.9 - 0.7
  CHECK(out.contributions.at("B") == doctest::Approx(0.0));

  // Both regularizers off: pure utility with the chain on exact ties.
  ObjectiveSet util_only{true, false, false};
  std::vector<Candidate> flat{
      cand("null", 0.50, 0.2, 0.2, true),
      cand("A", 0.50, 0.9, 0.9),
  };
  CHECK(select(flat, 0.0, util_only).winner.bank_ref == "null");
}

TEST_CASE("selection validates its inputs") {
  std::vector<Candidate> ok{cand("null", 0.5, 0.5, 0.5, true),
                            cand("A", 0.4, 0.5, 0.5)};
  CHECK_NOTHROW(select(ok, 0.03, ObjectiveSet{}));
  CHECK_THROWS_AS(select({}, 0.03, ObjectiveSet{}), InvalidInput);
  CHECK_THROWS_AS(select(ok, -0.01, ObjectiveSet{}), InvalidInput);

  std::vector<Candidate> no_null{cand("A", 0.5, 0.5, 0.5)};
  CHECK_THROWS_AS(select(no_null, 0.03, ObjectiveSet{}), InvalidInput);

  std::vector<Candidate> two_null{cand("n1", 0.5, 0.5, 0.5, true),
                                  cand("n2", 0.4, 0.5, 0.5, true)};
  CHECK_THROWS_AS(select(two_null, 0.03, ObjectiveSet{}), InvalidInput);

  std::vector<Candidate> dup{cand("null", 0.5, 0.5, 0.5, true),
                             cand("null", 0.4, 0.5, 0.5)};
  CHECK_THROWS_AS(select(dup, 0.03, ObjectiveSet{}), InvalidInput);
}

TEST_CASE("randomized selection respects the non-degradation contract") {
  std::mt19937 rng(99);
  auto coord = [&] { return static_cast<double>(rng() % 101) / 100.0; };
  for (int trial = 0; trial < 500; ++trial) {
    double eps = static_cast<double>(rng() % 8) / 100.0;
    ObjectiveSet enabled{true, (rng() % 2) == 0, (rng() % 2) == 0};
    int n = 1 + static_cast<int>(rng() % 12);
    std::vector<Candidate> pool;
    double null_util = coord();
    pool.push_back(cand("null", null_util, coord(), coord(), true,
                        1 + rng() % 9));
    for (int i = 0; i < n; ++i)
      pool.push_back(cand("c" + std::to_string(i), coord(), coord(), coord(),
                          false, 1 + rng() % 9));
    SelectionOutcome out = select(pool, eps, enabled);
    CHECK(out.winner.profile.util >= null_util - eps - 1e-12);
    // The winner must sit on the front.
    bool on_front = false;
    for (const auto& f : out.front)
      if (f.bank_ref == out.winner.bank_ref) on_front = true;
    CHECK(on_front);
  }
}
