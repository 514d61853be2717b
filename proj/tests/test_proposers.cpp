#include <atomic>
#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "skillbank/proposers.hpp"
#include "skillbank/remote_proposer.hpp"
#include "skillbank/retrieval.hpp"

using namespace skillbank;
using namespace testutil;

namespace {

TaskTrajectory failing(const SyntheticWorld& world, const std::string& id) {
  const WorldTask& t = world.task(id);
  return {t.query, Trajectory{id, {}, 0.0, false, 1}};
}

TaskTrajectory succeeding(const SyntheticWorld& world, const std::string& id) {
  const WorldTask& t = world.task(id);
  return {t.query, Trajectory{id, {}, 1.0, true, 1}};
}

EvidencePair pair_for(const TaskQuery& task, double with, double without) {
  return {task,
          Trajectory{task.task_id, {"x"}, with, with >= 1.0, 1},
          Trajectory{task.task_id, {}, without, without >= 1.0, 1}};
}

SyntheticWorld distiller_world() {
  return SyntheticWorld::from_components(
      {"heat", "cool", "rinse"},
      {world_task("f1", "use the heat station to heat the item then check the gauge",
                  Split::Support, "heat"),
       world_task("f2", "go to the heat station and heat the sample then check the tray",
                  Split::Support, "heat"),
       world_task("f3", "use the cool rig on the part", Split::Support, "cool"),
       world_task("f4", "rinse the basin", Split::Support, "rinse"),
       world_task("s1", "rinse the other basin", Split::Support, "rinse", true)});
}

}  // namespace

TEST_CASE("evidence pair delta subtracts the counterfactual") {
  TaskQuery t{"t", "text", Split::Support};
  CHECK(pair_for(t, 1.0, 0.0).delta() == 1.0);
  CHECK(pair_for(t, 0.0, 1.0).delta() == -1.0);
}

TEST_CASE("verdict text round trips") {
  CHECK(to_string(VerdictKind::Keep) == "keep");
  CHECK(to_string(VerdictKind::Rewrite) == "rewrite");
  CHECK(to_string(VerdictKind::Remove) == "remove");
}

TEST_CASE("verdict validation pins id and rewrite payload") {
  TrigramHashEmbedding provider(16);
  Skill s = tagged_skill(provider, "heat", "heat");
  Skill other = tagged_skill(provider, "cool", "cool");

  Verdict keep{s.id, VerdictKind::Keep, std::nullopt, 1, 0.5};
  CHECK_NOTHROW(validate_verdict(keep, s));

  Verdict wrong_id{other.id, VerdictKind::Keep, std::nullopt, 1, 0.5};
  CHECK_THROWS_AS(validate_verdict(wrong_id, s), ValidationError);

  Verdict keep_with_payload{s.id, VerdictKind::Keep, other, 1, 0.5};
  CHECK_THROWS_AS(validate_verdict(keep_with_payload, s), ValidationError);

  Verdict rewrite_missing{s.id, VerdictKind::Rewrite, std::nullopt, 1, 0.0};
  CHECK_THROWS_AS(validate_verdict(rewrite_missing, s), ValidationError);

  Verdict rewrite_same{s.id, VerdictKind::Rewrite, s, 1, 0.0};
  CHECK_THROWS_AS(validate_verdict(rewrite_same, s), ValidationError);

  Verdict rewrite_ok{s.id, VerdictKind::Rewrite, other, 1, 0.0};
  CHECK_NOTHROW(validate_verdict(rewrite_ok, s));
}

TEST_CASE("pool validation enforces disjoint claims against the bank") {
  TrigramHashEmbedding provider(16);
  Skill a = tagged_skill(provider, "heat", "heat");
  Skill b = tagged_skill(provider, "cool", "cool");
  Skill fresh = tagged_skill(provider, "rinse", "rinse");
  SkillBank bank = make_bank({a, b});

  EditPools ok;
  ok.add = {fresh};
  ok.rewrite = {{a.id, fresh}};
  ok.remove = {b.id};
  CHECK_NOTHROW(validate_pools(ok, bank));

  EditPools add_in_bank;
  add_in_bank.add = {a};
  CHECK_THROWS_AS(validate_pools(add_in_bank, bank), ValidationError);

  EditPools unknown_remove;
  unknown_remove.remove = {"feedbeeffeedbeef"};
  CHECK_THROWS_AS(validate_pools(unknown_remove, bank), ValidationError);

  EditPools double_claim;
  double_claim.remove = {a.id};
  double_claim.keep = {a.id};
  CHECK_THROWS_AS(validate_pools(double_claim, bank), ValidationError);

  EditPools rewrite_noop;
  rewrite_noop.rewrite = {{a.id, a}};
  CHECK_THROWS_AS(validate_pools(rewrite_noop, bank), ValidationError);

  EditPools rewrite_unknown;
  rewrite_unknown.rewrite = {{fresh.id, a}};
  CHECK_THROWS_AS(validate_pools(rewrite_unknown, bank), ValidationError);
}

TEST_CASE("apply_edits rewrites in place, removes, then appends") {
  TrigramHashEmbedding provider(16);
  Skill a = tagged_skill(provider, "heat", "heat");
  Skill b = tagged_skill(provider, "cool", "cool");
  Skill c = tagged_skill(provider, "rinse", "rinse");
  Skill b2 = tagged_skill(provider, "chill", "cool");
  Skill d = tagged_skill(provider, "slice", "slice");
  SkillBank bank = make_bank({a, b, c}, 2);

  EditPools pools;
  pools.rewrite = {{b.id, b2}};
  pools.remove = {c.id};
  pools.add = {d};
  pools.keep = {a.id};

  auto full = apply_edits(bank, pools, true, true, true);
  REQUIRE(full.has_value());
  REQUIRE(full->bank.size() == 3);
  CHECK(full->bank.skills[0].id == a.id);
  CHECK(full->bank.skills[1].id == b2.id);  // replaced in place
  CHECK(full->bank.skills[2].id == d.id);   // appended last
  CHECK(full->bank.round == 3);
  CHECK(full->applied == EditCounts{1, 1, 1, 1});
  CHECK(full->combo == "add+rewrite+remove");

  auto add_only = apply_edits(bank, pools, true, false, false);
  REQUIRE(add_only.has_value());
  CHECK(add_only->bank.size() == 4);
  CHECK(add_only->combo == "add");
  CHECK(add_only->applied == EditCounts{1, 0, 0, 1});

  // A no-op flag set stays labeled "none" and equals the current bank.
  auto none = apply_edits(bank, EditPools{{}, {}, {}, {a.id}}, true, true, true);
  REQUIRE(none.has_value());
  CHECK(none->combo == "none");
  CHECK(none->bank.bank_id == bank.bank_id);

  // Colliding ids invalidate the combo instead of being repaired.
  EditPools collide;
  collide.add = {a};
  CHECK_FALSE(apply_edits(bank, collide, true, false, false).has_value());
}

TEST_CASE("rule-based distiller groups failures by required tag") {
  TrigramHashEmbedding provider(64);
  SyntheticWorld world = distiller_world();
  RuleBasedDistiller distiller(world, provider);

  std::vector<Skill> out = distiller.distill(
      {failing(world, "f1"), failing(world, "f2"), failing(world, "f3"),
       failing(world, "f4")},
      {succeeding(world, "s1")}, SkillOrigin::Add, 3);

  // rinse is covered by a no-retrieval success, so only cool + heat remain,
  // in sorted tag order.
  REQUIRE(out.size() == 2);
  CHECK(out[0].title == "cool procedure");
  CHECK(out[1].title == "heat procedure");
  for (const Skill& s : out) {
    CHECK(s.provenance.origin == SkillOrigin::Add);
    CHECK(s.provenance.round_created == 3);
  }
  CHECK(parse_skill_tags(out[1].when_to_apply).helpful ==
        std::vector<std::string>{"heat"});
  CHECK(parse_skill_tags(out[1].when_to_apply).harmful.empty());

  // The distilled phrase only uses tokens common to every failing text.
  std::string prefix = "for heat tasks: ";
  REQUIRE(out[1].principle.rfind(prefix, 0) == 0);
  std::string phrase = out[1].principle.substr(prefix.size());
  auto t1 = tokenize(world.task("f1").query.text);
  auto t2 = tokenize(world.task("f2").query.text);
  for (const std::string& tok : tokenize(phrase)) {
    CHECK(std::count(t1.begin(), t1.end(), tok) > 0);
    CHECK(std::count(t2.begin(), t2.end(), tok) > 0);
  }

  CHECK(distiller.distill({}, {}, SkillOrigin::Add, 1).empty());

  // Identical calls produce identical skills (stable ids).
  auto again = distiller.distill({failing(world, "f1"), failing(world, "f2"),
                                  failing(world, "f3"), failing(world, "f4")},
                                 {succeeding(world, "s1")}, SkillOrigin::Add, 3);
  REQUIRE(again.size() == 2);
  CHECK(again[0].id == out[0].id);
  CHECK(again[1].id == out[1].id);
}

TEST_CASE("rule-based diagnoser maps mean delta to a verdict") {
  TrigramHashEmbedding provider(32);
  SyntheticWorld world = SyntheticWorld::from_components(
      {"heat", "cool"},
      {world_task("t-heat", "heat the item", Split::Support, "heat"),
       world_task("t-cool", "cool the item", Split::Support, "cool")});
  RuleBasedDiagnoser diagnoser(world, provider);

  Skill s = make_skill("mixed procedure", "do the steps",
                       "use for mixed work. tags: helpful=cool,heat; harmful=rinse",
                       provider);
  const TaskQuery& heat = world.task("t-heat").query;
  const TaskQuery& cool = world.task("t-cool").query;

  Verdict keep = diagnoser.diagnose(s, {pair_for(heat, 1, 0)}, 2);
  CHECK(keep.kind == VerdictKind::Keep);
  CHECK(keep.mean_delta == doctest::Approx(1.0));
  CHECK(keep.n_pairs == 1);

  Verdict remove = diagnoser.diagnose(s, {pair_for(heat, 0, 1)}, 2);
  CHECK(remove.kind == VerdictKind::Remove);
  CHECK(remove.mean_delta == doctest::Approx(-1.0));

  // Inert overall (+1 on heat, -1 on cool): narrow to the tags that did
  // not hurt and drop the harmful annotation.
  Verdict rewrite =
      diagnoser.diagnose(s, {pair_for(heat, 1, 0), pair_for(cool, 0, 1)}, 2);
  REQUIRE(rewrite.kind == VerdictKind::Rewrite);
  REQUIRE(rewrite.rewritten.has_value());
  const Skill& r = *rewrite.rewritten;
  CHECK(r.when_to_apply == "use for mixed work. tags: helpful=heat");
  CHECK(parse_skill_tags(r.when_to_apply).harmful.empty());
  CHECK(r.title == s.title);
  CHECK(r.provenance.origin == SkillOrigin::Rewrite);
  CHECK(r.provenance.round_created == 2);
  CHECK(r.id != s.id);

  // A narrowing that changes nothing degrades to Keep.
  Skill already = make_skill("narrow procedure", "steps",
                             "tags: helpful=heat", provider);
  Verdict noop = diagnoser.diagnose(already, {pair_for(heat, 1, 1)}, 2);
  CHECK(noop.kind == VerdictKind::Keep);

  CHECK_THROWS_AS(diagnoser.diagnose(s, {}, 2), InvalidInput);
  CHECK_THROWS_AS(RuleBasedDiagnoser(world, provider, -0.5, 0.5), InvalidInput);
}

TEST_CASE("deterministic planner walks combos and deduplicates banks") {
  TrigramHashEmbedding provider(16);
  Skill a = tagged_skill(provider, "heat", "heat");
  Skill b = tagged_skill(provider, "cool", "cool");
  Skill d = tagged_skill(provider, "slice", "slice");
  SkillBank bank = make_bank({a, b});

  EditPools pools;
  pools.add = {d};
  pools.remove = {b.id};
  pools.keep = {a.id};

  DeterministicPlanner planner;
  auto cands = planner.plan(bank, pools, 4);
  // {add,remove}, {add}, {remove}; flag rows over empty pools collapse.
  REQUIRE(cands.size() == 3);
  CHECK(cands[0].combo == "add+remove");
  CHECK(cands[1].combo == "add");
  CHECK(cands[2].combo == "remove");
  std::set<std::string> ids;
  for (const auto& c : cands) {
    ids.insert(c.bank.bank_id);
    CHECK(c.bank.bank_id != bank.bank_id);
    CHECK(c.bank.contains(a.id));  // keep-pool skill survives every combo
  }
  CHECK(ids.size() == 3);

  CHECK(planner.plan(bank, pools, 2).size() == 2);
  CHECK(planner.plan(bank, EditPools{{}, {}, {}, {a.id, b.id}}, 4).empty());
  CHECK_THROWS_AS(planner.plan(bank, pools, 0), InvalidInput);

  EditPools bad;
  bad.add = {a};  // already in the bank
  CHECK_THROWS_AS(planner.plan(bank, bad, 4), ValidationError);
}

// ---------------------------------------------------------------------------
// Remote proposer against an in-process HTTP backend.

namespace {

struct TestServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};

  explicit TestServer(std::function<std::string(const std::string&)> reply) {
    server.Post("/v1/propose", [this, reply = std::move(reply)](
                                   const httplib::Request& req,
                                   httplib::Response& res) {
      ++requests;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      res.set_content(reply(req.body), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~TestServer() {
    server.stop();
    thread.join();
  }
  RemoteConfig config() const {
    RemoteConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.timeout_ms = 5000;
    return cfg;
  }

  std::string last_body;
  std::string last_auth;
};

}  // namespace

TEST_CASE("remote distiller parses and deduplicates returned skills") {
  TestServer server([](const std::string&) {
    return R"({"skills": [
      {"title": "heat procedure", "principle": "use the heat station",
       "when_to_apply": "when heating. tags: helpful=heat"},
      {"title": "heat procedure", "principle": "use the heat station",
       "when_to_apply": "when heating. tags: helpful=heat"},
      {"title": "cool procedure", "principle": "use the cool rig",
       "when_to_apply": "when cooling. tags: helpful=cool"}]})";
  });
  TrigramHashEmbedding provider(32);
  RemoteProposer proposer(server.config(), provider);

  SyntheticWorld world = distiller_world();
  auto skills = proposer.distill({failing(world, "f1")},
                                 {succeeding(world, "s1")}, SkillOrigin::Add, 2);
  REQUIRE(skills.size() == 2);  // duplicate collapsed
  CHECK(skills[0].title == "heat procedure");
  CHECK(skills[0].provenance.origin == SkillOrigin::Add);
  CHECK(skills[0].provenance.round_created == 2);

  auto body = nlohmann::json::parse(server.last_body);
  CHECK(body.at("role") == "distiller");
  CHECK(body.at("failures").size() == 1);
  CHECK(body.at("failures")[0].at("task_id") == "f1");
  CHECK(body.at("successes").size() == 1);
  CHECK(server.requests == 1);
}

TEST_CASE("remote proposer retries a malformed reply exactly once") {
  std::atomic<int> calls{0};
  TestServer server([&](const std::string&) -> std::string {
    return (++calls == 1) ? "garbage{{"
                          : R"({"skills": [{"title": "heat procedure",
                              "principle": "use the heat station",
                              "when_to_apply": "when heating"}]})";
  });
  TrigramHashEmbedding provider(32);
  RemoteProposer proposer(server.config(), provider);
  SyntheticWorld world = distiller_world();

  auto skills = proposer.distill({failing(world, "f1")}, {}, SkillOrigin::Add, 1);
  CHECK(skills.size() == 1);
  CHECK(server.requests == 2);
}

TEST_CASE("remote proposer surfaces persistent garbage as ProposerError") {
  TestServer server([](const std::string&) { return "still not json"; });
  TrigramHashEmbedding provider(32);
  RemoteProposer proposer(server.config(), provider);
  SyntheticWorld world = distiller_world();

  try {
    proposer.distill({failing(world, "f1")}, {}, SkillOrigin::Add, 1);
    FAIL("expected ProposerError");
  } catch (const ProposerError& e) {
    CHECK(e.raw_payload == "still not json");
    CHECK(std::string(e.what()).find("distiller") != std::string::npos);
  }
  CHECK(server.requests == 2);  // one retry, then give up
}

TEST_CASE("remote proposer reports transport-level failures") {
  TrigramHashEmbedding provider(32);
  RemoteConfig cfg;
  cfg.base_url = "http://127.0.0.1:1";  // nothing listens here
  cfg.timeout_ms = 500;
  RemoteProposer proposer(cfg, provider);
  SyntheticWorld world = distiller_world();
  CHECK_THROWS_AS(proposer.distill({failing(world, "f1")}, {}, SkillOrigin::Add, 1),
                  ProposerError);
}

TEST_CASE("remote proposer attaches the bearer token from the environment") {
  TestServer server([](const std::string&) {
    return R"({"skills": []})";
  });
  setenv("SKILLBANK_TEST_TOKEN", "sekrit", 1);
  RemoteConfig cfg = server.config();
  cfg.auth_env = "SKILLBANK_TEST_TOKEN";
  TrigramHashEmbedding provider(32);
  RemoteProposer proposer(cfg, provider);
  SyntheticWorld world = distiller_world();

  proposer.distill({failing(world, "f1")}, {}, SkillOrigin::Add, 1);
  CHECK(server.last_auth == "Bearer sekrit");
  unsetenv("SKILLBANK_TEST_TOKEN");
}

TEST_CASE("remote diagnoser parses verdicts and no-op rewrites") {
  TrigramHashEmbedding provider(32);
  Skill s = make_skill("heat procedure", "use the heat station",
                       "when heating. tags: helpful=heat", provider);
  TaskQuery task{"t1", "heat the item", Split::Support};

  {
    TestServer server([](const std::string&) {
      return R"({"verdict": "rewrite", "rewritten":
        {"title": "heat procedure", "principle": "use the heat station",
         "when_to_apply": "when heating metal. tags: helpful=heat"}})";
    });
    RemoteProposer proposer(server.config(), provider);
    Verdict v = proposer.diagnose(s, {pair_for(task, 1, 0)}, 4);
    REQUIRE(v.kind == VerdictKind::Rewrite);
    CHECK(v.rewritten->when_to_apply == "when heating metal. tags: helpful=heat");
    CHECK(v.rewritten->provenance.origin == SkillOrigin::Rewrite);
    CHECK(v.mean_delta == doctest::Approx(1.0));

    auto body = nlohmann::json::parse(server.last_body);
    CHECK(body.at("role") == "diagnoser");
    CHECK(body.at("pairs")[0].at("reward_with") == 1.0);
    CHECK(body.at("pairs")[0].at("reward_without") == 0.0);
  }
  {
    // Rewrite that reproduces the original content degrades to Keep.
    TestServer server([&](const std::string&) {
      nlohmann::json j{{"verdict", "rewrite"},
                       {"rewritten",
                        {{"title", s.title},
                         {"principle", s.principle},
                         {"when_to_apply", s.when_to_apply}}}};
      return j.dump();
    });
    RemoteProposer proposer(server.config(), provider);
    Verdict v = proposer.diagnose(s, {pair_for(task, 1, 0)}, 4);
    CHECK(v.kind == VerdictKind::Keep);
    CHECK_FALSE(v.rewritten.has_value());
  }
  {
    TestServer server([](const std::string&) {
      return R"({"verdict": "banish"})";
    });
    RemoteProposer proposer(server.config(), provider);
    CHECK_THROWS_AS(proposer.diagnose(s, {pair_for(task, 1, 0)}, 4),
                    ProposerError);
  }
}

TEST_CASE("remote planner composes element-level selections") {
  TrigramHashEmbedding provider(32);
  Skill a = tagged_skill(provider, "heat", "heat");
  Skill b = tagged_skill(provider, "cool", "cool");
  Skill fresh = tagged_skill(provider, "rinse", "rinse");
  Skill b2 = tagged_skill(provider, "chill", "cool");
  SkillBank bank = make_bank({a, b});

  EditPools pools;
  pools.add = {fresh};
  pools.rewrite = {{b.id, b2}};
  pools.remove = {};
  pools.keep = {a.id};

  TestServer server([&](const std::string&) {
    nlohmann::json j{{"candidates",
                      {{{"add", {0}}, {"rewrite", {b.id}}},
                       {{"add", {0}}},
                       {{"add", nlohmann::json::array()}}}}};
    return j.dump();
  });
  RemoteProposer proposer(server.config(), provider);

  auto cands = proposer.plan(bank, pools, 4);
  REQUIRE(cands.size() == 2);  // empty selection folds into the current bank
  CHECK(cands[0].combo == "add+rewrite");
  CHECK(cands[0].bank.size() == 3);
  CHECK(cands[0].bank.contains(b2.id));
  CHECK(cands[1].combo == "add");

  auto body = nlohmann::json::parse(server.last_body);
  CHECK(body.at("role") == "planner");
  CHECK(body.at("pools").at("add")[0].at("id") == fresh.id);
  CHECK(body.at("pools").at("rewrite")[0].at("original_id") == b.id);
  CHECK(body.at("k") == 4);

  // Selections outside the pools are malformed replies.
  TestServer bad([](const std::string&) {
    return R"({"candidates": [{"add": [7]}]})";
  });
  RemoteProposer bad_proposer(bad.config(), provider);
  CHECK_THROWS_AS(bad_proposer.plan(bank, pools, 4), ProposerError);
}
