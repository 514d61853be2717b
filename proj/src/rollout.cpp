#include "skillbank/rollout.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "skillbank/hash.hpp"
#include "json.hpp"

namespace skillbank {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Split split) {
  switch (split) {
    case Split::Support: return "support";
    case Split::Query: return "query";
    case Split::Test: return "test";
  }
  throw std::logic_error("to_string: unknown Split");
}

Split split_from_string(const std::string& s) {
  if (s == "support") return Split::Support;
  if (s == "query") return Split::Query;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split: '" + s + "'");
}

Trajectory rollout(const Worker& worker, const TaskQuery& task,
                   const std::vector<Skill>& retrieved) {
  Trajectory t;
  try {
    t = worker.run(task, retrieved);
  } catch (const std::exception& e) {
    throw RolloutError(task.task_id, e.what());
  }
  if (t.task_id != task.task_id)
    throw RolloutError(task.task_id, "worker returned mismatched task id");
  if (!(t.reward >= 0.0 && t.reward <= 1.0))
    throw RolloutError(task.task_id, "worker reward outside [0, 1]");
  return t;
}

QuadrantPartition partition_quadrants(const std::vector<Trajectory>& trajectories) {
  QuadrantPartition q;
  for (const Trajectory& t : trajectories) {
    if (t.retrieved.empty())
      (t.success ? q.success_no_retrieval : q.failure_no_retrieval).push_back(t);
    else
      (t.success ? q.success_retrieval : q.failure_retrieval).push_back(t);
  }
  return q;
}

namespace {

bool tag_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c == '-';
}

// The list runs while characters are tag chars or commas; anything else
// (';', '.', space, end of string) terminates it.
std::vector<std::string> parse_tag_list(const std::string& text, const char* marker) {
  std::vector<std::string> out;
  auto pos = text.find(marker);
  if (pos == std::string::npos) return out;
  pos += std::string(marker).size();
  std::string cur;
  for (std::size_t i = pos; i <= text.size(); ++i) {
    char c = i < text.size() ? text[i] : ';';  // sentinel terminator
    if (tag_char(static_cast<unsigned char>(c))) {
      cur += c;
    } else if (c == ',') {
      if (!cur.empty()) { out.push_back(cur); cur.clear(); }
    } else {
      if (!cur.empty()) out.push_back(cur);
      break;
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

SkillTags parse_skill_tags(const std::string& when_to_apply) {
  SkillTags t;
  t.helpful = parse_tag_list(when_to_apply, "helpful=");
  t.harmful = parse_tag_list(when_to_apply, "harmful=");
  return t;
}

SyntheticWorld SyntheticWorld::from_components(std::vector<std::string> tags,
                                               std::vector<WorldTask> tasks) {
  SyntheticWorld w;
  std::set<std::string> tagset(tags.begin(), tags.end());
  if (tagset.size() != tags.size())
    throw ValidationError("world: duplicate tags");
  if (tasks.empty()) throw ValidationError("world: no tasks");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const WorldTask& t = tasks[i];
    if (t.query.task_id.empty())
      throw ValidationError("world: tasks[" + std::to_string(i) + "] has empty task_id");
    if (!tagset.count(t.required_tag))
      throw ValidationError("world: task " + t.query.task_id +
                            " requires unknown tag '" + t.required_tag + "'");
    if (!w.by_id_.emplace(t.query.task_id, i).second)
      throw ValidationError("world: duplicate task id '" + t.query.task_id +
                            "' (splits must be disjoint)");
  }
  w.tags_ = std::move(tags);
  w.tasks_ = std::move(tasks);
  w.digest_ = sha256_hex(w.to_json_string()).substr(0, 16);
  return w;
}

std::vector<TaskQuery> SyntheticWorld::tasks(Split split) const {
  std::vector<TaskQuery> out;
  for (const WorldTask& t : tasks_)
    if (t.query.split == split) out.push_back(t.query);
  return out;
}

const WorldTask& SyntheticWorld::task(const std::string& task_id) const {
  auto it = by_id_.find(task_id);
  if (it == by_id_.end())
    throw InvalidInput("world: unknown task id '" + task_id + "'");
  return tasks_[it->second];
}

std::string SyntheticWorld::to_json_string() const {
  ordered_json doc;
  doc["tags"] = tags_;
  doc["tasks"] = ordered_json::array();
  for (const WorldTask& t : tasks_) {
    doc["tasks"].push_back({{"task_id", t.query.task_id},
                            {"text", t.query.text},
                            {"split", to_string(t.query.split)},
                            {"required_tag", t.required_tag},
                            {"base_solvable", t.base_solvable}});
  }
  return doc.dump(2) + "\n";
}

void SyntheticWorld::save(const std::filesystem::path& path) const {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write world file: " + path.string());
  out << to_json_string();
}

SyntheticWorld SyntheticWorld::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open world file: " + path.string());
  ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("world file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("tags") || !doc.contains("tasks"))
    throw ParseError("world file " + path.string() +
                     ": expected object with 'tags' and 'tasks'");
  std::vector<std::string> tags;
  try {
    tags = doc["tags"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("world file: 'tags' must be an array of strings");
  }
  if (!doc["tasks"].is_array())
    throw ParseError("world file: 'tasks' must be an array");
  std::vector<WorldTask> tasks;
  for (std::size_t i = 0; i < doc["tasks"].size(); ++i) {
    const auto& o = doc["tasks"][i];
    const std::string where = "tasks[" + std::to_string(i) + "]";
    for (const char* key : {"task_id", "text", "split", "required_tag"})
      if (!o.contains(key) || !o[key].is_string())
        throw ParseError("world file: " + where + ": missing or non-string '" +
                         key + "'");
    if (!o.contains("base_solvable") || !o["base_solvable"].is_boolean())
      throw ParseError("world file: " + where + ": missing or non-bool 'base_solvable'");
    WorldTask t;
    t.query.task_id = o["task_id"].get<std::string>();
    t.query.text = o["text"].get<std::string>();
    t.query.split = split_from_string(o["split"].get<std::string>());
    t.required_tag = o["required_tag"].get<std::string>();
    t.base_solvable = o["base_solvable"].get<bool>();
    tasks.push_back(std::move(t));
  }
  return from_components(std::move(tags), std::move(tasks));
}

namespace {

const std::vector<std::string>& tag_words() {
  static const std::vector<std::string> words = {
      "heat",  "clean", "cool",  "slice", "rinse", "weigh", "pack",  "scan",
      "stack", "wipe",  "sort",  "seal",  "grind", "pour",  "press", "label",
      "brush", "drain", "chill", "blend", "carve", "fold",  "melt",  "prime"};
  return words;
}

const std::vector<std::string>& satellite_words() {
  static const std::vector<std::string> words = {
      "gauge",   "tray",    "valve",  "filter", "nozzle", "crate",  "lever",
      "spindle", "hopper",  "chute",  "clamp",  "roller", "burner", "sieve",
      "paddle",  "bracket", "drum",   "vent",   "probe",  "rack",   "coil",
      "funnel",  "gasket",  "pulley"};
  return words;
}

// mt19937_64 raw output is portable; distributions are not, so derive
// values directly from the generator.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  return rng() % n;
}

double unit_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

SyntheticWorld SyntheticWorld::generate(const WorldGenSpec& spec) {
  if (spec.n_tags < 1) throw InvalidInput("generate: n_tags must be >= 1");
  if (spec.n_tasks_per_split < 1)
    throw InvalidInput("generate: n_tasks_per_split must be >= 1");
  if (spec.solvable_fraction < 0.0 || spec.solvable_fraction > 1.0)
    throw InvalidInput("generate: solvable_fraction must be in [0, 1]");

  std::vector<std::string> tags;
  for (int i = 0; i < spec.n_tags; ++i) {
    if (i < static_cast<int>(tag_words().size()))
      tags.push_back(tag_words()[i]);
    else
      tags.push_back("tag" + std::to_string(i));
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<WorldTask> tasks;
  const std::pair<Split, const char*> splits[] = {
      {Split::Support, "s"}, {Split::Query, "q"}, {Split::Test, "x"}};
  for (auto [split, prefix] : splits) {
    for (int j = 0; j < spec.n_tasks_per_split; ++j) {
      std::size_t ti = bounded(rng, tags.size());
      const std::string& tag = tags[ti];
      const std::string& sat1 = satellite_words()[ti % satellite_words().size()];
      const std::string& sat2 =
          satellite_words()[(ti + 7) % satellite_words().size()];
      char num[16];
      std::snprintf(num, sizeof num, "%03d", j);
      WorldTask t;
      t.query.task_id = std::string(prefix) + "-" + num;
      t.query.text = "use the " + tag + " station to " + tag +
                     " the item then check the " + sat1 + " and the " + sat2 +
                     " (case " + num + ")";
      t.query.split = split;
      t.required_tag = tag;
      t.base_solvable = unit_real(rng) < spec.solvable_fraction;
      tasks.push_back(std::move(t));
    }
  }
  return from_components(std::move(tags), std::move(tasks));
}

SyntheticWorker::SyntheticWorker(const SyntheticWorld& world,
                                 double success_threshold)
    : world_(world), success_threshold_(success_threshold) {
  char thr[32];
  std::snprintf(thr, sizeof thr, "%.6g", success_threshold_);
  version_ = "synthetic/v1/thr=" + std::string(thr) + "/" + world_.digest();
}

std::string SyntheticWorker::version_tag() const { return version_; }

Trajectory SyntheticWorker::run(const TaskQuery& task,
                                const std::vector<Skill>& retrieved) const {
  const WorldTask& wt = world_.task(task.task_id);
  bool solved = wt.base_solvable;
  if (!solved) {
    bool helpful = false, harmful = false;
    for (const Skill& s : retrieved) {
      SkillTags tags = parse_skill_tags(s.when_to_apply);
      helpful |= std::binary_search(tags.helpful.begin(), tags.helpful.end(),
                                    wt.required_tag);
      harmful |= std::binary_search(tags.harmful.begin(), tags.harmful.end(),
                                    wt.required_tag);
    }
    solved = helpful && !harmful;
  }
  calls_.fetch_add(1, std::memory_order_relaxed);
  Trajectory t;
  t.task_id = task.task_id;
  for (const Skill& s : retrieved) t.retrieved.push_back(s.id);
  t.reward = solved ? 1.0 : 0.0;
  t.success = t.reward >= success_threshold_;
  t.steps = 1;
  return t;
}

std::string trajectory_to_json_line(const Trajectory& t) {
  ordered_json o;
  o["task_id"] = t.task_id;
  o["retrieved"] = t.retrieved;
  o["reward"] = t.reward;
  o["success"] = t.success;
  o["steps"] = t.steps;
  return o.dump();
}

Trajectory trajectory_from_json_line(const std::string& line) {
  ordered_json o;
  try {
    o = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trajectory line: ") + e.what());
  }
  Trajectory t;
  try {
    t.task_id = o.at("task_id").get<std::string>();
    t.retrieved = o.at("retrieved").get<std::vector<std::string>>();
    t.reward = o.at("reward").get<double>();
    t.success = o.at("success").get<bool>();
    t.steps = o.at("steps").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trajectory line: ") + e.what());
  }
  return t;
}

}  // namespace skillbank
