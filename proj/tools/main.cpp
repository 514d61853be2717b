// Command-line front end: curate / eval / gen-world / report /
// inspect-cache / purge-cache. Exit codes: 0 ok, 1 runtime failure,
// 2 configuration or usage error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "skillbank/curation.hpp"
#include "skillbank/objectives.hpp"
#include "skillbank/replay_cache.hpp"
#include "skillbank/rollout.hpp"
#include "skillbank/skill.hpp"

namespace {

using namespace skillbank;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::vector<std::string> split_commas(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_or_throw(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

struct CurateArgs {
  std::string config_path;
  std::string out_dir;
  std::string cache_dir;
  bool reuse_cache = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::optional<int> candidates;
  std::optional<double> epsilon;
  std::string objectives;
  std::string edit_ops;
  std::string proposer;
};

int run_curate(const CurateArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (!args.cache_dir.empty()) cfg.cache_dir = args.cache_dir;
  if (args.reuse_cache) cfg.reuse_cache = true;
  if (args.seed) cfg.seed = *args.seed;
  if (args.rounds) cfg.rounds = *args.rounds;
  if (args.candidates) cfg.candidates = *args.candidates;
  if (args.epsilon) cfg.epsilon_tol = *args.epsilon;
  if (!args.objectives.empty())
    cfg.objectives = objectives_from_list(split_commas(args.objectives));
  if (!args.edit_ops.empty())
    cfg.edit_ops = edit_ops_from_list(split_commas(args.edit_ops));
  if (!args.proposer.empty()) {
    if (args.proposer == "rule") cfg.proposer = ProposerMode::RuleBased;
    else if (args.proposer == "remote") cfg.proposer = ProposerMode::Remote;
    else throw ValidationError("--proposer must be 'rule' or 'remote'");
  }
  validate_config(cfg);

  CurationLoop::Result result = run_curation_to_dir(cfg, args.out_dir);
  const RoundReport& last = result.reports.back();
  std::cout << "final bank " << last.bank_id << " (" << last.bank_size
            << " skills) util=" << last.profile.util
            << " div=" << last.profile.div << " cov=" << last.profile.cov
            << "\nartifacts in " << args.out_dir << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string bank_path;
  std::string world_path;
  std::string split = "query";
  std::string config_path;
  std::string out_path;
};

int run_eval(const EvalArgs& args) {
  RunConfig cfg;  // defaults unless a config is given
  if (!args.config_path.empty()) cfg = load_run_config(args.config_path);

  SyntheticWorld world = SyntheticWorld::load(args.world_path);
  TrigramHashEmbedding provider(cfg.embedding_dim);
  SyntheticWorker worker(world, cfg.success_threshold);
  SkillBank bank = load_bank(args.bank_path, provider);

  Split split = split_from_string(args.split);
  ProfileReport report =
      evaluate_profile(bank, world.tasks(split), worker, provider,
                       cfg.retrieval, cfg.epsilon_reg, nullptr, 0);
  std::string text = profile_report_to_json(report);
  if (!args.out_path.empty()) write_or_throw(args.out_path, text);
  std::cout << text;
  return kExitOk;
}

struct GenWorldArgs {
  int tags = 4;
  int tasks_per_split = 6;
  double solvable_fraction = 0.25;
  std::uint64_t seed = 42;
  std::string out_path;
};

int run_gen_world(const GenWorldArgs& args) {
  WorldGenSpec spec;
  spec.n_tags = args.tags;
  spec.n_tasks_per_split = args.tasks_per_split;
  spec.solvable_fraction = args.solvable_fraction;
  spec.seed = args.seed;
  SyntheticWorld world = SyntheticWorld::generate(spec);
  world.save(args.out_path);
  std::cout << "world " << world.digest() << " -> " << args.out_path << "\n";
  return kExitOk;
}

int run_report(const std::string& rounds_path, const std::string& out_path) {
  std::string csv = rounds_to_csv(rounds_path);
  if (!out_path.empty()) {
    write_or_throw(out_path, csv);
    std::cout << "wrote " << out_path << "\n";
  } else {
    std::cout << csv;
  }
  return kExitOk;
}

int run_inspect_cache(const std::string& cache_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(cache_dir))
    throw ValidationError("not a directory: " + cache_dir);

  std::size_t corrupted = 0;
  std::map<std::string, long> versions;
  for (const auto& entry : fs::directory_iterator(cache_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
      CacheEntry parsed = cache_entry_from_json(buf.str());
      ++versions[parsed.worker_version];
    } catch (const std::exception&) {
      ++corrupted;
    }
  }
  long total = 0;
  for (const auto& [version, count] : versions) total += count;
  nlohmann::ordered_json j{{"entries", total}, {"corrupted", corrupted}};
  nlohmann::ordered_json by_version = nlohmann::ordered_json::object();
  for (const auto& [version, count] : versions) by_version[version] = count;
  j["versions"] = std::move(by_version);
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int run_purge_cache(const std::string& cache_dir, const std::string& keep) {
  std::size_t removed = ReplayCache::purge_dir(cache_dir, keep);
  std::cout << "purged " << removed << " entries\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skill bank curation over synthetic task worlds"};
  app.require_subcommand(1);

  CurateArgs curate_args;
  CLI::App* curate = app.add_subcommand("curate", "run the curation loop");
  curate->add_option("--config", curate_args.config_path, "run config JSON")
      ->required();
  curate->add_option("--out", curate_args.out_dir, "output directory")->required();
  curate->add_option("--cache-dir", curate_args.cache_dir,
                     "persist replay cache entries here");
  curate->add_flag("--reuse-cache", curate_args.reuse_cache,
                   "read entries persisted by previous runs");
  curate->add_option("--seed", curate_args.seed, "override config seed");
  curate->add_option("--rounds", curate_args.rounds, "override round count");
  curate->add_option("--candidates", curate_args.candidates,
                     "override candidates per round");
  curate->add_option("--epsilon", curate_args.epsilon,
                     "override utility tie tolerance");
  curate->add_option("--objectives", curate_args.objectives,
                     "comma list from util,div,cov (util required)");
  curate->add_option("--edit-ops", curate_args.edit_ops,
                     "comma list from add,rewrite,remove (add required)");
  curate->add_option("--proposer", curate_args.proposer, "rule or remote");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "profile a bank on a world split");
  eval->add_option("--bank", eval_args.bank_path, "bank JSON")->required();
  eval->add_option("--world", eval_args.world_path, "world JSON")->required();
  eval->add_option("--split", eval_args.split, "support, query or test");
  eval->add_option("--config", eval_args.config_path,
                   "run config for retrieval/eval settings");
  eval->add_option("--out", eval_args.out_path, "write the profile JSON here");

  GenWorldArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-world", "generate a synthetic world");
  gen->add_option("--tags", gen_args.tags, "capability tag count");
  gen->add_option("--tasks-per-split", gen_args.tasks_per_split,
                  "tasks per support/query/test split");
  gen->add_option("--solvable-fraction", gen_args.solvable_fraction,
                  "fraction solvable without skills");
  gen->add_option("--seed", gen_args.seed, "generator seed");
  gen->add_option("--out", gen_args.out_path, "world JSON path")->required();

  std::string report_rounds, report_out;
  CLI::App* report = app.add_subcommand("report", "rounds.jsonl -> CSV");
  report->add_option("--rounds", report_rounds, "rounds.jsonl path")->required();
  report->add_option("--out", report_out, "CSV path (default stdout)");

  std::string inspect_dir;
  CLI::App* inspect = app.add_subcommand("inspect-cache", "summarize a cache dir");
  inspect->add_option("--cache-dir", inspect_dir, "cache directory")->required();

  std::string purge_dir_path, purge_keep;
  CLI::App* purge = app.add_subcommand("purge-cache",
                                       "drop entries from other worker versions");
  purge->add_option("--cache-dir", purge_dir_path, "cache directory")->required();
  purge->add_option("--keep-version", purge_keep, "worker version to keep")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (curate->parsed()) return run_curate(curate_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (gen->parsed()) return run_gen_world(gen_args);
    if (report->parsed()) return run_report(report_rounds, report_out);
    if (inspect->parsed()) return run_inspect_cache(inspect_dir);
    if (purge->parsed()) return run_purge_cache(purge_dir_path, purge_keep);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;  // unreachable: a subcommand is required
}
