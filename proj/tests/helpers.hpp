// Shared fixtures for the unit and acceptance suites.
#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillbank/rollout.hpp"
#include "skillbank/skill.hpp"

namespace testutil {

using namespace skillbank;

inline std::vector<double> normalized(std::vector<double> v) {
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0) throw std::invalid_argument("zero vector");
  for (double& x : v) x /= norm;
  return v;
}

inline std::vector<double> unit_vec(int dim, int axis) {
  std::vector<double> v(dim, 0.0);
  v.at(axis) = 1.0;
  return v;
}

// Embeddings pinned per exact input text; unregistered text is a test bug.
class FixedEmbedding final : public EmbeddingProvider {
 public:
  explicit FixedEmbedding(int dim) : dim_(dim) {}
  int dimension() const override { return dim_; }
  std::string version_tag() const override { return "fixed/test"; }
  std::vector<double> embed(const std::string& text) const override {
    auto it = table_.find(text);
    if (it == table_.end())
      throw std::invalid_argument("no fixed embedding for: " + text);
    return it->second;
  }
  void set(const std::string& text, std::vector<double> v) {
    if (static_cast<int>(v.size()) != dim_)
      throw std::invalid_argument("dimension mismatch in fixture");
    table_[text] = std::move(v);
  }

 private:
  int dim_;
  std::map<std::string, std::vector<double>> table_;
};

// Worker with injectable behavior, for exercising the validation wrapper.
class ScriptedWorker final : public Worker {
 public:
  using Fn = std::function<Trajectory(const TaskQuery&, const std::vector<Skill>&)>;
  explicit ScriptedWorker(Fn fn, std::string version = "scripted/v1")
      : fn_(std::move(fn)), version_(std::move(version)) {}
  std::string version_tag() const override { return version_; }
  Trajectory run(const TaskQuery& task,
                 const std::vector<Skill>& retrieved) const override {
    return fn_(task, retrieved);
  }

 private:
  Fn fn_;
  std::string version_;
};

inline WorldTask world_task(std::string id, std::string text, Split split,
                            std::string tag, bool solvable = false) {
  WorldTask t;
  t.query.task_id = std::move(id);
  t.query.text = std::move(text);
  t.query.split = split;
  t.required_tag = std::move(tag);
  t.base_solvable = solvable;
  return t;
}

// Skill whose when_to_apply carries worker-visible tag annotations.
inline Skill tagged_skill(const EmbeddingProvider& provider,
                          const std::string& topic,
                          const std::string& helpful,
                          const std::string& harmful = "") {
  std::string when = "use when the task mentions " + topic + ". tags:";
  if (!helpful.empty()) when += " helpful=" + helpful;
  if (!harmful.empty()) when += (helpful.empty() ? " " : "; ") + std::string("harmful=") + harmful;
  return make_skill(topic + " procedure", "for " + topic + " tasks: do the steps",
                    when, provider);
}

class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("skillbank-test-" + label + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + p.string());
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, n);
  std::fclose(f);
  return out;
}

}  // namespace testutil
