#include "skillbank/skill.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "skillbank/hash.hpp"
#include "json.hpp"

namespace skillbank {

using ordered_json = nlohmann::ordered_json;

std::string to_string(SkillOrigin origin) {
  switch (origin) {
    case SkillOrigin::ColdStart: return "cold_start";
    case SkillOrigin::Add: return "add";
    case SkillOrigin::Rewrite: return "rewrite";
  }
  throw std::logic_error("to_string: unknown SkillOrigin");
}

SkillOrigin origin_from_string(const std::string& s) {
  if (s == "cold_start") return SkillOrigin::ColdStart;
  if (s == "add") return SkillOrigin::Add;
  if (s == "rewrite") return SkillOrigin::Rewrite;
  throw ParseError("unknown skill origin: '" + s + "'");
}

std::string trim_copy(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::string Skill::retrieval_text() const {
  return title + "\n" + principle + "\n" + when_to_apply;
}

std::string canonical_bytes(const std::string& title,
                            const std::string& principle,
                            const std::string& when_to_apply) {
  std::string out;
  for (const std::string* f : {&title, &principle, &when_to_apply}) {
    out += std::to_string(f->size());
    out += ':';
    out += *f;
    out += '\n';
  }
  return out;
}

std::string canonical_bytes(const Skill& s) {
  return canonical_bytes(s.title, s.principle, s.when_to_apply);
}

std::string content_id(const Skill& s) {
  return sha256_hex(canonical_bytes(s)).substr(0, 16);
}

void validate_skill(const Skill& s) {
  if (s.id.empty()) throw ValidationError("skill has empty id");
  if (s.id != content_id(s))
    throw ValidationError("skill " + s.id + ": id does not match content");
  for (auto [name, field] : {std::pair{"title", &s.title},
                             {"principle", &s.principle},
                             {"when_to_apply", &s.when_to_apply}}) {
    if (trim_copy(*field).empty())
      throw ValidationError("skill " + s.id + ": field '" + name +
                            "' is empty after trimming");
  }
  if (s.embedding.empty())
    throw ValidationError("skill " + s.id + ": missing embedding");
  double n2 = 0;
  for (double x : s.embedding) n2 += x * x;
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
    throw ValidationError("skill " + s.id + ": embedding is not unit norm");
}

TrigramHashEmbedding::TrigramHashEmbedding(int dim, bool trim)
    : dim_(dim), trim_(trim) {
  if (dim < 1) throw InvalidInput("TrigramHashEmbedding: dim must be >= 1");
}

std::string TrigramHashEmbedding::version_tag() const {
  return "trigram-hash/d" + std::to_string(dim_) +
         (trim_ ? "/trim" : "/notrim") + "/v1";
}

std::vector<double> TrigramHashEmbedding::embed(const std::string& text) const {
  std::string t = trim_ ? trim_copy(text) : text;
  if (t.empty()) throw InvalidInput("embed: empty text");
  std::vector<double> v(dim_, 0.0);
  auto add = [&](std::string_view gram) {
    std::uint64_t h = fnv1a64(gram);
    double sign = (std::popcount(h) & 1) ? -1.0 : 1.0;
    v[h % static_cast<std::uint64_t>(dim_)] += sign;
  };
  if (t.size() < 3) {
    add(t);
  } else {
    for (std::size_t i = 0; i + 3 <= t.size(); ++i)
      add(std::string_view(t).substr(i, 3));
  }
  double n2 = 0;
  for (double x : v) n2 += x * x;
  if (n2 == 0.0) {
    // All contributions cancelled; fall back to a single deterministic bucket.
    v[fnv1a64(t) % static_cast<std::uint64_t>(dim_)] = 1.0;
    n2 = 1.0;
  }
  double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  return v;
}

Skill make_skill(std::string title, std::string principle,
                 std::string when_to_apply, const EmbeddingProvider& provider,
                 Provenance prov) {
  Skill s;
  s.title = trim_copy(title);
  s.principle = trim_copy(principle);
  s.when_to_apply = trim_copy(when_to_apply);
  s.provenance = prov;
  if (s.title.empty() || s.principle.empty() || s.when_to_apply.empty())
    throw InvalidInput("make_skill: fields must be non-empty after trimming");
  s.id = content_id(s);
  s.embedding = provider.embed(s.retrieval_text());
  validate_skill(s);
  return s;
}

const Skill* SkillBank::find(const std::string& id) const {
  for (const Skill& s : skills)
    if (s.id == id) return &s;
  return nullptr;
}

std::string bank_content_id(const std::vector<Skill>& skills) {
  std::string buf;
  for (const Skill& s : skills) {
    buf += std::to_string(s.id.size());
    buf += ':';
    buf += s.id;
    std::string cb = canonical_bytes(s);
    buf += std::to_string(cb.size());
    buf += ':';
    buf += cb;
  }
  return sha256_hex(buf).substr(0, 16);
}

SkillBank make_bank(std::vector<Skill> skills, int round) {
  std::set<std::string> ids;
  for (const Skill& s : skills) {
    validate_skill(s);
    if (!ids.insert(s.id).second)
      throw ValidationError("bank has duplicate skill id: " + s.id);
  }
  SkillBank b;
  b.bank_id = bank_content_id(skills);
  b.skills = std::move(skills);
  b.round = round;
  return b;
}

namespace {

std::string record_label(std::size_t i) {
  return "skills[" + std::to_string(i) + "]";
}

std::string require_string(const ordered_json& o, const char* key,
                           const std::string& where) {
  if (!o.contains(key) || !o[key].is_string())
    throw ParseError(where + ": missing or non-string field '" + key + "'");
  return o[key].get<std::string>();
}

}  // namespace

SkillBank load_bank(const std::filesystem::path& path,
                    const EmbeddingProvider& provider) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open bank file: " + path.string());
  ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bank file " + path.string() + ": " + e.what());
  }
  if (!doc.is_array())
    throw ParseError("bank file " + path.string() +
                     ": top-level value must be a JSON array");
  std::vector<Skill> skills;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& o = doc[i];
    const std::string where = record_label(i);
    if (!o.is_object()) throw ParseError(where + ": not an object");
    Skill s;
    s.id = require_string(o, "id", where);
    s.title = trim_copy(require_string(o, "title", where));
    s.principle = trim_copy(require_string(o, "principle", where));
    s.when_to_apply = trim_copy(require_string(o, "when_to_apply", where));
    if (o.contains("embedding")) {
      if (!o["embedding"].is_array())
        throw ParseError(where + ": 'embedding' must be an array");
      try {
        s.embedding = o["embedding"].get<std::vector<double>>();
      } catch (const nlohmann::json::exception&) {
        throw ParseError(where + ": 'embedding' has non-numeric entries");
      }
    } else {
      s.embedding = provider.embed(s.retrieval_text());
    }
    if (o.contains("provenance")) {
      const auto& p = o["provenance"];
      if (!p.is_object()) throw ParseError(where + ": 'provenance' must be an object");
      if (p.contains("round_created")) {
        if (!p["round_created"].is_number_integer())
          throw ParseError(where + ": 'provenance.round_created' must be an integer");
        s.provenance.round_created = p["round_created"].get<int>();
      }
      if (p.contains("origin"))
        s.provenance.origin =
            origin_from_string(require_string(p, "origin", where + ".provenance"));
    }
    try {
      validate_skill(s);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    skills.push_back(std::move(s));
  }
  return make_bank(std::move(skills));
}

void save_bank(const SkillBank& bank, const std::filesystem::path& path) {
  ordered_json doc = ordered_json::array();
  for (const Skill& s : bank.skills) {
    ordered_json o;
    o["id"] = s.id;
    o["title"] = s.title;
    o["principle"] = s.principle;
    o["when_to_apply"] = s.when_to_apply;
    o["embedding"] = s.embedding;
    o["provenance"] = {{"round_created", s.provenance.round_created},
                       {"origin", to_string(s.provenance.origin)}};
    doc.push_back(std::move(o));
  }
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write bank file: " + path.string());
  out << doc.dump(2) << "\n";
}

bool same_contents(const SkillBank& a, const SkillBank& b) {
  return a.skills == b.skills;
}

}  // namespace skillbank
