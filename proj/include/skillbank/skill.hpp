#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skillbank {

// Caller violated a documented precondition.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
// An input file or payload could not be parsed.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Parsed data violates a structural invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SkillOrigin { ColdStart, Add, Rewrite };

std::string to_string(SkillOrigin origin);
SkillOrigin origin_from_string(const std::string& s);

struct Provenance {
  int round_created = 0;
  SkillOrigin origin = SkillOrigin::ColdStart;
  bool operator==(const Provenance&) const = default;
};

struct Skill {
  std::string id;  // first 16 hex chars of sha256(canonical_bytes)
  std::string title;
  std::string principle;
  std::string when_to_apply;
  std::vector<double> embedding;  // unit L2 norm
  Provenance provenance;

  // Text shared by the lexical and dense retrieval sides.
  std::string retrieval_text() const;

  bool operator==(const Skill&) const = default;
};

std::string trim_copy(std::string_view s);

// Length-prefixed framing of the three text fields, in fixed order:
// "<decimal byte length>:<raw bytes>\n" each. Injective over field
// triples; embedding and provenance excluded.
std::string canonical_bytes(const Skill& s);
std::string canonical_bytes(const std::string& title, const std::string& principle,
                            const std::string& when_to_apply);

std::string content_id(const Skill& s);

// Throws ValidationError on empty-after-trim fields, missing id, or a
// non-unit embedding.
void validate_skill(const Skill& s);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  virtual std::string version_tag() const = 0;
  // Deterministic; returns a unit-normalized vector of dimension().
  // Empty (or whitespace-only, when trimming) text is invalid input.
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Default provider: hashed character trigrams into `dim` buckets, each
// contribution signed by the parity of its 64-bit hash, then L2-normalized.
class TrigramHashEmbedding final : public EmbeddingProvider {
 public:
  explicit TrigramHashEmbedding(int dim = 256, bool trim = true);
  int dimension() const override { return dim_; }
  std::string version_tag() const override;
  std::vector<double> embed(const std::string& text) const override;

 private:
  int dim_;
  bool trim_;
};

// Trims the three fields, validates them, derives id and embedding.
Skill make_skill(std::string title, std::string principle,
                 std::string when_to_apply, const EmbeddingProvider& provider,
                 Provenance prov = {});

struct SkillBank {
  std::vector<Skill> skills;  // stable order, unique ids
  std::string bank_id;        // content-derived (see bank_content_id)
  int round = 0;              // lineage metadata, not persisted

  std::size_t size() const { return skills.size(); }
  bool empty() const { return skills.empty(); }
  const Skill* find(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id) != nullptr; }
};

std::string bank_content_id(const std::vector<Skill>& skills);

// Validates every skill and id uniqueness; derives bank_id.
SkillBank make_bank(std::vector<Skill> skills, int round = 0);

// Bank files are a JSON array of skill objects. A missing embedding is
// recomputed from the retrieval text; a stored one must be unit norm.
SkillBank load_bank(const std::filesystem::path& path,
                    const EmbeddingProvider& provider);
void save_bank(const SkillBank& bank, const std::filesystem::path& path);

// Field-for-field equality of the skill lists.
bool same_contents(const SkillBank& a, const SkillBank& b);

}  // namespace skillbank
