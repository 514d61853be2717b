#pragma once

#include <map>
#include <string>
#include <vector>

#include "skillbank/skill.hpp"

namespace skillbank {

struct RetrievalConfig {
  int k_top = 3;
  double w_bm25 = 0.30;
  double w_dense = 0.70;
  double score_threshold = 0.30;
};

struct RetrievalEntry {
  std::string skill_id;
  double combined_score = 0;
  double bm25_norm = 0;
  double cosine = 0;
  int rank = 0;  // 1-based
  bool operator==(const RetrievalEntry&) const = default;
};

struct RetrievalResult {
  std::string query_text;
  std::vector<RetrievalEntry> entries;  // rank order

  bool empty() const { return entries.empty(); }
  std::vector<std::string> skill_ids() const;
};

// Maximal runs of ASCII alphanumerics, lowercased.
std::vector<std::string> tokenize(const std::string& text);

// BM25 with k1=1.2, b=0.75 over the concatenated skill text, using the
// non-negative idf variant ln(1 + (N - df + 0.5)/(df + 0.5)) so scores
// are always >= 0. Query terms are deduplicated. Returns a score for
// every skill in the bank; empty bank yields an empty map.
std::map<std::string, double> bm25_raw(const std::string& query,
                                       const SkillBank& bank);

// (x - min) / (max - min); degenerate spread (max == min) maps all to 0.
std::map<std::string, double> minmax_normalize(
    const std::map<std::string, double>& scores);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// combined = w_bm25 * minmax(bm25) + w_dense * cosine; entries below
// score_threshold are dropped, survivors sorted by combined descending
// (ties by skill id ascending) and truncated to k_top.
RetrievalResult hybrid_retrieve(const std::string& query, const SkillBank& bank,
                                const EmbeddingProvider& provider,
                                const RetrievalConfig& cfg = {});

}  // namespace skillbank
