#include "skillbank/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

namespace skillbank {

namespace {
constexpr double kBm25K1 = 1.2;
constexpr double kBm25B = 0.75;
}  // namespace

std::vector<std::string> RetrievalResult::skill_ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.skill_id);
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::map<std::string, double> bm25_raw(const std::string& query,
                                       const SkillBank& bank) {
  std::map<std::string, double> out;
  const std::size_t n = bank.size();
  if (n == 0) return out;

  std::vector<std::unordered_map<std::string, int>> tf(n);
  std::vector<double> dl(n, 0.0);
  std::unordered_map<std::string, int> df;
  for (std::size_t i = 0; i < n; ++i) {
    auto tokens = tokenize(bank.skills[i].retrieval_text());
    dl[i] = static_cast<double>(tokens.size());
    for (auto& t : tokens)
      if (++tf[i][t] == 1) ++df[t];
  }
  double avgdl = 0;
  for (double d : dl) avgdl += d;
  avgdl /= static_cast<double>(n);

  // Deterministic summation order: unique query terms, sorted.
  std::set<std::string> qterms;
  for (auto& t : tokenize(query)) qterms.insert(std::move(t));

  for (std::size_t i = 0; i < n; ++i) {
    double score = 0;
    double len_norm = avgdl > 0 ? dl[i] / avgdl : 1.0;
    for (const auto& t : qterms) {
      auto it = tf[i].find(t);
      if (it == tf[i].end()) continue;
      double f = it->second;
      double nt = df[t];
      double idf = std::log(1.0 + (static_cast<double>(n) - nt + 0.5) / (nt + 0.5));
      score += idf * (f * (kBm25K1 + 1.0)) /
               (f + kBm25K1 * (1.0 - kBm25B + kBm25B * len_norm));
    }
    out[bank.skills[i].id] = score;
  }
  return out;
}

std::map<std::string, double> minmax_normalize(
    const std::map<std::string, double>& scores) {
  std::map<std::string, double> out;
  if (scores.empty()) return out;
  double lo = scores.begin()->second, hi = lo;
  for (const auto& [_, v] : scores) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (const auto& [k, v] : scores)
    out[k] = (hi > lo) ? (v - lo) / (hi - lo) : 0.0;
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw InvalidInput("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw InvalidInput("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

RetrievalResult hybrid_retrieve(const std::string& query, const SkillBank& bank,
                                const EmbeddingProvider& provider,
                                const RetrievalConfig& cfg) {
  if (cfg.k_top < 1) throw InvalidInput("hybrid_retrieve: k_top must be >= 1");
  if (cfg.w_bm25 < 0 || cfg.w_dense < 0)
    throw InvalidInput("hybrid_retrieve: negative score weight");
  RetrievalResult res;
  res.query_text = query;
  if (bank.empty()) return res;

  auto norm = minmax_normalize(bm25_raw(query, bank));
  auto q = provider.embed(query);

  std::vector<RetrievalEntry> all;
  for (const Skill& s : bank.skills) {
    if (static_cast<int>(s.embedding.size()) != provider.dimension())
      throw InvalidInput("hybrid_retrieve: skill " + s.id +
                         " embedding dimension mismatch");
    RetrievalEntry e;
    e.skill_id = s.id;
    e.bm25_norm = norm.at(s.id);
    e.cosine = cosine(q, s.embedding);
    e.combined_score = cfg.w_bm25 * e.bm25_norm + cfg.w_dense * e.cosine;
    if (e.combined_score >= cfg.score_threshold) all.push_back(std::move(e));
  }
  std::sort(all.begin(), all.end(), [](const RetrievalEntry& a, const RetrievalEntry& b) {
    if (a.combined_score != b.combined_score)
      return a.combined_score > b.combined_score;
    return a.skill_id < b.skill_id;
  });
  if (all.size() > static_cast<std::size_t>(cfg.k_top))
    all.resize(static_cast<std::size_t>(cfg.k_top));
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i].rank = static_cast<int>(i) + 1;
  res.entries = std::move(all);
  return res;
}

}  // namespace skillbank
