#pragma once

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "polscale/jsonl.hpp"
#include "polscale/retry.hpp"

namespace polscale::evaluate {

// An ordering is a labeled permutation of party ids, most-against first.
struct Ordering {
  std::string label;
  std::string topic;
  std::vector<std::string> parties;

  bool operator==(const Ordering&) const = default;
};

inline void validate(const Ordering& o) {
  std::set<std::string> seen;
  for (const auto& p : o.parties) {
    if (p.empty()) throw DataError("ordering '" + o.label + "': empty party id");
    if (!seen.insert(p).second)
      throw DataError("ordering '" + o.label + "': duplicate party " + p);
  }
}

struct Alignment {
  std::vector<std::string> a, b;          // restricted orderings, same set
  std::vector<std::string> dropped_a, dropped_b;
};

// Restricts both orderings to their common parties, keeping each side's
// relative order. Fewer than two common parties leaves nothing to rank.
inline Alignment align_orderings(const Ordering& a, const Ordering& b) {
  validate(a);
  validate(b);
  std::set<std::string> in_a(a.parties.begin(), a.parties.end());
  std::set<std::string> in_b(b.parties.begin(), b.parties.end());
  Alignment out;
  for (const auto& p : a.parties)
    (in_b.count(p) ? out.a : out.dropped_a).push_back(p);
  for (const auto& p : b.parties)
    (in_a.count(p) ? out.b : out.dropped_b).push_back(p);
  if (out.a.size() < 2)
    throw DataError("orderings '" + a.label + "' and '" + b.label +
                    "' share fewer than two parties");
  return out;
}

namespace detail {

// b's elements as ranks in a's order; requires identical sets.
inline std::vector<int> positions_in(const std::vector<std::string>& a,
                                     const std::vector<std::string>& b) {
  if (a.size() != b.size())
    throw DataError("rank metrics need equal-length orderings");
  std::map<std::string, int> pos;
  for (size_t i = 0; i < a.size(); ++i) pos[a[i]] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(b.size());
  for (const auto& p : b) {
    auto it = pos.find(p);
    if (it == pos.end())
      throw DataError("rank metrics need identical party sets; '" + p +
                      "' missing");
    out.push_back(it->second);
  }
  if (pos.size() != a.size())
    throw DataError("rank metrics need duplicate-free orderings");
  return out;
}

inline long merge_count_inversions(std::vector<int>& v, std::vector<int>& tmp,
                                   size_t lo, size_t hi) {
  if (hi - lo <= 1) return 0;
  size_t mid = lo + (hi - lo) / 2;
  long inv = merge_count_inversions(v, tmp, lo, mid) +
             merge_count_inversions(v, tmp, mid, hi);
  size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[i] <= v[j]) {
      tmp[k++] = v[i++];
    } else {
      inv += static_cast<long>(mid - i);
      tmp[k++] = v[j++];
    }
  }
  while (i < mid) tmp[k++] = v[i++];
  while (j < hi) tmp[k++] = v[j++];
  std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
  return inv;
}

}  // namespace detail

// rho = 1 - 6*sum(d^2) / (n(n^2-1)), d = rank difference per party.
// Orderings are permutations, so there is no tie handling here by design.
inline double spearman(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  auto ranks = detail::positions_in(a, b);
  size_t n = ranks.size();
  if (n < 2) throw DataError("spearman needs at least two parties");
  double sum_d2 = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(ranks[i]) - static_cast<double>(i);
    sum_d2 += d * d;
  }
  double nn = static_cast<double>(n);
  return 1.0 - 6.0 * sum_d2 / (nn * (nn * nn - 1.0));
}

// tau = (P - Q) / (n(n-1)/2) via inversion counting; every discordant pair is
// one inversion of the cross-ranking.
inline double kendall(const std::vector<std::string>& a,
                      const std::vector<std::string>& b) {
  auto ranks = detail::positions_in(a, b);
  size_t n = ranks.size();
  if (n < 2) throw DataError("kendall needs at least two parties");
  std::vector<int> v = ranks, tmp(n);
  long q = detail::merge_count_inversions(v, tmp, 0, n);
  double pairs = static_cast<double>(n) * (n - 1) / 2.0;
  double p = pairs - static_cast<double>(q);
  return (p - static_cast<double>(q)) / pairs;
}

// 2*LCS / (len(a) + len(b)). Iterative DP table.
inline double lcs_ratio(const std::vector<std::string>& a,
                        const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) throw DataError("lcs_ratio on empty ordering");
  size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j)
      dp[i][j] = a[i - 1] == b[j - 1]
                     ? dp[i - 1][j - 1] + 1
                     : std::max(dp[i - 1][j], dp[i][j - 1]);
  return 2.0 * dp[n][m] / static_cast<double>(n + m);
}

struct OrderingComparison {
  std::string topic;
  Alignment alignment;
  double spearman_rho = 0.0;
  double kendall_tau = 0.0;
  double lcs = 0.0;
};

// Alignment first, then all three metrics on the aligned orderings.
inline OrderingComparison compare_orderings(const Ordering& a,
                                            const Ordering& b) {
  OrderingComparison out;
  out.topic = a.topic.empty() ? b.topic : a.topic;
  out.alignment = align_orderings(a, b);
  out.spearman_rho = spearman(out.alignment.a, out.alignment.b);
  out.kendall_tau = kendall(out.alignment.a, out.alignment.b);
  out.lcs = lcs_ratio(out.alignment.a, out.alignment.b);
  return out;
}

// Ordering of parties by mean member score, most negative first. Equal means
// fall back to party id so the result is still deterministic; the flag tells
// the caller the data did not decide those neighbors.
struct ScoreOrdering {
  Ordering ordering;
  bool had_ties = false;
};

inline ScoreOrdering ordering_from_scores(
    const std::string& label, const std::string& topic,
    const std::vector<std::pair<std::string, double>>& party_and_score) {
  if (party_and_score.empty())
    throw DataError("ordering_from_scores: no scores");
  std::map<std::string, std::pair<double, long>> acc;
  for (const auto& [party, score] : party_and_score) {
    if (party.empty()) throw DataError("score row without party");
    acc[party].first += score;
    acc[party].second += 1;
  }
  std::vector<std::pair<std::string, double>> means;
  means.reserve(acc.size());
  for (const auto& [party, sn] : acc)
    means.push_back({party, sn.first / static_cast<double>(sn.second)});
  std::sort(means.begin(), means.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second < y.second;
    return x.first < y.first;
  });
  ScoreOrdering out;
  out.ordering.label = label;
  out.ordering.topic = topic;
  for (size_t i = 0; i < means.size(); ++i) {
    out.ordering.parties.push_back(means[i].first);
    if (i > 0 && means[i].second == means[i - 1].second) out.had_ties = true;
  }
  return out;
}

// Expert / reference ordering files: a JSON array of
// {"label": ..., "topic": ..., "parties": [...]}.
inline std::vector<Ordering> load_orderings(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("orderings file " + path.string() + ": " + e.what());
  }
  std::vector<Ordering> out;
  for (const auto& item : j) {
    Ordering o;
    o.label = item.value("label", "expert");
    o.topic = item.value("topic", "");
    o.parties = item.at("parties").get<std::vector<std::string>>();
    validate(o);
    out.push_back(std::move(o));
  }
  if (out.empty()) throw DataError(path.string() + ": no orderings");
  return out;
}

inline void save_orderings(const std::filesystem::path& path,
                           const std::vector<Ordering>& orderings) {
  json j = json::array();
  for (const auto& o : orderings)
    j.push_back(json{{"label", o.label}, {"topic", o.topic},
                     {"parties", o.parties}});
  write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Phrase/cluster association

struct PmiEntry {
  std::string phrase;
  double pmi = 0.0;
  long count = 0;  // co-occurrence count with the cluster

  bool operator==(const PmiEntry&) const = default;
};

struct PmiTable {
  long total = 0;       // N: number of (phrase, cluster) occurrence events
  long min_count = 0;
  std::map<std::string, std::vector<PmiEntry>> by_cluster;
};

// PMI(x, y) = log2 P(x,y) - log2 P(x) - log2 P(y) with plain occurrence
// probabilities. Computed as log2 N + log2 c(x,y) - log2 c(x) - log2 c(y),
// which is exact whenever the counts are powers of two. A phrase must reach
// min_count overall to appear at all; zero co-occurrence rows do not exist
// by construction.
inline PmiTable pmi_table(
    const std::vector<std::pair<std::string, std::string>>& occurrences,
    long min_count = 5, long top_k = 25) {
  if (min_count < 1) throw ConfigError("pmi min_count must be >= 1");
  if (top_k < 1) throw ConfigError("pmi top_k must be >= 1");
  PmiTable out;
  out.min_count = min_count;
  out.total = static_cast<long>(occurrences.size());
  if (out.total == 0) throw DataError("pmi_table: no occurrences");

  std::map<std::string, long> phrase_count, cluster_count;
  std::map<std::string, std::map<std::string, long>> joint;  // cluster -> phrase
  for (const auto& [phrase, cluster] : occurrences) {
    if (phrase.empty() || cluster.empty())
      throw DataError("pmi_table: empty phrase or cluster");
    phrase_count[phrase]++;
    cluster_count[cluster]++;
    joint[cluster][phrase]++;
  }

  double log_n = std::log2(static_cast<double>(out.total));
  for (const auto& [cluster, phrases] : joint) {
    std::vector<PmiEntry> entries;
    double log_cy = std::log2(static_cast<double>(cluster_count[cluster]));
    for (const auto& [phrase, cxy] : phrases) {
      if (phrase_count[phrase] < min_count) continue;
      double pmi = log_n + std::log2(static_cast<double>(cxy)) -
                   std::log2(static_cast<double>(phrase_count[phrase])) - log_cy;
      entries.push_back({phrase, pmi, cxy});
    }
    std::sort(entries.begin(), entries.end(),
              [](const PmiEntry& x, const PmiEntry& y) {
                if (x.pmi != y.pmi) return x.pmi > y.pmi;
                if (x.count != y.count) return x.count > y.count;
                return x.phrase < y.phrase;
              });
    if (static_cast<long>(entries.size()) > top_k) entries.resize(top_k);
    out.by_cluster[cluster] = std::move(entries);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phrase extraction

// Default tokenizer: delimiter-separated tokens plus contiguous bigrams
// joined with one space. No linguistic pretensions; plug a real tagger over
// HTTP when the corpus needs one.
inline std::vector<std::string> extract_phrases(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  std::vector<std::string> out = tokens;
  for (size_t i = 0; i + 1 < tokens.size(); ++i)
    out.push_back(tokens[i] + " " + tokens[i + 1]);
  return out;
}

// External tagger contract: POST a JSON array of segment texts, receive a
// JSON array (same length) of phrase arrays, passed through unchanged.
class PhraseTagger {
 public:
  explicit PhraseTagger(std::string url) : url_(std::move(url)) {}

  std::vector<std::vector<std::string>> tag(
      const std::vector<std::string>& texts) const {
    return with_retries(retry_, [&] { return post(texts); });
  }

  RetryPolicy retry_{};

 private:
  std::vector<std::vector<std::string>> post(
      const std::vector<std::string>& texts) const {
    auto scheme_end = url_.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("bad URL: " + url_);
    auto path_start = url_.find('/', scheme_end + 3);
    std::string base = path_start == std::string::npos
                           ? url_
                           : url_.substr(0, path_start);
    std::string path =
        path_start == std::string::npos ? "/" : url_.substr(path_start);
    httplib::Client cli(base);
    cli.set_read_timeout(120, 0);
    json body = json::array();
    for (const auto& t : texts) body.push_back(t);
    auto res = cli.Post(path, body.dump(), "application/json");
    if (!res) throw ProviderError("phrase tagger unreachable: " + url_);
    if (res->status != 200)
      throw ProviderError("phrase tagger HTTP " + std::to_string(res->status));
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_array() || reply.size() != texts.size())
      throw ProviderError("phrase tagger protocol: expected array of " +
                          std::to_string(texts.size()) + " phrase lists");
    std::vector<std::vector<std::string>> out;
    out.reserve(reply.size());
    for (const auto& item : reply)
      out.push_back(item.get<std::vector<std::string>>());
    return out;
  }

  std::string url_;
};

}  // namespace polscale::evaluate
