#include "cbe/walks.hpp"

#include <atomic>
#include <set>
#include <thread>

#include "cbe/error.hpp"
#include "cbe/rng.hpp"
#include "cbe/text.hpp"

namespace cbe::walks {

void WalkConfig::validate() const {
  if (max_depth < 1) throw Error(ErrorCode::InvalidConfig, "max_depth must be at least 1");
  if (max_walks < 1) throw Error(ErrorCode::InvalidConfig, "max_walks must be at least 1");
  if (threads < 1) throw Error(ErrorCode::InvalidConfig, "threads must be at least 1");
}

std::vector<Walk> walks_for_seed(const kg::KnowledgeGraph& g, const std::string& seed,
                                 const WalkConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, seed));
  std::vector<Walk> out;
  std::set<std::vector<std::string>> seen;
  for (std::size_t n = 0; n < cfg.max_walks; ++n) {
    Walk w;
    w.tokens.push_back(seed);
    const std::string* node = &seed;
    for (std::size_t hop = 0; hop < cfg.max_depth; ++hop) {
      const auto& edges = g.neighbors(*node);
      if (edges.empty()) break;
      const auto& e = edges[rng.below(edges.size())];
      if (cfg.include_predicates) w.tokens.push_back(e.predicate);
      w.tokens.push_back(e.object);
      node = &e.object;
    }
    if (seen.insert(w.tokens).second) out.push_back(std::move(w));
  }
  return out;
}

WalkResult generate_walks(const kg::KnowledgeGraph& g, const std::vector<std::string>& seeds,
                          const WalkConfig& cfg) {
  cfg.validate();
  if (seeds.empty()) throw Error(ErrorCode::InvalidConfig, "generate_walks needs at least one seed");
  const std::set<std::string> distinct(seeds.begin(), seeds.end());
  const std::vector<std::string> unique(distinct.begin(), distinct.end());
  std::vector<std::vector<Walk>> per_seed(unique.size());
  std::vector<char> known(unique.size(), 0);
  auto work = [&](std::size_t i) {
    if (!g.contains_node(unique[i])) return;
    known[i] = 1;
    per_seed[i] = walks_for_seed(g, unique[i], cfg);
  };
  if (cfg.threads <= 1) {
    for (std::size_t i = 0; i < unique.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < cfg.threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < unique.size(); i = next++) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  WalkResult result;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    if (!known[i]) result.unknown_seeds.push_back(unique[i]);
    result.walks.emplace(unique[i], std::move(per_seed[i]));
  }
  return result;
}

std::vector<std::vector<std::string>> walks_to_sequences(const std::vector<Walk>& walks) {
  std::vector<std::vector<std::string>> out;
  out.reserve(walks.size());
  for (const auto& w : walks) out.push_back(w.tokens);
  return out;
}

std::vector<std::vector<std::string>> walks_to_sequences(const WalkResult& result) {
  std::vector<std::vector<std::string>> out;
  for (const auto& [_, walks] : result.walks) {
    for (const auto& w : walks) out.push_back(w.tokens);
  }
  return out;
}

Walk strip_predicates(const Walk& w) {
  Walk out;
  for (std::size_t i = 0; i < w.tokens.size(); i += 2) out.tokens.push_back(w.tokens[i]);
  return out;
}

std::string serialize_walks(const WalkResult& result) {
  std::string out;
  for (const auto& seq : walks_to_sequences(result)) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) out.push_back(' ');
      out += seq[i];
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<std::vector<std::string>> parse_walk_corpus(std::string_view content) {
  std::vector<std::vector<std::string>> out;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    if (nl == std::string_view::npos) nl = content.size();
    std::vector<std::string> seq;
    for (auto tok : text::split_whitespace(content.substr(start, nl - start))) seq.emplace_back(tok);
    if (!seq.empty()) out.push_back(std::move(seq));
    start = nl + 1;
  }
  return out;
}

}  // namespace cbe::walks
