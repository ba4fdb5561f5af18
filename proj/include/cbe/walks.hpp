#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cbe/kgstore.hpp"

namespace cbe::walks {

struct WalkConfig {
  std::size_t max_depth = 4;  // hops
  std::size_t max_walks = 50;
  bool include_predicates = true;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const;
};

// Entity tokens, interleaved with predicate tokens when predicates are included.
struct Walk {
  std::vector<std::string> tokens;

  bool operator==(const Walk&) const = default;
  auto operator<=>(const Walk&) const = default;
};

struct WalkResult {
  std::map<std::string, std::vector<Walk>> walks;  // by seed
  std::vector<std::string> unknown_seeds;           // absent from the graph
};

// Uniform random walks: up to max_walks samples per seed, stopping after
// max_depth hops or at a node without IRI out-edges, deduplicated per seed in
// first-seen order. Each seed draws from its own stream derived from
// (cfg.seed, seed IRI), so the result does not depend on seed order or
// thread scheduling.
WalkResult generate_walks(const kg::KnowledgeGraph& g, const std::vector<std::string>& seeds,
                          const WalkConfig& cfg);

std::vector<Walk> walks_for_seed(const kg::KnowledgeGraph& g, const std::string& seed,
                                 const WalkConfig& cfg);

// Walks in seed order, as token sequences.
std::vector<std::vector<std::string>> walks_to_sequences(const std::vector<Walk>& walks);
std::vector<std::vector<std::string>> walks_to_sequences(const WalkResult& result);

// Drops the predicate tokens of a walk generated with predicates included.
Walk strip_predicates(const Walk& w);

// One walk per line, tokens separated by single spaces.
std::string serialize_walks(const WalkResult& result);
std::vector<std::vector<std::string>> parse_walk_corpus(std::string_view content);

}  // namespace cbe::walks
