#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace cbe::synthetic {

// A generated corpus and knowledge graph with a planted signal. Entities form
// two communities in the graph; ed1 posts labeled 1 mostly mention entities
// of the first community and carry cue words of their own, so the graph side
// and the text side each hold an independent, partial view of the label.
// ed2 flips a fraction of ed1, ed3 follows the text cues only and ed4 marks
// posts dominated by one sub-community.
struct PlantedConfig {
  std::size_t posts = 400;
  std::size_t entities_per_community = 60;
  std::size_t mentions_min = 1;
  std::size_t mentions_max = 3;
  double entity_purity = 0.8;   // P(mention drawn from the label's community)
  double cue_purity = 0.8;      // P(cue word drawn from the label's cue set)
  std::size_t cues_per_post = 3;
  std::size_t filler_per_post = 8;
  std::size_t filler_vocabulary = 200;  // at most 200
  double filler_zipf = 1.0;      // rank-frequency exponent of filler words; 0 is uniform
  double no_entity_rate = 0.05;
  double emoji_rate = 0.15;
  std::uint64_t seed = 7;
};

struct PlantedFiles {
  std::string corpus_tsv;
  std::string gazetteer_tsv;
  std::string ntriples;
};

PlantedFiles generate_planted(const PlantedConfig& cfg);

// Writes corpus.tsv, gazetteer.tsv and graph.nt into dir.
void write_planted(const PlantedConfig& cfg, const std::filesystem::path& dir);

}  // namespace cbe::synthetic
