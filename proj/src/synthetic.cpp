#include "cbe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "cbe/error.hpp"
#include "cbe/kgstore.hpp"
#include "cbe/rng.hpp"

namespace cbe::synthetic {

namespace {

constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ren", "tu", "vos", "zai", "pel",
                                      "qua", "dor", "fin", "gru", "hal", "jex", "nor", "sil"};

std::string pseudo_word(Rng& rng, std::size_t syllables) {
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) w += kSyllables[rng.below(std::size(kSyllables))];
  return w;
}

// Distinct pseudo-words, none colliding with `taken`.
std::vector<std::string> word_list(Rng& rng, std::size_t n, std::size_t syllables,
                                   std::set<std::string>& taken) {
  std::vector<std::string> out;
  while (out.size() < n) {
    auto w = pseudo_word(rng, syllables);
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::string entity_iri(std::size_t i) { return kg::qid_to_iri("Q" + std::to_string(900000 + i)); }

std::string prop(const char* p) { return std::string(kg::kWikidataDirectPrefix) + p; }

void add_edge(std::string& nt, const std::string& s, const std::string& p, const std::string& o) {
  nt += "<" + s + "> <" + p + "> <" + o + "> .\n";
}

}  // namespace

PlantedFiles generate_planted(const PlantedConfig& cfg) {
  if (cfg.posts < 40 || cfg.entities_per_community < 4 || cfg.mentions_max < cfg.mentions_min ||
      cfg.filler_vocabulary == 0 || cfg.filler_zipf < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "planted benchmark config too small");
  }
  // Two-syllable words: 16*16, less the 24 cue words.
  if (cfg.filler_vocabulary > 200) {
    throw Error(ErrorCode::InvalidConfig, "filler_vocabulary must be at most 200");
  }
  Rng rng(cfg.seed);
  std::set<std::string> taken;
  const std::size_t per = cfg.entities_per_community;
  const auto surfaces = word_list(rng, 2 * per, 3, taken);
  const auto cues1 = word_list(rng, 12, 2, taken);
  const auto cues0 = word_list(rng, 12, 2, taken);
  const auto filler = word_list(rng, cfg.filler_vocabulary, 2, taken);
  std::vector<double> filler_cdf(filler.size());
  double mass = 0.0;
  for (std::size_t r = 0; r < filler.size(); ++r) {
    mass += std::pow(static_cast<double>(r + 1), -cfg.filler_zipf);
    filler_cdf[r] = mass;
  }
  for (auto& c : filler_cdf) c /= mass;

  // Graph: community c owns entities [c*per, (c+1)*per) and a handful of
  // hub concepts. Entities point at hubs and at peers of their community;
  // hubs point back at member entities. A small share of edges cross over.
  constexpr std::size_t kHubs = 6;
  std::string nt;
  auto hub_iri = [&](std::size_t c, std::size_t h) {
    return kg::qid_to_iri("Q" + std::to_string(800000 + c * 100 + h));
  };
  const std::string p_instance = prop("P31");
  const std::string p_related = prop("P1659");
  const std::string p_member = prop("P527");
  const std::string p_sub = prop("P279");
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t h = 0; h < kHubs; ++h) {
      add_edge(nt, hub_iri(c, h), p_sub, hub_iri(c, (h + 1) % kHubs));
      for (int m = 0; m < 4; ++m) {
        add_edge(nt, hub_iri(c, h), p_member, entity_iri(c * per + rng.below(per)));
      }
    }
    for (std::size_t e = 0; e < per; ++e) {
      const std::size_t id = c * per + e;
      add_edge(nt, entity_iri(id), p_instance, hub_iri(c, rng.below(kHubs)));
      for (int r = 0; r < 2; ++r) {
        const bool cross = rng.uniform() < 0.08;
        const std::size_t other_c = cross ? 1 - c : c;
        add_edge(nt, entity_iri(id), p_related, entity_iri(other_c * per + rng.below(per)));
      }
      nt += "<" + entity_iri(id) + "> <http://www.w3.org/2000/01/rdf-schema#label> \"" +
            surfaces[id] + "\"@en .\n";
    }
  }

  std::string gaz = "surface\tqid\ttype\n";
  for (std::size_t id = 0; id < 2 * per; ++id) {
    gaz += surfaces[id] + "\tQ" + std::to_string(900000 + id) + "\t" +
           (id < per ? "Condition" : "Concept") + "\n";
  }

  constexpr const char* kEmojis[] = {"😢", "💪", "🙏", "😍", "🔥"};
  std::string tsv = "id\ttext\ted1\ted2\ted3\ted4\n";
  for (std::size_t p = 0; p < cfg.posts; ++p) {
    const int y = p % 2 == 0 ? 1 : 0;  // balanced planted label
    std::vector<std::string> words;
    for (std::size_t f = 0; f < cfg.filler_per_post; ++f) {
      const auto it = std::upper_bound(filler_cdf.begin(), filler_cdf.end(), rng.uniform());
      words.push_back(filler[std::min<std::size_t>(it - filler_cdf.begin(), filler.size() - 1)]);
    }
    std::size_t cue_hits = 0;
    for (std::size_t c = 0; c < cfg.cues_per_post; ++c) {
      const bool right = rng.uniform() < cfg.cue_purity;
      const int side = right ? y : 1 - y;
      if (side == 1) ++cue_hits;
      const auto& pool = side == 1 ? cues1 : cues0;
      words.push_back(pool[rng.below(pool.size())]);
    }
    std::size_t sub_a = 0;
    std::size_t mentions = 0;
    if (rng.uniform() >= cfg.no_entity_rate) {
      mentions = cfg.mentions_min + rng.below(cfg.mentions_max - cfg.mentions_min + 1);
      for (std::size_t m = 0; m < mentions; ++m) {
        const bool right = rng.uniform() < cfg.entity_purity;
        const std::size_t community = (right ? y : 1 - y) == 1 ? 0 : 1;
        const std::size_t e = rng.below(per);
        if (e < per / 2) ++sub_a;
        words.push_back(surfaces[community * per + e]);
      }
    }
    rng.shuffle(words);
    std::string text;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) text += ' ';
      // Mixed case and decorations exercise preprocessing.
      if (w == 0) {
        std::string cap = words[w];
        cap[0] = static_cast<char>(cap[0] - 32);
        text += cap;
      } else {
        text += words[w];
      }
    }
    if (rng.uniform() < cfg.emoji_rate) text += std::string(" ") + kEmojis[rng.below(std::size(kEmojis))];
    if (rng.uniform() < 0.1) text += " https://t.co/x" + std::to_string(p);
    if (rng.uniform() < 0.1) text = "@user" + std::to_string(p % 17) + " " + text;

    const int ed2 = rng.uniform() < 0.15 ? 1 - y : y;
    const int ed3 = cue_hits * 2 > cfg.cues_per_post ? 1 : 0;
    const int ed4 = mentions > 0 && sub_a * 2 > mentions ? 1 : 0;
    tsv += "p" + std::to_string(p) + "\t" + text + "\t" + std::to_string(y) + "\t" +
           std::to_string(ed2) + "\t" + std::to_string(ed3) + "\t" + std::to_string(ed4) + "\n";
  }
  return {std::move(tsv), std::move(gaz), std::move(nt)};
}

void write_planted(const PlantedConfig& cfg, const std::filesystem::path& dir) {
  const auto files = generate_planted(cfg);
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / name).string());
    out << content;
  };
  write("corpus.tsv", files.corpus_tsv);
  write("gazetteer.tsv", files.gazetteer_tsv);
  write("graph.nt", files.ntriples);
}

}  // namespace cbe::synthetic
