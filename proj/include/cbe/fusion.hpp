#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cbe/embed.hpp"

namespace cbe::fusion {

enum class Strategy { Concat, Sum, Average };
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);

struct CbeVector {
  std::vector<double> values;
  std::size_t text_dim = 0;
  std::size_t kg_dim = 0;
  bool kg_missing = false;

  bool operator==(const CbeVector&) const = default;
};

// Entity tokens used in the KG embedding table for a post's QIDs.
std::vector<std::string> qids_to_entity_tokens(const std::vector<std::string>& qids);

// SIF over each post's entity list. The fitted model carries the entity
// frequencies and removed direction so held-out posts reuse them.
class KgSentenceEncoder {
 public:
  static KgSentenceEncoder fit(const std::vector<std::vector<std::string>>& train_qids,
                               const embed::EmbeddingTable& kge, const embed::SifConfig& cfg);
  embed::SifOutput transform(const std::vector<std::vector<std::string>>& qids,
                             const embed::EmbeddingTable& kge) const;

 private:
  embed::SifModel model_;
};

// Fit and transform on the same posts, with entity frequencies computed over
// all given mention lists.
embed::SifOutput kg_sentence_embedding(const std::vector<std::vector<std::string>>& qids,
                                       const embed::EmbeddingTable& kge,
                                       const embed::SifConfig& cfg);

CbeVector fuse(const std::vector<double>& text_vec, const std::vector<double>& kg_vec,
               Strategy strategy, bool kg_missing = false);

// Per-dimension z-scoring fit on training rows; constant columns keep scale 1.
class Standardizer {
 public:
  static Standardizer fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(const std::vector<double>& row) const;
  std::vector<std::vector<double>> apply(const std::vector<std::vector<double>>& rows) const;

 private:
  std::vector<double> mean_;
  std::vector<double> scale_;
};

// TSV: id, one column per task label, then f0..f{d-1}.
std::string feature_matrix_tsv(const std::vector<std::string>& ids,
                               const std::vector<std::string>& label_names,
                               const std::vector<std::vector<int>>& labels,
                               const std::vector<std::vector<double>>& features);

}  // namespace cbe::fusion
