#include "cbe/fusion.hpp"

#include <charconv>
#include <cmath>

#include "cbe/error.hpp"
#include "cbe/kgstore.hpp"

namespace cbe::fusion {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Concat: return "concat";
    case Strategy::Sum: return "sum";
    case Strategy::Average: return "average";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "concat") return Strategy::Concat;
  if (s == "sum") return Strategy::Sum;
  if (s == "average") return Strategy::Average;
  throw Error(ErrorCode::InvalidConfig, "unknown fusion strategy '" + std::string(s) + "'");
}

std::vector<std::string> qids_to_entity_tokens(const std::vector<std::string>& qids) {
  std::vector<std::string> out;
  out.reserve(qids.size());
  for (const auto& q : qids) out.push_back(kg::qid_to_iri(q));
  return out;
}

namespace {

std::vector<embed::Sequence> as_sentences(const std::vector<std::vector<std::string>>& qids) {
  std::vector<embed::Sequence> out;
  out.reserve(qids.size());
  for (const auto& q : qids) out.push_back(qids_to_entity_tokens(q));
  return out;
}

}  // namespace

KgSentenceEncoder KgSentenceEncoder::fit(const std::vector<std::vector<std::string>>& train_qids,
                                         const embed::EmbeddingTable& kge,
                                         const embed::SifConfig& cfg) {
  if (train_qids.empty()) throw Error(ErrorCode::NoSentences, "no posts to embed");
  const auto sentences = as_sentences(train_qids);
  KgSentenceEncoder enc;
  enc.model_ = embed::SifModel::fit(sentences, kge, embed::word_frequencies(sentences), cfg);
  return enc;
}

embed::SifOutput KgSentenceEncoder::transform(const std::vector<std::vector<std::string>>& qids,
                                              const embed::EmbeddingTable& kge) const {
  return model_.transform(as_sentences(qids), kge);
}

embed::SifOutput kg_sentence_embedding(const std::vector<std::vector<std::string>>& qids,
                                       const embed::EmbeddingTable& kge,
                                       const embed::SifConfig& cfg) {
  return KgSentenceEncoder::fit(qids, kge, cfg).transform(qids, kge);
}

CbeVector fuse(const std::vector<double>& text_vec, const std::vector<double>& kg_vec,
               Strategy strategy, bool kg_missing) {
  CbeVector v;
  v.text_dim = text_vec.size();
  v.kg_dim = kg_vec.size();
  v.kg_missing = kg_missing;
  if (strategy == Strategy::Concat) {
    v.values = text_vec;
    v.values.insert(v.values.end(), kg_vec.begin(), kg_vec.end());
    return v;
  }
  if (text_vec.size() != kg_vec.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "sum/average fusion needs equal dims, got " + std::to_string(text_vec.size()) +
                    " and " + std::to_string(kg_vec.size()));
  }
  const double scale = strategy == Strategy::Average ? 0.5 : 1.0;
  v.values.resize(text_vec.size());
  for (std::size_t i = 0; i < text_vec.size(); ++i) {
    v.values[i] = scale * (text_vec[i] + kg_vec[i]);
  }
  return v;
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  Standardizer s;
  if (rows.empty()) return s;
  const std::size_t d = rows.front().size();
  s.mean_.assign(d, 0.0);
  s.scale_.assign(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.mean_[j] += r[j];
  }
  for (auto& m : s.mean_) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.scale_[j] += (r[j] - s.mean_[j]) * (r[j] - s.mean_[j]);
  }
  for (auto& v : s.scale_) {
    v = std::sqrt(v / static_cast<double>(rows.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  if (mean_.empty()) return row;
  if (row.size() != mean_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "standardizer fitted on a different dim");
  }
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean_[j]) / scale_[j];
  return out;
}

std::vector<std::vector<double>> Standardizer::apply(const std::vector<std::vector<double>>& rows) const {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(apply(r));
  return out;
}

std::string feature_matrix_tsv(const std::vector<std::string>& ids,
                               const std::vector<std::string>& label_names,
                               const std::vector<std::vector<int>>& labels,
                               const std::vector<std::vector<double>>& features) {
  std::string out = "id";
  for (const auto& n : label_names) out += "\t" + n;
  const std::size_t d = features.empty() ? 0 : features.front().size();
  for (std::size_t j = 0; j < d; ++j) out += "\tf" + std::to_string(j);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += ids[i];
    for (std::size_t t = 0; t < label_names.size(); ++t) {
      out += '\t';
      out += std::to_string(labels.at(t).at(i));
    }
    for (double x : features.at(i)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
      out += '\t';
      out.append(buf, end);
    }
    out += '\n';
  }
  return out;
}

}  // namespace cbe::fusion
