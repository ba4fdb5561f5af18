#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cbe::embed {

using Sequence = std::vector<std::string>;

std::vector<std::string> tokenize(std::string_view clean_text);

class Vocabulary {
 public:
  Vocabulary() = default;
  // Tokens must be unique; counts are aligned with tokens.
  Vocabulary(std::vector<std::string> tokens, std::vector<std::uint64_t> counts);

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t total_count() const { return total_; }
  // -1 when absent.
  std::ptrdiff_t index_of(std::string_view token) const;
  std::uint64_t count(std::string_view token) const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_ && counts_ == o.counts_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t total_ = 0;
};

// Tokens with frequency >= min_count, by descending count then lexicographic.
Vocabulary build_vocab(const std::vector<Sequence>& sequences, std::uint64_t min_count);

struct EmbeddingTable {
  Vocabulary vocab;
  std::size_t dim = 0;
  std::vector<double> input;   // |vocab| x dim, row-major
  std::vector<double> output;  // context side, same shape

  std::span<const double> vector(std::size_t row) const {
    return {input.data() + row * dim, dim};
  }
  std::span<double> vector(std::size_t row) { return {input.data() + row * dim, dim}; }
  // Empty span for out-of-vocabulary tokens.
  std::span<const double> find(std::string_view token) const;

  bool operator==(const EmbeddingTable&) const = default;
};

struct SgnsConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  double min_learning_rate = 1e-4;
  double subsample_threshold = 1e-3;
  std::uint64_t min_count = 1;
  std::uint64_t seed = 1;
  // 1 runs the deterministic single-threaded trainer; more workers update
  // shared vectors without synchronization.
  std::size_t threads = 1;

  void validate() const;
};

struct SgnsResult {
  double loss = 0.0;
  std::vector<double> grad_center;
  std::vector<double> grad_context;
  std::vector<std::vector<double>> grad_negatives;
};

// loss = -log s(u.v) - sum_n log s(-u_n.v) with v the center vector, u the
// context vector and s the logistic function; gradients are exact.
SgnsResult sgns_loss_and_grad(std::span<const double> center, std::span<const double> context,
                              const std::vector<std::span<const double>>& negatives);

double log_sigmoid(double x);
double sigmoid(double x);

EmbeddingTable train_skipgram(const std::vector<Sequence>& sequences, const SgnsConfig& cfg);

struct SifConfig {
  double a = 1e-3;
  bool remove_pc = true;

  void validate() const;
};

// Token -> unigram probability.
using WordFreq = std::unordered_map<std::string, double>;
WordFreq word_frequencies(const std::vector<Sequence>& sentences);

// a / (a + p); tokens absent from the frequency map take the p -> 0 limit.
double sif_weight(double a, double p);

struct SifOutput {
  std::vector<std::vector<double>> vectors;
  std::vector<bool> missing;  // no in-vocabulary token
};

// The fitted part of SIF: frequencies and the removed direction. Fitting on
// a training set and transforming held-out sentences reuses both.
class SifModel {
 public:
  static SifModel fit(const std::vector<Sequence>& sentences, const EmbeddingTable& table,
                      WordFreq word_freq, const SifConfig& cfg);

  SifOutput transform(const std::vector<Sequence>& sentences, const EmbeddingTable& table) const;

  const std::vector<double>& principal_component() const { return pc_; }
  const SifConfig& config() const { return cfg_; }

 private:
  std::vector<double> weighted_average(const Sequence& s, const EmbeddingTable& table,
                                       bool& missing) const;

  SifConfig cfg_;
  WordFreq freq_;
  std::vector<double> pc_;  // unit norm, empty when nothing is removed
};

SifOutput sif_embed(const std::vector<Sequence>& sentences, const EmbeddingTable& table,
                    const WordFreq& word_freq, const SifConfig& cfg);

// Leading right singular vector of the row-major n x d matrix, by power
// iteration (tolerance 1e-9, at most 1000 iterations). Empty if rows are all zero.
std::vector<double> first_singular_vector(const std::vector<std::vector<double>>& rows);

std::string serialize_embeddings(const EmbeddingTable& table);
EmbeddingTable parse_embeddings(std::string_view content);
void export_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable import_embeddings(const std::filesystem::path& path);

}  // namespace cbe::embed
