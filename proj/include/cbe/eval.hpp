#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cbe/corpus.hpp"
#include "cbe/learn.hpp"

namespace cbe::eval {

struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(const std::vector<int>& gold, const std::vector<int>& predicted);

// Undefined ratios are absent rather than zero.
struct MetricsReport {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  double accuracy = 0.0;
};

MetricsReport metrics(const ConfusionMatrix& cm);

struct Split {
  std::vector<std::size_t> train;  // row indices, ascending
  std::vector<std::size_t> test;
};

// Per class, round(n_c * ratio) rows go to train; if the rounded class sizes
// miss round(n * ratio), the larger class absorbs the difference.
Split stratified_split(const std::vector<int>& labels, double train_ratio, std::uint64_t seed);

struct IdSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};
IdSplit stratified_split(const corpus::LabeledCorpus& corpus, corpus::Task task,
                         double train_ratio, std::uint64_t seed);

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;  // aligned with the label vector

  std::vector<std::size_t> fold(std::size_t f) const;
  std::vector<std::size_t> complement(std::size_t f) const;
};

// Positives are dealt round-robin over the folds, then negatives continue
// from where the positives stopped; sizes and positive counts each differ by
// at most one across folds.
FoldAssignment stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);

// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double>& xs);

inline constexpr double kPValueFloor = 1e-12;

struct SpearmanResult {
  double rho = 0.0;
  double p = 1.0;
};

// Pearson correlation of average ranks; two-sided p from the Student-t
// approximation with n-2 degrees of freedom. |rho| == 1 reports kPValueFloor.
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

enum class SelectionMetric { F1, Accuracy };
SelectionMetric parse_selection_metric(std::string_view s);

// Undefined F1 scores as 0 when ranking configurations.
double score(const MetricsReport& m, SelectionMetric metric);

struct GridAxis {
  std::string name;
  std::vector<double> values;
};
using Grid = std::vector<GridAxis>;

// Cartesian product with the first axis outermost.
std::vector<learn::Hyperparams> enumerate_grid(const Grid& grid);

struct FoldData {
  learn::Dataset train;
  learn::Dataset test;
};
using FoldProvider = std::function<FoldData(std::size_t fold)>;

// Standardizes features on the training rows of each fold.
FoldProvider slice_provider(const learn::Dataset& ds, const FoldAssignment& folds);

struct FoldScores {
  std::vector<MetricsReport> per_fold;
  std::vector<learn::Prediction> predictions;

  double mean(SelectionMetric metric) const;
};

FoldScores cross_validate(learn::Family family, const learn::Hyperparams& params,
                          const FoldProvider& provider, std::size_t k, std::uint64_t seed,
                          std::size_t threads = 1);

struct GridSearchResult {
  std::vector<learn::Hyperparams> configs;
  std::vector<std::vector<double>> fold_scores;  // [config][fold]
  std::vector<double> mean_scores;
  std::size_t best_index = 0;

  const learn::Hyperparams& best() const { return configs.at(best_index); }
};

// Every configuration scored by its mean held-out metric over the folds;
// ties go to the earlier configuration in enumeration order.
GridSearchResult grid_search(learn::Family family, const Grid& grid, const FoldProvider& provider,
                             std::size_t k, SelectionMetric metric, std::uint64_t seed,
                             std::size_t threads = 1);
GridSearchResult grid_search(learn::Family family, const Grid& grid, const learn::Dataset& ds,
                             const FoldAssignment& folds, SelectionMetric metric,
                             std::uint64_t seed, std::size_t threads = 1);

enum class TermCounting { Tokens, Documents };

struct BiasReport {
  corpus::Task task = corpus::Task::ED1;
  std::string input_kind;
  std::string model;
  std::size_t terms = 0;
  std::optional<double> rho_input;
  std::optional<double> p_input;
  std::optional<double> rho_output;
  std::optional<double> p_output;
  std::string note;  // error code when a correlation is undefined
};

// Per-class term-count vectors over the top_n most frequent unigrams of the
// evaluated posts, partitioned once by gold labels and once by predictions.
BiasReport bias_check(const corpus::LabeledCorpus& corpus, corpus::Task task,
                      const std::vector<std::size_t>& evaluated,
                      const std::vector<int>& predicted, std::size_t top_n = 165,
                      TermCounting counting = TermCounting::Tokens);

struct ResultRow {
  std::string model;
  std::string input;
  std::string task;
  std::optional<double> f1;
  double accuracy = 0.0;
};

std::string results_tsv(const std::vector<ResultRow>& rows);
std::string bias_tsv(const std::vector<BiasReport>& rows);
std::string format_number(double x);

}  // namespace cbe::eval
