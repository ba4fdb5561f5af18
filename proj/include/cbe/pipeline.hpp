#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cbe/corpus.hpp"
#include "cbe/embed.hpp"
#include "cbe/eval.hpp"
#include "cbe/fusion.hpp"
#include "cbe/learn.hpp"
#include "cbe/walks.hpp"

namespace cbe::pipeline {

enum class LinkerMode { Gazetteer, Remote, Union };
std::string_view linker_mode_name(LinkerMode m);
LinkerMode parse_linker_mode(std::string_view s);

enum class InputKind { Text, Kge, Cbe };
std::string_view input_kind_name(InputKind k);
InputKind parse_input_kind(std::string_view s);
inline constexpr InputKind kAllInputs[] = {InputKind::Text, InputKind::Kge, InputKind::Cbe};

inline constexpr std::string_view kEnvPrefix = "CBE_";

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path kg;
  std::filesystem::path gazetteer;
  std::filesystem::path curation;         // empty: built-in rules
  std::filesystem::path additions;        // optional
  std::filesystem::path text_embeddings;  // optional sentence vectors keyed by post id
  std::filesystem::path output = "out";

  LinkerMode linker_mode = LinkerMode::Gazetteer;
  bool remote_enabled = false;
  std::string remote_endpoint;
  std::size_t remote_timeout_ms = 10000;
  std::size_t remote_concurrency = 4;

  corpus::PreprocessConfig preprocess;
  walks::WalkConfig walk;
  embed::SgnsConfig text_sgns;
  embed::SgnsConfig kg_sgns;
  embed::SifConfig sif;
  fusion::Strategy strategy = fusion::Strategy::Concat;

  std::vector<learn::Family> models = {learn::kAllFamilies[0], learn::kAllFamilies[1],
                                       learn::kAllFamilies[2]};
  std::map<learn::Family, eval::Grid> grids;
  std::vector<InputKind> inputs = {InputKind::Text, InputKind::Kge, InputKind::Cbe};
  std::vector<corpus::Task> tasks;  // empty: every task in the corpus
  double train_ratio = 0.7;
  std::size_t folds = 10;
  std::uint64_t eval_seed = 1;
  eval::SelectionMetric selection = eval::SelectionMetric::F1;
  std::size_t bias_top_n = 165;
  eval::TermCounting term_counting = eval::TermCounting::Tokens;
  std::size_t threads = 1;

  PipelineConfig();

  // Applies one `key = value` setting; throws InvalidConfig for unknown keys
  // or malformed values. Relative paths resolve against base_dir.
  void set(std::string_view key, std::string_view value,
           const std::filesystem::path& base_dir = {});
  // Forces every stage onto a single thread.
  void make_deterministic();
  // Canonical `key=value` lines, sorted by key; the basis of the config hash.
  std::string canonical() const;
  std::map<std::string, std::string> to_map() const;
};

// Documented keys (grid.<model>.<param> keys are open-ended).
const std::vector<std::string>& config_keys();

// File, then CBE_* environment variables, then explicit overrides.
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides,
                           bool use_environment = true);
std::string env_var_for(std::string_view key);

std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::filesystem::path& path);
std::string config_hash(const PipelineConfig& cfg);

inline constexpr std::string_view kManifestSuffix = ".manifest.json";
std::filesystem::path manifest_path(const std::filesystem::path& artifact);

// Everything the feature builder needs, loaded from the stage artifacts.
struct Workspace {
  corpus::LabeledCorpus corpus;                      // preprocessed
  std::vector<embed::Sequence> tokens;               // per post
  std::vector<std::vector<std::string>> qids;        // per post, curated
  embed::EmbeddingTable text_words;                  // empty when sentences are external
  std::optional<embed::EmbeddingTable> text_sentences;
  embed::EmbeddingTable kge;
};

struct FeatureOptions {
  embed::SifConfig sif;
  fusion::Strategy strategy = fusion::Strategy::Concat;
};

// Features for the given rows. SIF statistics and the standardizer are fit
// on train_rows only.
eval::FoldData build_features(const Workspace& ws, InputKind input, corpus::Task task,
                              const std::vector<std::size_t>& train_rows,
                              const std::vector<std::size_t>& test_rows,
                              const FeatureOptions& opts);

// Folds over `rows` (indices into the workspace corpus) with per-fold refits.
eval::FoldProvider make_provider(const Workspace& ws, InputKind input, corpus::Task task,
                                 const std::vector<std::size_t>& rows,
                                 const eval::FoldAssignment& folds, const FeatureOptions& opts);

struct CellResult {
  learn::Family family;
  InputKind input;
  corpus::Task task;
  learn::Hyperparams chosen;
  std::vector<std::size_t> test_rows;
  learn::Prediction prediction;
  learn::Model model;
};

// One cell of the experiment matrix: stratified split, grid search with
// k-fold CV on the training part, refit, prediction on the held-out part.
CellResult run_cell(const Workspace& ws, learn::Family family, InputKind input,
                    corpus::Task task, const PipelineConfig& cfg);

// Stage driver. Each stage writes its artifacts into cfg.output with a
// manifest and reuses them when the manifest's cache key still matches.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::ostream* log = nullptr);

  std::filesystem::path ingest();
  std::filesystem::path analyze();
  std::filesystem::path link();
  std::filesystem::path walk();
  std::filesystem::path embed_text();
  std::filesystem::path embed_kg();
  std::filesystem::path fuse();
  std::filesystem::path train();
  std::filesystem::path evaluate();
  std::filesystem::path bias_check();
  // Runs every stage; returns the results TSV.
  std::filesystem::path matrix();

  Workspace load_workspace();
  const PipelineConfig& config() const { return cfg_; }
  // Stages computed (not reused) since construction, in order.
  const std::vector<std::string>& computed_stages() const { return computed_; }

 private:
  bool reuse(const std::filesystem::path& artifact, const std::string& key);
  void record(const std::filesystem::path& artifact, const std::string& stage,
              const std::string& key, const std::map<std::string, std::string>& inputs,
              const std::map<std::string, std::uint64_t>& seeds);
  std::string stage_key(const std::string& stage, const std::map<std::string, std::string>& inputs,
                        const std::vector<std::string>& config_prefixes) const;
  void note(const std::string& msg);

  PipelineConfig cfg_;
  std::ostream* log_;
  std::vector<std::string> computed_;
};

std::vector<std::string> subcommands();
// Runs a named stage; returns the primary artifact path.
std::filesystem::path run_stage(Pipeline& p, std::string_view subcommand);

}  // namespace cbe::pipeline
