#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cbe::corpus {

// The four binary labeling tasks: written by someone with an eating disorder,
// promotes an eating disorder, informative, scientific.
enum class Task { ED1 = 0, ED2 = 1, ED3 = 2, ED4 = 3 };

inline constexpr std::array<Task, 4> kAllTasks = {Task::ED1, Task::ED2, Task::ED3, Task::ED4};

std::string_view task_name(Task t);  // "ed1".."ed4"
Task parse_task(std::string_view name);  // throws UnknownTask

struct Post {
  std::string id;
  std::string text;
  std::string clean_text;
  std::optional<std::string> author_id;
  std::vector<std::string> emojis;

  bool operator==(const Post&) const = default;
};

class LabeledCorpus {
 public:
  LabeledCorpus() = default;
  // Validates id uniqueness and that every label row covers exactly `tasks`.
  LabeledCorpus(std::vector<Post> posts, std::vector<Task> tasks,
                std::vector<std::map<Task, int>> labels);

  const std::vector<Post>& posts() const { return posts_; }
  std::vector<Post>& mutable_posts() { return posts_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  bool has_task(Task t) const;
  int label(std::size_t post_index, Task t) const;
  // Column of labels for one task; throws UnknownTask if absent.
  std::vector<int> labels_for(Task t) const;
  std::size_t size() const { return posts_.size(); }

  bool operator==(const LabeledCorpus&) const = default;

 private:
  std::vector<Post> posts_;
  std::vector<Task> tasks_;
  std::vector<std::map<Task, int>> labels_;
};

// Reads the TSV corpus format: header `id text [author_id] [ed1..ed4]`.
// When the file carries a `clean_text` / `emojis` column pair (the ingest
// output), those values are restored instead of left empty.
LabeledCorpus load_corpus(const std::filesystem::path& path);
LabeledCorpus parse_corpus(std::string_view content);
// Writes the same format back; `with_preprocessing` adds clean_text/emojis.
std::string serialize_corpus(const LabeledCorpus& corpus, bool with_preprocessing = false);

struct PreprocessConfig {
  bool lowercase = true;
  bool remove_urls = true;
  bool remove_mentions = true;
  bool remove_emojis = true;
};

Post preprocess(const Post& post, const PreprocessConfig& cfg = {});
// The text half of preprocess; preprocess_text(preprocess_text(s)) == preprocess_text(s).
std::string preprocess_text(std::string_view text, const PreprocessConfig& cfg = {},
                            std::vector<std::string>* removed_emojis = nullptr);
LabeledCorpus preprocess_corpus(const LabeledCorpus& corpus, const PreprocessConfig& cfg = {});

struct EmojiStats {
  std::size_t posts_with_emoji = 0;
  double fraction = 0.0;
};
EmojiStats emoji_statistics(const LabeledCorpus& corpus);

enum class ItemKind { Emoji, Unigram, Hashtag };
std::string_view item_kind_name(ItemKind k);
ItemKind parse_item_kind(std::string_view name);

struct ClassDistribution {
  Task task = Task::ED1;
  int class_label = 0;
  std::map<std::string, std::size_t> counts;

  std::size_t total() const;
};

// Items extracted from one preprocessed post for the given kind.
std::vector<std::string> post_items(const Post& post, ItemKind kind);

// The top_n most frequent items overall (count desc, then lexicographic).
std::vector<std::string> top_items(const LabeledCorpus& corpus, ItemKind kind, std::size_t top_n);

std::pair<ClassDistribution, ClassDistribution> class_distribution(const LabeledCorpus& corpus,
                                                                   Task task, ItemKind kind,
                                                                   std::size_t top_n);

// Jaccard overlap of the two key sets.
double overlap_analysis(const ClassDistribution& d0, const ClassDistribution& d1);

// TSV `item count_label0 count_label1`, rows in top-item order.
std::string distribution_tsv(const ClassDistribution& d0, const ClassDistribution& d1);

}  // namespace cbe::corpus
