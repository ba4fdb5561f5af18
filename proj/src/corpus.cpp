#include "cbe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cbe/error.hpp"
#include "cbe/text.hpp"

namespace cbe::corpus {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::MalformedRow,
              "malformed row at line " + std::to_string(line_no) + ": " + why);
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    char c = s[i];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    if (c != prefix[i]) return false;
  }
  return true;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string_view task_name(Task t) {
  switch (t) {
    case Task::ED1: return "ed1";
    case Task::ED2: return "ed2";
    case Task::ED3: return "ed3";
    case Task::ED4: return "ed4";
  }
  return "ed?";
}

Task parse_task(std::string_view name) {
  const std::string lower = text::to_lower(name);
  for (Task t : kAllTasks) {
    if (lower == task_name(t)) return t;
  }
  throw Error(ErrorCode::UnknownTask, "unknown task '" + std::string(name) + "'");
}

LabeledCorpus::LabeledCorpus(std::vector<Post> posts, std::vector<Task> tasks,
                             std::vector<std::map<Task, int>> labels)
    : posts_(std::move(posts)), tasks_(std::move(tasks)), labels_(std::move(labels)) {
  if (labels_.size() != posts_.size()) {
    throw Error(ErrorCode::MalformedRow, "label rows do not match post count");
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < posts_.size(); ++i) {
    if (!seen.insert(posts_[i].id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate post id '" + posts_[i].id + "'");
    }
    if (labels_[i].size() != tasks_.size()) {
      throw Error(ErrorCode::MalformedRow, "post '" + posts_[i].id + "' has a partial label row");
    }
    for (Task t : tasks_) {
      auto it = labels_[i].find(t);
      if (it == labels_[i].end() || (it->second != 0 && it->second != 1)) {
        throw Error(ErrorCode::MalformedRow, "post '" + posts_[i].id + "' has an invalid label");
      }
    }
  }
}

bool LabeledCorpus::has_task(Task t) const {
  return std::find(tasks_.begin(), tasks_.end(), t) != tasks_.end();
}

int LabeledCorpus::label(std::size_t post_index, Task t) const {
  if (!has_task(t)) {
    throw Error(ErrorCode::UnknownTask, "task " + std::string(task_name(t)) + " not in corpus");
  }
  return labels_.at(post_index).at(t);
}

std::vector<int> LabeledCorpus::labels_for(Task t) const {
  if (!has_task(t)) {
    throw Error(ErrorCode::UnknownTask, "task " + std::string(task_name(t)) + " not in corpus");
  }
  std::vector<int> out;
  out.reserve(labels_.size());
  for (const auto& row : labels_) out.push_back(row.at(t));
  return out;
}

LabeledCorpus parse_corpus(std::string_view content) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start < content.size()) {
      auto nl = content.find('\n', start);
      if (nl == std::string_view::npos) nl = content.size();
      auto line = content.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      start = nl + 1;
    }
  }
  if (lines.empty()) malformed(1, "missing header");

  const auto header = split_tabs(lines[0]);
  if (header.size() < 2 || header[0] != "id" || header[1] != "text") {
    malformed(1, "header must start with id<TAB>text");
  }
  std::vector<std::pair<std::size_t, Task>> task_cols;
  std::optional<std::size_t> author_col, clean_col, emoji_col;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const auto name = header[c];
    if (name == "author_id") {
      author_col = c;
    } else if (name == "clean_text") {
      clean_col = c;
    } else if (name == "emojis") {
      emoji_col = c;
    } else {
      Task t;
      try {
        t = parse_task(name);
      } catch (const Error&) {
        malformed(1, "unknown column '" + std::string(name) + "'");
      }
      for (const auto& [_, seen] : task_cols) {
        if (seen == t) malformed(1, "duplicate column '" + std::string(name) + "'");
      }
      task_cols.emplace_back(c, t);
    }
  }
  std::vector<Task> tasks;
  for (const auto& [_, t] : task_cols) tasks.push_back(t);

  std::vector<Post> posts;
  std::vector<std::map<Task, int>> labels;
  std::unordered_set<std::string> seen_ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) {
      if (i + 1 == lines.size()) break;
      malformed(line_no, "empty line");
    }
    const auto cols = split_tabs(lines[i]);
    if (cols.size() != header.size()) {
      malformed(line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                             std::to_string(cols.size()));
    }
    Post post;
    post.id = std::string(cols[0]);
    if (post.id.empty()) malformed(line_no, "empty id");
    if (!seen_ids.insert(post.id).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate post id '" + post.id + "'");
    }
    post.text = std::string(cols[1]);
    if (author_col && !cols[*author_col].empty()) post.author_id = std::string(cols[*author_col]);
    if (clean_col) post.clean_text = std::string(cols[*clean_col]);
    if (emoji_col) {
      for (auto e : text::split_whitespace(cols[*emoji_col])) post.emojis.emplace_back(e);
    }
    std::map<Task, int> row;
    for (const auto& [c, t] : task_cols) {
      if (cols[c] == "0") {
        row[t] = 0;
      } else if (cols[c] == "1") {
        row[t] = 1;
      } else {
        malformed(line_no, "label '" + std::string(cols[c]) + "' is not 0 or 1");
      }
    }
    posts.push_back(std::move(post));
    labels.push_back(std::move(row));
  }
  return LabeledCorpus(std::move(posts), std::move(tasks), std::move(labels));
}

LabeledCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open corpus file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str());
}

std::string serialize_corpus(const LabeledCorpus& corpus, bool with_preprocessing) {
  bool any_author = false;
  for (const auto& p : corpus.posts()) any_author = any_author || p.author_id.has_value();
  std::string out = "id\ttext";
  if (any_author) out += "\tauthor_id";
  if (with_preprocessing) out += "\tclean_text\temojis";
  for (Task t : corpus.tasks()) {
    out += '\t';
    out += task_name(t);
  }
  out += '\n';
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.posts()[i];
    if (p.text.find_first_of("\t\n") != std::string::npos ||
        p.clean_text.find_first_of("\t\n") != std::string::npos) {
      throw Error(ErrorCode::MalformedRow, "post '" + p.id + "' contains a tab or newline");
    }
    out += p.id;
    out += '\t';
    out += p.text;
    if (any_author) {
      out += '\t';
      out += p.author_id.value_or("");
    }
    if (with_preprocessing) {
      out += '\t';
      out += p.clean_text;
      out += '\t';
      out += join(p.emojis, ' ');
    }
    for (Task t : corpus.tasks()) {
      out += '\t';
      out += corpus.label(i, t) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

std::string preprocess_text(std::string_view raw, const PreprocessConfig& cfg,
                            std::vector<std::string>* removed_emojis) {
  std::string body;
  if (cfg.remove_emojis) {
    auto split = text::extract_emojis(raw);
    if (removed_emojis) *removed_emojis = std::move(split.clusters);
    body = std::move(split.remainder);
  } else {
    body = std::string(raw);
  }
  std::vector<std::string> kept;
  for (auto tok : text::split_whitespace(body)) {
    if (cfg.remove_urls && (starts_with_ci(tok, "http://") || starts_with_ci(tok, "https://") ||
                            starts_with_ci(tok, "www."))) {
      continue;
    }
    if (cfg.remove_mentions && tok.front() == '@') continue;
    kept.push_back(cfg.lowercase ? text::to_lower(tok) : std::string(tok));
  }
  return join(kept, ' ');
}

Post preprocess(const Post& post, const PreprocessConfig& cfg) {
  Post out = post;
  out.emojis.clear();
  out.clean_text = preprocess_text(post.text, cfg, &out.emojis);
  return out;
}

LabeledCorpus preprocess_corpus(const LabeledCorpus& corpus, const PreprocessConfig& cfg) {
  LabeledCorpus out = corpus;
  for (auto& p : out.mutable_posts()) p = preprocess(p, cfg);
  return out;
}

EmojiStats emoji_statistics(const LabeledCorpus& corpus) {
  if (corpus.size() == 0) throw Error(ErrorCode::EmptyCorpus, "corpus has no posts");
  EmojiStats s;
  for (const auto& p : corpus.posts()) {
    if (!p.emojis.empty()) ++s.posts_with_emoji;
  }
  s.fraction = static_cast<double>(s.posts_with_emoji) / static_cast<double>(corpus.size());
  return s;
}

std::string_view item_kind_name(ItemKind k) {
  switch (k) {
    case ItemKind::Emoji: return "emoji";
    case ItemKind::Unigram: return "unigram";
    case ItemKind::Hashtag: return "hashtag";
  }
  return "?";
}

ItemKind parse_item_kind(std::string_view name) {
  if (name == "emoji") return ItemKind::Emoji;
  if (name == "unigram") return ItemKind::Unigram;
  if (name == "hashtag") return ItemKind::Hashtag;
  throw Error(ErrorCode::InvalidConfig, "unknown item kind '" + std::string(name) + "'");
}

std::size_t ClassDistribution::total() const {
  std::size_t t = 0;
  for (const auto& [_, c] : counts) t += c;
  return t;
}

std::vector<std::string> post_items(const Post& post, ItemKind kind) {
  switch (kind) {
    case ItemKind::Emoji:
      return post.emojis;
    case ItemKind::Unigram:
      return text::tokenize(post.clean_text);
    case ItemKind::Hashtag: {
      std::vector<std::string> tags;
      for (auto& t : text::tokenize(post.clean_text)) {
        if (t.front() == '#') tags.push_back(std::move(t));
      }
      return tags;
    }
  }
  return {};
}

namespace {

std::vector<std::string> rank_items(const std::unordered_map<std::string, std::size_t>& totals,
                                    std::size_t top_n) {
  std::vector<std::pair<std::string, std::size_t>> ranked(totals.begin(), totals.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > top_n) ranked.resize(top_n);
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (auto& [item, _] : ranked) out.push_back(std::move(item));
  return out;
}

}  // namespace

std::vector<std::string> top_items(const LabeledCorpus& corpus, ItemKind kind, std::size_t top_n) {
  std::unordered_map<std::string, std::size_t> totals;
  for (const auto& p : corpus.posts()) {
    for (auto& item : post_items(p, kind)) ++totals[std::move(item)];
  }
  return rank_items(totals, top_n);
}

std::pair<ClassDistribution, ClassDistribution> class_distribution(const LabeledCorpus& corpus,
                                                                   Task task, ItemKind kind,
                                                                   std::size_t top_n) {
  const auto labels = corpus.labels_for(task);
  const auto top = top_items(corpus, kind, top_n);
  const std::set<std::string> keep(top.begin(), top.end());
  ClassDistribution d0{task, 0, {}};
  ClassDistribution d1{task, 1, {}};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& d = labels[i] ? d1 : d0;
    for (auto& item : post_items(corpus.posts()[i], kind)) {
      if (keep.count(item)) ++d.counts[std::move(item)];
    }
  }
  return {std::move(d0), std::move(d1)};
}

double overlap_analysis(const ClassDistribution& d0, const ClassDistribution& d1) {
  if (d0.counts.empty() && d1.counts.empty()) {
    throw Error(ErrorCode::BothEmpty, "both distributions are empty");
  }
  std::size_t both = 0;
  for (const auto& [item, _] : d0.counts) both += d1.counts.count(item);
  const std::size_t either = d0.counts.size() + d1.counts.size() - both;
  return static_cast<double>(both) / static_cast<double>(either);
}

std::string distribution_tsv(const ClassDistribution& d0, const ClassDistribution& d1) {
  std::unordered_map<std::string, std::size_t> totals;
  for (const auto& [k, c] : d0.counts) totals[k] += c;
  for (const auto& [k, c] : d1.counts) totals[k] += c;
  std::ostringstream out;
  out << "item\tlabel0\tlabel1\n";
  for (const auto& item : rank_items(totals, totals.size())) {
    auto get = [&](const ClassDistribution& d) {
      auto it = d.counts.find(item);
      return it == d.counts.end() ? std::size_t{0} : it->second;
    };
    out << item << '\t' << get(d0) << '\t' << get(d1) << '\n';
  }
  return out.str();
}

}  // namespace cbe::corpus
