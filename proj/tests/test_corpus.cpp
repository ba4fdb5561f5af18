#include "cbe/corpus.hpp"
#include "cbe/text.hpp"

#include <gtest/gtest.h>

#include "cbe/rng.hpp"
#include "test_util.hpp"

using namespace cbe::corpus;
using cbe::testing::TempDir;

namespace {

LabeledCorpus tiny(const std::vector<std::pair<std::string, int>>& rows) {
  std::string tsv = "id\ttext\ted1\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    tsv += "p" + std::to_string(i) + "\t" + rows[i].first + "\t" + std::to_string(rows[i].second) + "\n";
  }
  return preprocess_corpus(parse_corpus(tsv));
}

}  // namespace

TEST(Load, ParsesAllTasksInOrder) {
  std::string tsv = "id\ttext\ted1\ted2\ted3\ted4\n";
  for (int i = 0; i < 2000; ++i) {
    tsv += "t" + std::to_string(i) + "\tpost " + std::to_string(i) + "\t" + std::to_string(i % 2) +
           "\t0\t1\t" + std::to_string(i % 3 == 0) + "\n";
  }
  const auto c = parse_corpus(tsv);
  EXPECT_EQ(c.size(), 2000u);
  EXPECT_EQ(c.tasks().size(), 4u);
  EXPECT_EQ(c.posts()[1999].id, "t1999");
  EXPECT_EQ(c.label(3, Task::ED1), 1);
  EXPECT_EQ(c.label(3, Task::ED4), 1);
}

TEST(Load, HeaderOnlyIsEmpty) {
  const auto c = parse_corpus("id\ttext\ted1\ted2\ted3\ted4\n");
  EXPECT_EQ(c.size(), 0u);
}

TEST(Load, RejectsBadLabelAndColumnCount) {
  EXPECT_CBE_ERROR(parse_corpus("id\ttext\ted1\na\thello\t2\n"), MalformedRow);
  EXPECT_CBE_ERROR(parse_corpus("id\ttext\ted1\na\thello\n"), MalformedRow);
  EXPECT_CBE_ERROR(parse_corpus("id\ttext\ted1\na\tx\t1\na\ty\t0\n"), DuplicateId);
}

TEST(Load, MissingFileIsIoError) {
  EXPECT_CBE_ERROR(load_corpus("/nonexistent/corpus.tsv"), IoError);
}

TEST(Load, LabelsForAbsentTaskIsUnknownTask) {
  const auto c = parse_corpus("id\ttext\ted1\na\tx\t1\n");
  EXPECT_CBE_ERROR(c.labels_for(Task::ED3), UnknownTask);
  EXPECT_CBE_ERROR(parse_task("ed9"), UnknownTask);
}

TEST(Load, SerializeRoundTrip) {
  TempDir dir("corpus");
  const std::string tsv =
      "id\ttext\tauthor_id\ted1\ted2\n1\tHola #ED 😢 https://x.y\tu1\t1\t0\n2\t@bob hi\tu2\t0\t1\n";
  const auto raw = parse_corpus(tsv);
  EXPECT_EQ(parse_corpus(serialize_corpus(raw)), raw);
  const auto clean = preprocess_corpus(raw);
  cbe::testing::write_text(dir / "c.tsv", serialize_corpus(clean, true));
  EXPECT_EQ(load_corpus(dir / "c.tsv"), clean);
}

TEST(Preprocess, WorkedExample) {
  Post p{"1", "Check https://t.co/x #anorexia 😢", "", std::nullopt, {}};
  const auto out = preprocess(p);
  EXPECT_EQ(out.clean_text, "check #anorexia");
  EXPECT_EQ(out.emojis, std::vector<std::string>{"😢"});
}

TEST(Preprocess, EmptyAndNoEmoji) {
  EXPECT_EQ(preprocess(Post{"1", "", "", {}, {}}).clean_text, "");
  EXPECT_TRUE(preprocess(Post{"1", "", "", {}, {}}).emojis.empty());
  const auto p = preprocess(Post{"1", "Hello World @me www.site.org", "", {}, {}});
  EXPECT_EQ(p.clean_text, "hello world");
  EXPECT_TRUE(p.emojis.empty());
}

TEST(Preprocess, IdempotentOnRandomText) {
  const std::vector<std::string> pieces = {"Hola", "#ED", "😢", "❤️", "https://a.b", "@x", "Ω",
                                           "www.q", "  ", "\t", "WORLD", "👩🏽", "x😢y", "HTTP://Z"};
  cbe::Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const auto n = rng.below(12);
    for (std::uint64_t i = 0; i < n; ++i) {
      s += pieces[rng.below(pieces.size())];
      if (rng.uniform() < 0.7) s += ' ';
    }
    const auto once = preprocess_text(s);
    EXPECT_EQ(preprocess_text(once), once) << s;
    for (const auto& tok : cbe::text::split_whitespace(once)) {
      EXPECT_NE(tok.front(), '@');
      EXPECT_FALSE(tok.starts_with("http://") || tok.starts_with("https://") || tok.starts_with("www."));
    }
    std::vector<std::string> removed;
    preprocess_text(s, {}, &removed);
    EXPECT_EQ(cbe::text::extract_emojis(s).clusters, removed);
  }
}

TEST(EmojiStats, Fractions) {
  const auto c = tiny({{"a 😢", 1}, {"b", 0}, {"c", 1}, {"d", 0}});
  const auto s = emoji_statistics(c);
  EXPECT_EQ(s.posts_with_emoji, 1u);
  EXPECT_DOUBLE_EQ(s.fraction, 0.25);
  const auto none = emoji_statistics(tiny({{"a", 1}, {"b", 0}}));
  EXPECT_EQ(none.posts_with_emoji, 0u);
  EXPECT_EQ(none.fraction, 0.0);
  EXPECT_CBE_ERROR(emoji_statistics(LabeledCorpus{}), EmptyCorpus);
}

TEST(Distribution, HandCountedUnigrams) {
  const auto c = tiny({{"a b", 0}, {"a", 0}, {"b", 1}});
  const auto [d0, d1] = class_distribution(c, Task::ED1, ItemKind::Unigram, 10);
  EXPECT_EQ(d0.counts, (std::map<std::string, std::size_t>{{"a", 2}, {"b", 1}}));
  EXPECT_EQ(d1.counts, (std::map<std::string, std::size_t>{{"b", 1}}));
  EXPECT_EQ(d0.total(), 3u);
  EXPECT_CBE_ERROR(class_distribution(c, Task::ED2, ItemKind::Unigram, 10), UnknownTask);
}

TEST(Distribution, NoEmojisGivesEmptyTables) {
  const auto c = tiny({{"a", 0}, {"b", 1}});
  const auto [d0, d1] = class_distribution(c, Task::ED1, ItemKind::Emoji, 10);
  EXPECT_TRUE(d0.counts.empty());
  EXPECT_TRUE(d1.counts.empty());
  EXPECT_CBE_ERROR(overlap_analysis(d0, d1), BothEmpty);
}

TEST(Distribution, TopNTieBreakIsLexicographic) {
  const auto c = tiny({{"c b a", 0}, {"d", 1}, {"d", 1}});
  EXPECT_EQ(top_items(c, ItemKind::Unigram, 2), (std::vector<std::string>{"d", "a"}));
}

TEST(Distribution, HashtagsAndEmojis) {
  const auto c = tiny({{"#ed #ED 😢 x", 1}, {"#recovery 😢😢", 0}});
  const auto [h0, h1] = class_distribution(c, Task::ED1, ItemKind::Hashtag, 10);
  EXPECT_EQ(h1.counts.at("#ed"), 2u);
  EXPECT_EQ(h0.counts.at("#recovery"), 1u);
  const auto [e0, e1] = class_distribution(c, Task::ED1, ItemKind::Emoji, 10);
  EXPECT_EQ(e0.counts.at("😢"), 2u);
  EXPECT_EQ(e1.counts.at("😢"), 1u);
}

TEST(Distribution, ClassCountsSumToCorpusCounts) {
  cbe::Rng rng(3);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "#f", "#g"};
  std::vector<std::pair<std::string, int>> rows;
  for (int i = 0; i < 60; ++i) {
    std::string t;
    for (int w = 0; w < 5; ++w) t += words[rng.below(words.size())] + " ";
    rows.emplace_back(t, static_cast<int>(rng.below(2)));
  }
  const auto c = tiny(rows);
  for (auto kind : {ItemKind::Unigram, ItemKind::Hashtag}) {
    const auto [d0, d1] = class_distribution(c, Task::ED1, kind, 100);
    std::map<std::string, std::size_t> all;
    for (const auto& p : c.posts()) {
      for (const auto& item : post_items(p, kind)) ++all[item];
    }
    for (const auto& [item, n] : all) {
      const auto get = [&](const ClassDistribution& d) {
        auto it = d.counts.find(item);
        return it == d.counts.end() ? 0u : it->second;
      };
      EXPECT_EQ(get(d0) + get(d1), n) << item;
    }
    for (const auto& [item, n] : d0.counts) EXPECT_GE(n, 1u);
  }
}

TEST(Overlap, Jaccard) {
  ClassDistribution a, b;
  a.counts = {{"a", 1}, {"b", 1}, {"c", 1}};
  b.counts = {{"b", 4}, {"c", 1}, {"d", 2}};
  EXPECT_DOUBLE_EQ(overlap_analysis(a, b), 0.5);
  EXPECT_DOUBLE_EQ(overlap_analysis(a, a), 1.0);
  ClassDistribution d;
  d.counts = {{"z", 1}};
  EXPECT_DOUBLE_EQ(overlap_analysis(a, d), 0.0);
}

TEST(Overlap, DistributionTsv) {
  ClassDistribution a, b;
  a.counts = {{"x", 2}};
  b.counts = {{"x", 1}, {"y", 5}};
  const auto tsv = distribution_tsv(a, b);
  EXPECT_NE(tsv.find("y\t0\t5"), std::string::npos);
  EXPECT_NE(tsv.find("x\t2\t1"), std::string::npos);
}
