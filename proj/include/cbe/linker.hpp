#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cbe::linker {

enum class Source { Gazetteer, Remote, Merged };
std::string_view source_name(Source s);
Source parse_source(std::string_view s);

// A linked span of a post's clean text. Offsets are byte offsets.
struct EntityMention {
  std::string surface;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string qid;
  std::optional<std::string> entity_type;
  Source source = Source::Gazetteer;
  bool needs_curation = false;

  bool operator==(const EntityMention&) const = default;
};

struct GazetteerEntry {
  std::string qid;
  std::string entity_type;
};

class Gazetteer {
 public:
  // Surface forms are normalized (lowercase, single spaces) on insert.
  void add(std::string_view surface, std::string qid, std::string entity_type = {});
  const GazetteerEntry* find(std::string_view normalized) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t max_tokens() const { return max_tokens_; }
  const std::map<std::string, GazetteerEntry, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, GazetteerEntry, std::less<>> entries_;
  std::size_t max_tokens_ = 0;
};

std::string normalize_surface(std::string_view s);

// TSV `surface qid type`; the type column may be empty.
Gazetteer load_gazetteer(const std::filesystem::path& path);
Gazetteer parse_gazetteer(std::string_view content);

// Greedy longest match over token n-grams, scanning left to right. A leading
// '#' on a hashtag token is not part of the matched surface.
std::vector<EntityMention> recognize_gazetteer(std::string_view text, const Gazetteer& g);

// ---------------------------------------------------------------------------
// Remote linking. The client posts {"text": ...} as JSON and accepts any JSON
// object with an array field whose elements carry a Wikidata QID or entity
// IRI, optionally alongside a surface string.

inline constexpr std::string_view kDefaultRemoteEndpoint =
    "https://labs.tib.eu/falcon/falcon2/api?mode=long&db=1";
inline constexpr std::string_view kRemoteEndpointEnv = "CBE_REMOTE_LINKER_URL";

struct RemoteOptions {
  std::string endpoint = std::string(kDefaultRemoteEndpoint);
  std::chrono::milliseconds timeout{10000};
  std::size_t max_concurrency = 4;
};

// Throws NetworkError, Timeout or BadResponse.
std::vector<EntityMention> recognize_remote(std::string_view text, const RemoteOptions& opts);

// Mentions from a response body, spans located by case-insensitive search
// (first occurrence). Unlocatable surfaces keep an empty span at offset 0.
std::vector<EntityMention> parse_remote_response(std::string_view body, std::string_view text);

// Runs recognize_remote over many texts with bounded concurrency. Failures
// are captured per text so callers can fall back to gazetteer-only results.
struct RemoteResult {
  std::vector<EntityMention> mentions;
  std::optional<std::string> error;
};
std::vector<RemoteResult> recognize_remote_batch(const std::vector<std::string>& texts,
                                                 const RemoteOptions& opts);

// Union keyed by qid, ordered by span start then qid.
std::vector<EntityMention> merge_mentions(const std::vector<EntityMention>& a,
                                          const std::vector<EntityMention>& b);

struct CurationRule {
  std::string surface;
  std::string wrong_qid;
  std::string correct_qid;
};

std::vector<CurationRule> parse_curation_rules(std::string_view content);
std::vector<CurationRule> load_curation_rules(const std::filesystem::path& path);

// The corrections shipped in data/curation_default.tsv.
const std::vector<CurationRule>& default_curation_rules();

struct TabuTypeList {
  std::set<std::string> types;

  static TabuTypeList defaults();  // Album, Book, Streets, Organization, Song, Movie
  bool contains(std::string_view type) const;  // case-insensitive
};

std::vector<EntityMention> apply_curation(const std::vector<EntityMention>& mentions,
                                          const std::vector<CurationRule>& rules,
                                          const TabuTypeList& tabu,
                                          const std::map<std::string, std::string>& type_of);

struct VocabularyEntry {
  std::string qid;
  std::size_t count;
};

// QIDs counted corpus-wide, keeping those seen at least min_count times,
// ordered by descending count then qid.
std::vector<VocabularyEntry> entity_vocabulary_counts(
    const std::vector<std::vector<EntityMention>>& per_post, std::size_t min_count = 2);
std::vector<std::string> entity_vocabulary(
    const std::vector<std::vector<EntityMention>>& per_post, std::size_t min_count = 2);

// Mentions TSV: post_id start end surface qid type source needs_curation.
std::string serialize_mentions(const std::vector<std::string>& post_ids,
                               const std::vector<std::vector<EntityMention>>& per_post);
std::map<std::string, std::vector<EntityMention>> parse_mentions(std::string_view content);

}  // namespace cbe::linker
