#include "cbe/linker.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "cbe/error.hpp"
#include "cbe/kgstore.hpp"
#include "cbe/text.hpp"

namespace cbe::linker {

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

std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    if (nl == std::string_view::npos) nl = content.size();
    auto line = content.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool only_spaces(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' '; });
}

}  // namespace

std::string_view source_name(Source s) {
  switch (s) {
    case Source::Gazetteer: return "gazetteer";
    case Source::Remote: return "remote";
    case Source::Merged: return "merged";
  }
  return "?";
}

Source parse_source(std::string_view s) {
  if (s == "gazetteer") return Source::Gazetteer;
  if (s == "remote") return Source::Remote;
  if (s == "merged") return Source::Merged;
  throw Error(ErrorCode::ParseError, "unknown mention source '" + std::string(s) + "'");
}

std::string normalize_surface(std::string_view s) {
  const std::string lower = text::to_lower(s);
  std::string out;
  for (auto tok : text::split_whitespace(lower)) {
    if (!out.empty()) out.push_back(' ');
    out.append(tok);
  }
  return out;
}

void Gazetteer::add(std::string_view surface, std::string qid, std::string entity_type) {
  if (!kg::is_valid_qid(qid)) {
    throw Error(ErrorCode::InvalidQid, "invalid QID '" + qid + "' in gazetteer");
  }
  std::string key = normalize_surface(surface);
  if (key.empty()) return;
  const std::size_t n = static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')) + 1;
  max_tokens_ = std::max(max_tokens_, n);
  entries_.insert_or_assign(std::move(key), GazetteerEntry{std::move(qid), std::move(entity_type)});
}

const GazetteerEntry* Gazetteer::find(std::string_view normalized) const {
  auto it = entries_.find(normalized);
  return it == entries_.end() ? nullptr : &it->second;
}

Gazetteer parse_gazetteer(std::string_view content) {
  Gazetteer g;
  std::size_t line_no = 0;
  for (auto line : split_lines(content)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto cols = split_tabs(line);
    if (line_no == 1 && cols[0] == "surface") continue;
    if (cols.size() < 2 || cols.size() > 3) {
      throw Error(ErrorCode::ParseError,
                  "gazetteer line " + std::to_string(line_no) + ": expected surface<TAB>qid<TAB>type");
    }
    g.add(cols[0], std::string(cols[1]), cols.size() == 3 ? std::string(cols[2]) : std::string());
  }
  return g;
}

Gazetteer load_gazetteer(const std::filesystem::path& path) {
  return parse_gazetteer(read_file(path));
}

std::vector<EntityMention> recognize_gazetteer(std::string_view text, const Gazetteer& g) {
  std::vector<EntityMention> out;
  if (text.empty() || g.size() == 0) return out;
  auto tokens = text::tokenize_with_spans(text);
  for (auto& t : tokens) {
    if (!t.token.empty() && t.token.front() == '#') {
      t.token.erase(0, 1);
      t.begin += 1;
    }
  }
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    const std::size_t longest = std::min(g.max_tokens(), tokens.size() - i);
    for (std::size_t n = longest; n >= 1 && !matched; --n) {
      std::string key = tokens[i].token;
      bool contiguous = true;
      for (std::size_t k = i + 1; k < i + n; ++k) {
        if (!only_spaces(text.substr(tokens[k - 1].end, tokens[k].begin - tokens[k - 1].end))) {
          contiguous = false;
          break;
        }
        key += ' ';
        key += tokens[k].token;
      }
      if (!contiguous) continue;
      if (const auto* entry = g.find(normalize_surface(key))) {
        EntityMention m;
        m.start = tokens[i].begin;
        m.end = tokens[i + n - 1].end;
        m.surface = std::string(text.substr(m.start, m.end - m.start));
        m.qid = entry->qid;
        if (!entry->entity_type.empty()) m.entity_type = entry->entity_type;
        m.source = Source::Gazetteer;
        out.push_back(std::move(m));
        i += n;
        matched = true;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

std::vector<EntityMention> merge_mentions(const std::vector<EntityMention>& a,
                                          const std::vector<EntityMention>& b) {
  struct Slot {
    std::size_t pos;
    bool from_a;
    bool merged;
  };
  std::unordered_map<std::string, Slot> index;
  std::vector<EntityMention> out;
  auto take = [&](const std::vector<EntityMention>& list, bool from_a) {
    for (const auto& m : list) {
      auto it = index.find(m.qid);
      if (it == index.end()) {
        index.emplace(m.qid, Slot{out.size(), from_a, false});
        out.push_back(m);
        continue;
      }
      auto& slot = it->second;
      if (from_a || !slot.from_a || slot.merged) continue;
      // Present in both lists; the earlier span represents the entity.
      auto& kept = out[slot.pos];
      const bool curation = kept.needs_curation || m.needs_curation;
      const auto type = kept.entity_type ? kept.entity_type : m.entity_type;
      if (m.start < kept.start) kept = m;
      kept.needs_curation = curation;
      kept.entity_type = type;
      kept.source = Source::Merged;
      slot.merged = true;
    }
  };
  take(a, true);
  take(b, false);
  std::stable_sort(out.begin(), out.end(), [](const EntityMention& x, const EntityMention& y) {
    return x.start != y.start ? x.start < y.start : x.qid < y.qid;
  });
  return out;
}

std::vector<CurationRule> parse_curation_rules(std::string_view content) {
  std::vector<CurationRule> rules;
  std::size_t line_no = 0;
  for (auto line : split_lines(content)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto cols = split_tabs(line);
    if (line_no == 1 && cols[0] == "surface") continue;
    if (cols.size() != 3) {
      throw Error(ErrorCode::ParseError, "curation line " + std::to_string(line_no) +
                                             ": expected surface<TAB>wrong_qid<TAB>correct_qid");
    }
    CurationRule r{normalize_surface(cols[0]), std::string(cols[1]), std::string(cols[2])};
    if (!kg::is_valid_qid(r.wrong_qid) || !kg::is_valid_qid(r.correct_qid)) {
      throw Error(ErrorCode::InvalidQid, "curation line " + std::to_string(line_no) + ": bad QID");
    }
    if (r.wrong_qid == r.correct_qid) {
      throw Error(ErrorCode::ParseError,
                  "curation line " + std::to_string(line_no) + ": wrong and correct QID are equal");
    }
    rules.push_back(std::move(r));
  }
  return rules;
}

std::vector<CurationRule> load_curation_rules(const std::filesystem::path& path) {
  return parse_curation_rules(read_file(path));
}

const std::vector<CurationRule>& default_curation_rules() {
  static const std::vector<CurationRule> kRules = {
      {"recovery", "Q274533", "Q2135807"},
      {"anorexia", "Q4770169", "Q254327"},
      {"ed", "Q930797", "Q373822"},
      {"binger", "Q544455", "Q2303219"},
      {"help", "Q204374", "Q1643184"},
  };
  return kRules;
}

TabuTypeList TabuTypeList::defaults() {
  return TabuTypeList{{"Album", "Book", "Streets", "Organization", "Song", "Movie"}};
}

bool TabuTypeList::contains(std::string_view type) const {
  const std::string lower = text::to_lower(type);
  return std::any_of(types.begin(), types.end(),
                     [&](const std::string& t) { return text::to_lower(t) == lower; });
}

std::vector<EntityMention> apply_curation(const std::vector<EntityMention>& mentions,
                                          const std::vector<CurationRule>& rules,
                                          const TabuTypeList& tabu,
                                          const std::map<std::string, std::string>& type_of) {
  std::vector<EntityMention> out;
  out.reserve(mentions.size());
  for (auto m : mentions) {
    const std::string surface = normalize_surface(m.surface);
    const auto rule = std::find_if(rules.begin(), rules.end(), [&](const CurationRule& r) {
      return r.wrong_qid == m.qid && r.surface == surface;
    });
    if (rule != rules.end()) {
      m.qid = rule->correct_qid;
      auto t = type_of.find(m.qid);
      m.entity_type = t == type_of.end() ? std::nullopt : std::optional<std::string>(t->second);
      m.needs_curation = false;
    } else {
      auto t = type_of.find(m.qid);
      const std::optional<std::string> type =
          t != type_of.end() ? std::optional<std::string>(t->second) : m.entity_type;
      if (type && tabu.contains(*type)) m.needs_curation = true;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<VocabularyEntry> entity_vocabulary_counts(
    const std::vector<std::vector<EntityMention>>& per_post, std::size_t min_count) {
  if (min_count < 1) throw Error(ErrorCode::InvalidConfig, "min_count must be at least 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& post : per_post) {
    for (const auto& m : post) ++counts[m.qid];
  }
  std::vector<VocabularyEntry> out;
  for (auto& [qid, c] : counts) {
    if (c >= min_count) out.push_back({qid, c});
  }
  std::sort(out.begin(), out.end(), [](const VocabularyEntry& a, const VocabularyEntry& b) {
    return a.count != b.count ? a.count > b.count : a.qid < b.qid;
  });
  return out;
}

std::vector<std::string> entity_vocabulary(const std::vector<std::vector<EntityMention>>& per_post,
                                           std::size_t min_count) {
  std::vector<std::string> out;
  for (auto& e : entity_vocabulary_counts(per_post, min_count)) out.push_back(std::move(e.qid));
  return out;
}

std::string serialize_mentions(const std::vector<std::string>& post_ids,
                               const std::vector<std::vector<EntityMention>>& per_post) {
  std::ostringstream out;
  out << "post_id\tstart\tend\tsurface\tqid\ttype\tsource\tneeds_curation\n";
  for (std::size_t i = 0; i < per_post.size(); ++i) {
    for (const auto& m : per_post[i]) {
      out << post_ids.at(i) << '\t' << m.start << '\t' << m.end << '\t' << m.surface << '\t'
          << m.qid << '\t' << m.entity_type.value_or("") << '\t' << source_name(m.source) << '\t'
          << (m.needs_curation ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

std::map<std::string, std::vector<EntityMention>> parse_mentions(std::string_view content) {
  std::map<std::string, std::vector<EntityMention>> out;
  std::size_t line_no = 0;
  for (auto line : split_lines(content)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 8) {
      throw Error(ErrorCode::ParseError, "mentions line " + std::to_string(line_no) + ": need 8 columns");
    }
    EntityMention m;
    try {
      m.start = std::stoul(std::string(cols[1]));
      m.end = std::stoul(std::string(cols[2]));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "mentions line " + std::to_string(line_no) + ": bad offset");
    }
    m.surface = std::string(cols[3]);
    m.qid = std::string(cols[4]);
    if (!cols[5].empty()) m.entity_type = std::string(cols[5]);
    m.source = parse_source(cols[6]);
    m.needs_curation = cols[7] == "1";
    out[std::string(cols[0])].push_back(std::move(m));
  }
  return out;
}

}  // namespace cbe::linker
