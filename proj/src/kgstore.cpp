#include "cbe/kgstore.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "cbe/error.hpp"
#include "cbe/text.hpp"

namespace cbe::kg {

namespace {

[[noreturn]] void parse_error(std::size_t line_no, const std::string& why) {
  throw Error(ErrorCode::ParseError,
              "N-Triples parse error at line " + std::to_string(line_no) + ": " + why);
}

class LineParser {
 public:
  LineParser(std::string_view line, std::size_t line_no) : s_(line), line_no_(line_no) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  std::string iri() {
    if (peek() == '_' && pos_ + 1 < s_.size() && s_[pos_ + 1] == ':') {
      fail("blank nodes are not supported");
    }
    if (peek() != '<') fail("expected IRI");
    ++pos_;
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated IRI");
      const char c = s_[pos_];
      if (c == '>') {
        ++pos_;
        break;
      }
      if (c == '\\') {
        ++pos_;
        text::append_utf8(out, uchar());
        continue;
      }
      if (static_cast<unsigned char>(c) <= 0x20 || c == '<' || c == '"' || c == '{' ||
          c == '}' || c == '|' || c == '^' || c == '`') {
        fail("invalid character in IRI");
      }
      out.push_back(c);
      ++pos_;
    }
    if (out.empty()) fail("empty IRI");
    return out;
  }

  Term object() {
    if (peek() == '"') return literal();
    return Term::iri(iri());
  }

  void finish() {
    skip_ws();
    if (peek() != '.') fail("missing terminating '.'");
    ++pos_;
    skip_ws();
    if (!at_end() && peek() != '#') fail("trailing content after '.'");
  }

  void require_ws() {
    if (peek() != ' ' && peek() != '\t') fail("expected whitespace between terms");
    skip_ws();
  }

  [[noreturn]] void fail(const std::string& why) const { parse_error(line_no_, why); }

 private:
  char32_t uchar() {
    std::size_t len = 0;
    if (peek() == 'u') {
      len = 4;
    } else if (peek() == 'U') {
      len = 8;
    } else {
      fail("invalid escape");
    }
    ++pos_;
    if (pos_ + len > s_.size()) fail("truncated unicode escape");
    char32_t cp = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const char c = s_[pos_ + i];
      cp <<= 4;
      if (c >= '0' && c <= '9') {
        cp |= static_cast<char32_t>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        cp |= static_cast<char32_t>(c - 'a' + 10);
      } else if (c >= 'A' && c <= 'F') {
        cp |= static_cast<char32_t>(c - 'A' + 10);
      } else {
        fail("invalid hex digit in escape");
      }
    }
    pos_ += len;
    if (cp > 0x10FFFF) fail("codepoint out of range");
    return cp;
  }

  Term literal() {
    ++pos_;  // opening quote
    std::string value;
    while (true) {
      if (at_end()) fail("unterminated literal");
      const char c = s_[pos_];
      if (c == '"') {
        ++pos_;
        break;
      }
      if (c == '\\') {
        ++pos_;
        switch (peek()) {
          case 't': value.push_back('\t'); ++pos_; break;
          case 'b': value.push_back('\b'); ++pos_; break;
          case 'n': value.push_back('\n'); ++pos_; break;
          case 'r': value.push_back('\r'); ++pos_; break;
          case 'f': value.push_back('\f'); ++pos_; break;
          case '"': value.push_back('"'); ++pos_; break;
          case '\'': value.push_back('\''); ++pos_; break;
          case '\\': value.push_back('\\'); ++pos_; break;
          default: text::append_utf8(value, uchar());
        }
        continue;
      }
      value.push_back(c);
      ++pos_;
    }
    if (peek() == '@') {
      ++pos_;
      const std::size_t start = pos_;
      while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '-')) {
        ++pos_;
      }
      std::string lang(s_.substr(start, pos_ - start));
      static const std::regex kLang("[a-zA-Z]+(-[a-zA-Z0-9]+)*");
      if (!std::regex_match(lang, kLang)) fail("invalid language tag");
      return Term::literal(std::move(value), {}, std::move(lang));
    }
    if (peek() == '^') {
      if (pos_ + 1 >= s_.size() || s_[pos_ + 1] != '^') fail("expected '^^'");
      pos_ += 2;
      return Term::literal(std::move(value), iri());
    }
    return Term::literal(std::move(value));
  }

  std::string_view s_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  const std::string name = path.string();
  if (name.size() > 3 && name.compare(name.size() - 3, 3, ".gz") == 0) {
    gzFile f = gzopen(name.c_str(), "rb");
    if (!f) throw Error(ErrorCode::IoError, "cannot open " + name);
    std::string out;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw Error(ErrorCode::IoError, "gzip decode failed for " + name);
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string escape_literal(std::string_view v) {
  std::string out;
  for (char c : v) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default: out.push_back(c);
    }
  }
  return out;
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

}  // namespace

KnowledgeGraph::KnowledgeGraph(std::set<Triple> triples) : triples_(std::move(triples)) {
  for (const auto& t : triples_) {
    nodes_.insert(t.subject);
    if (t.object.is_iri()) {
      out_[t.subject].push_back({t.predicate, t.object.value});
      nodes_.insert(t.object.value);
    }
  }
  // std::set iteration is sorted by (subject, predicate, object), so each
  // adjacency list is already in (predicate, object) order.
}

const std::vector<Edge>& KnowledgeGraph::neighbors(std::string_view node) const {
  static const std::vector<Edge> kEmpty;
  auto it = out_.find(node);
  return it == out_.end() ? kEmpty : it->second;
}

bool KnowledgeGraph::contains_node(std::string_view node) const {
  return nodes_.find(node) != nodes_.end();
}

std::vector<std::string> KnowledgeGraph::nodes() const {
  return {nodes_.begin(), nodes_.end()};
}

bool parse_ntriples_line(std::string_view line, std::size_t line_no, Triple& out) {
  LineParser p(line, line_no);
  p.skip_ws();
  if (p.at_end() || p.peek() == '#') return false;
  out.subject = p.iri();
  p.require_ws();
  out.predicate = p.iri();
  p.require_ws();
  out.object = p.object();
  p.finish();
  return true;
}

KnowledgeGraph parse_ntriples(std::string_view content) {
  std::set<Triple> triples;
  std::size_t line_no = 0;
  for (auto line : split_lines(content)) {
    ++line_no;
    Triple t;
    if (parse_ntriples_line(line, line_no, t)) triples.insert(std::move(t));
  }
  return KnowledgeGraph(std::move(triples));
}

KnowledgeGraph load_ntriples(const std::filesystem::path& path) {
  return parse_ntriples(read_file(path));
}

std::string format_term(const Term& t) {
  if (t.is_iri()) return "<" + t.value + ">";
  std::string out = "\"" + escape_literal(t.value) + "\"";
  if (!t.language.empty()) {
    out += "@" + t.language;
  } else if (!t.datatype.empty()) {
    out += "^^<" + t.datatype + ">";
  }
  return out;
}

std::string format_triple(const Triple& t) {
  return "<" + t.subject + "> <" + t.predicate + "> " + format_term(t.object) + " .";
}

std::string serialize_ntriples(const KnowledgeGraph& g) {
  std::string out;
  for (const auto& t : g.triples()) {
    out += format_triple(t);
    out += '\n';
  }
  return out;
}

bool is_valid_qid(std::string_view qid) {
  if (qid.size() < 2 || qid[0] != 'Q') return false;
  return std::all_of(qid.begin() + 1, qid.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string qid_to_iri(std::string_view qid) {
  return std::string(kWikidataEntityPrefix) + std::string(qid);
}

std::string iri_to_qid(std::string_view iri) {
  if (is_valid_qid(iri)) return std::string(iri);
  if (iri.substr(0, kWikidataEntityPrefix.size()) == kWikidataEntityPrefix) {
    auto rest = iri.substr(kWikidataEntityPrefix.size());
    if (is_valid_qid(rest)) return std::string(rest);
  }
  return {};
}

KnowledgeGraph apply_additions(const KnowledgeGraph& g, const std::vector<ConceptAddition>& adds) {
  std::set<Triple> triples = g.triples();
  for (const auto& a : adds) {
    if (!is_valid_qid(a.qid)) {
      throw Error(ErrorCode::InvalidQid, "invalid QID '" + a.qid + "' for '" + a.label + "'");
    }
    for (const auto& t : a.triples) triples.insert(t);
  }
  return KnowledgeGraph(std::move(triples));
}

std::vector<ConceptAddition> parse_additions(std::string_view content) {
  std::vector<ConceptAddition> adds;
  std::map<std::string, std::size_t> by_qid;
  std::size_t line_no = 0;
  for (auto line : split_lines(content)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (line_no == 1 && cols.size() >= 2 && cols[0] == "label" && cols[1] == "qid") continue;
    if (cols.size() != 4) parse_error(line_no, "additions rows need 4 columns");
    const std::string qid(cols[1]);
    if (!is_valid_qid(qid)) {
      throw Error(ErrorCode::InvalidQid,
                  "invalid QID '" + qid + "' at line " + std::to_string(line_no));
    }
    auto expand = [&](std::string_view term) -> std::string {
      if (is_valid_qid(term)) return qid_to_iri(term);
      if (term.size() >= 2 && term.front() == '<' && term.back() == '>') {
        return std::string(term.substr(1, term.size() - 2));
      }
      parse_error(line_no, "expected IRI or QID, got '" + std::string(term) + "'");
    };
    Triple t;
    t.subject = qid_to_iri(qid);
    t.predicate = expand(cols[2]);
    if (!cols[3].empty() && cols[3].front() == '"') {
      // Reuse the statement parser for literal syntax.
      Triple probe;
      const std::string stmt = "<s> <p> " + std::string(cols[3]) + " .";
      parse_ntriples_line(stmt, line_no, probe);
      t.object = probe.object;
    } else {
      t.object = Term::iri(expand(cols[3]));
    }
    auto [it, inserted] = by_qid.try_emplace(qid, adds.size());
    if (inserted) adds.push_back({std::string(cols[0]), qid, {}});
    adds[it->second].triples.push_back(std::move(t));
  }
  return adds;
}

std::vector<ConceptAddition> load_additions(const std::filesystem::path& path) {
  return parse_additions(read_file(path));
}

}  // namespace cbe::kg
