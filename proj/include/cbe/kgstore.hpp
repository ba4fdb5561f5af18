#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cbe::kg {

inline constexpr std::string_view kWikidataEntityPrefix = "http://www.wikidata.org/entity/";
inline constexpr std::string_view kWikidataDirectPrefix = "http://www.wikidata.org/prop/direct/";

struct Term {
  enum class Kind { Iri, Literal };
  Kind kind = Kind::Iri;
  std::string value;     // IRI without brackets, or the unescaped lexical form
  std::string datatype;  // literals only; empty when untyped
  std::string language;  // literals only; empty when untagged

  static Term iri(std::string v) { return Term{Kind::Iri, std::move(v), {}, {}}; }
  static Term literal(std::string v, std::string datatype = {}, std::string language = {}) {
    return Term{Kind::Literal, std::move(v), std::move(datatype), std::move(language)};
  }
  bool is_iri() const { return kind == Kind::Iri; }

  auto operator<=>(const Term&) const = default;
  bool operator==(const Term&) const = default;
};

struct Triple {
  std::string subject;
  std::string predicate;
  Term object;

  auto operator<=>(const Triple&) const = default;
  bool operator==(const Triple&) const = default;
};

struct Edge {
  std::string predicate;
  std::string object;

  auto operator<=>(const Edge&) const = default;
  bool operator==(const Edge&) const = default;
};

// Immutable after construction. Out-adjacency holds IRI objects only and is
// kept sorted by (predicate, object).
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  explicit KnowledgeGraph(std::set<Triple> triples);

  const std::set<Triple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }

  const std::vector<Edge>& neighbors(std::string_view node) const;
  // Appears as a subject or as an IRI object.
  bool contains_node(std::string_view node) const;
  std::vector<std::string> nodes() const;

  bool operator==(const KnowledgeGraph& o) const { return triples_ == o.triples_; }

 private:
  std::set<Triple> triples_;
  std::map<std::string, std::vector<Edge>, std::less<>> out_;
  std::set<std::string, std::less<>> nodes_;
};

// Parses one N-Triples statement. Returns false for blank or comment lines.
// Throws ParseError(line_no) on grammar violations, including blank nodes.
bool parse_ntriples_line(std::string_view line, std::size_t line_no, Triple& out);

KnowledgeGraph parse_ntriples(std::string_view content);
// Files ending in .gz are decompressed transparently.
KnowledgeGraph load_ntriples(const std::filesystem::path& path);

std::string format_term(const Term& t);
std::string format_triple(const Triple& t);
std::string serialize_ntriples(const KnowledgeGraph& g);

inline const std::vector<Edge>& neighbors(const KnowledgeGraph& g, std::string_view node) {
  return g.neighbors(node);
}

struct ConceptAddition {
  std::string label;
  std::string qid;
  std::vector<Triple> triples;
};

bool is_valid_qid(std::string_view qid);
std::string qid_to_iri(std::string_view qid);
// Returns the QID for a Wikidata entity IRI (or a bare QID), else empty.
std::string iri_to_qid(std::string_view iri);

// New graph containing g plus every addition triple. Throws InvalidQid.
KnowledgeGraph apply_additions(const KnowledgeGraph& g, const std::vector<ConceptAddition>& adds);

// TSV `label qid predicate object`: one triple per row, rows sharing a qid
// form one addition. `object` is an IRI in angle brackets or an N-Triples
// literal; bare QIDs in subject/object position expand to entity IRIs.
std::vector<ConceptAddition> load_additions(const std::filesystem::path& path);
std::vector<ConceptAddition> parse_additions(std::string_view content);

}  // namespace cbe::kg
