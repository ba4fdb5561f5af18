#include "cbe/kgstore.hpp"

#include <gtest/gtest.h>
#include <zlib.h>

#include "cbe/rng.hpp"
#include "test_util.hpp"

using namespace cbe::kg;
using cbe::testing::TempDir;

namespace {

const std::string kWd = "http://www.wikidata.org/entity/";
const std::string kP = "http://www.wikidata.org/prop/direct/";

std::string iri(const std::string& s) { return "<" + s + ">"; }

}  // namespace

TEST(NTriples, SingleStatement) {
  const auto g = parse_ntriples(iri(kWd + "Q254327") + " " + iri(kP + "P31") + " " +
                                iri(kWd + "Q169872") + " .\n");
  ASSERT_EQ(g.size(), 1u);
  const auto& t = *g.triples().begin();
  EXPECT_EQ(t.subject, kWd + "Q254327");
  EXPECT_EQ(t.predicate, kP + "P31");
  EXPECT_EQ(t.object, Term::iri(kWd + "Q169872"));
}

TEST(NTriples, EmptyAndCommentsAndDuplicates) {
  EXPECT_EQ(parse_ntriples("").size(), 0u);
  const std::string line = "<a:s> <a:p> <a:o> .\n";
  const auto g = parse_ntriples("# header\n\n" + line + line + "   \n<a:s> <a:p> <a:o2> . # tail\n");
  EXPECT_EQ(g.size(), 2u);
}

TEST(NTriples, GrammarViolations) {
  EXPECT_CBE_ERROR(parse_ntriples("<a:s> <a:p> <a:o>\n"), ParseError);
  EXPECT_CBE_ERROR(parse_ntriples("_:b1 <a:p> <a:o> .\n"), ParseError);
  EXPECT_CBE_ERROR(parse_ntriples("<a:s> <a:p> _:b1 .\n"), ParseError);
  EXPECT_CBE_ERROR(parse_ntriples("<a:s> \"lit\" <a:o> .\n"), ParseError);
  EXPECT_CBE_ERROR(parse_ntriples("<a:s> <a:p> \"unterminated .\n"), ParseError);
  EXPECT_CBE_ERROR(parse_ntriples("<a:s> <a:p> <a:o> . junk\n"), ParseError);
  try {
    parse_ntriples("<a:s> <a:p> <a:o> .\n<a:s> <a:p>\n");
    FAIL();
  } catch (const cbe::Error& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
}

TEST(NTriples, Literals) {
  const auto g = parse_ntriples(
      "<a:s> <a:p> \"anorexia\"@en .\n"
      "<a:s> <a:q> \"42\"^^<http://www.w3.org/2001/XMLSchema#integer> .\n"
      "<a:s> <a:r> \"tab\\there \\\"q\\\" \\u00E9\" .\n");
  ASSERT_EQ(g.size(), 3u);
  std::vector<Term> objs;
  for (const auto& t : g.triples()) objs.push_back(t.object);
  EXPECT_EQ(objs[0], Term::literal("anorexia", "", "en"));
  EXPECT_EQ(objs[1], Term::literal("42", "http://www.w3.org/2001/XMLSchema#integer"));
  EXPECT_EQ(objs[2], Term::literal("tab\there \"q\" é"));
  // literals never enter the adjacency
  EXPECT_TRUE(g.neighbors("a:s").empty());
}

TEST(Graph, NeighborsSortedAndOutOnly) {
  const auto g = parse_ntriples("<A> <q> <C> .\n<A> <p> <B> .\n<B> <p> \"x\" .\n");
  EXPECT_EQ(g.neighbors("A"), (std::vector<Edge>{{"p", "B"}, {"q", "C"}}));
  EXPECT_TRUE(g.neighbors("C").empty());
  EXPECT_TRUE(g.neighbors("B").empty());
  EXPECT_TRUE(g.neighbors("nowhere").empty());
  EXPECT_TRUE(g.contains_node("C"));
  EXPECT_FALSE(g.contains_node("nowhere"));
}

TEST(Graph, RandomRoundTripAndAdjacencyProjection) {
  cbe::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::string nt;
    std::set<std::string> lines;
    const auto n = 1 + rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string line = "<n:" + std::to_string(rng.below(10)) + "> <p:" + std::to_string(rng.below(3)) + "> ";
      switch (rng.below(3)) {
        case 0: line += "<n:" + std::to_string(rng.below(10)) + ">"; break;
        case 1: line += "\"v" + std::to_string(rng.below(5)) + "\\n\"@es"; break;
        default: line += "\"" + std::to_string(rng.below(5)) + "\"^^<x:int>"; break;
      }
      line += " .";
      lines.insert(line);
      nt += line + "\n";
    }
    const auto g = parse_ntriples(nt);
    EXPECT_EQ(g.size(), lines.size());
    EXPECT_EQ(parse_ntriples(serialize_ntriples(g)), g);
    std::size_t edges = 0;
    for (const auto& node : g.nodes()) {
      for (const auto& e : g.neighbors(node)) {
        EXPECT_TRUE(g.triples().count(Triple{node, e.predicate, Term::iri(e.object)}));
        ++edges;
      }
    }
    std::size_t iri_objects = 0;
    for (const auto& t : g.triples()) iri_objects += t.object.is_iri();
    EXPECT_EQ(edges, iri_objects);
  }
}

TEST(Graph, LoadsGzipAndPlain) {
  TempDir dir("kg");
  const std::string nt = "<a:s> <a:p> <a:o> .\n<a:s> <a:p> \"x\" .\n";
  cbe::testing::write_text(dir / "g.nt", nt);
  gzFile f = gzopen((dir / "g.nt.gz").c_str(), "wb");
  gzwrite(f, nt.data(), static_cast<unsigned>(nt.size()));
  gzclose(f);
  EXPECT_EQ(load_ntriples(dir / "g.nt").size(), 2u);
  EXPECT_EQ(load_ntriples(dir / "g.nt.gz"), load_ntriples(dir / "g.nt"));
  EXPECT_CBE_ERROR(load_ntriples(dir / "missing.nt"), IoError);
}

TEST(Qid, Validation) {
  EXPECT_TRUE(is_valid_qid("Q111780867"));
  EXPECT_FALSE(is_valid_qid("Q"));
  EXPECT_FALSE(is_valid_qid("q12"));
  EXPECT_FALSE(is_valid_qid("P31"));
  EXPECT_FALSE(is_valid_qid("Q12a"));
  EXPECT_EQ(qid_to_iri("Q5"), kWd + "Q5");
  EXPECT_EQ(iri_to_qid(kWd + "Q5"), "Q5");
  EXPECT_EQ(iri_to_qid("Q5"), "Q5");
  EXPECT_EQ(iri_to_qid("http://example.org/Q5"), "");
}

TEST(Additions, FatspoGainsItsTriple) {
  const auto g = parse_ntriples("<a:s> <a:p> <a:o> .\n");
  const Triple t{kWd + "Q111780867", kP + "P31", Term::iri(kWd + "Q7725634")};
  const ConceptAddition add{"fatspo", "Q111780867", {t}};
  const auto g2 = apply_additions(g, {add});
  EXPECT_EQ(g2.size(), 2u);
  EXPECT_TRUE(g2.triples().count(t));
  EXPECT_EQ(apply_additions(g2, {add}), g2);
  EXPECT_EQ(apply_additions(g, {}), g);
  EXPECT_CBE_ERROR(apply_additions(g, {ConceptAddition{"bad", "X1", {}}}), InvalidQid);
}

TEST(Additions, ShippedFileParses) {
  const auto adds = load_additions(cbe::testing::data_dir() / "additions_default.tsv");
  ASSERT_EQ(adds.size(), 5u);
  std::map<std::string, std::string> by_label;
  for (const auto& a : adds) by_label[a.label] = a.qid;
  EXPECT_EQ(by_label.at("fatspo"), "Q111780867");
  EXPECT_EQ(by_label.at("Meanspo"), "Q111781194");
  EXPECT_EQ(by_label.at("Food avoidance emotional disorder"), "Q108760799");
  EXPECT_EQ(by_label.at("Addictive Eaters Anonymous"), "Q111781180");
  EXPECT_EQ(by_label.at("Ultra-processed food"), "Q111781198");
  const auto g = apply_additions(KnowledgeGraph{}, adds);
  EXPECT_EQ(g.size(), 5u);
}

TEST(Additions, ParseErrors) {
  EXPECT_CBE_ERROR(parse_additions("x\tQ1\tP31\n"), ParseError);
  EXPECT_CBE_ERROR(parse_additions("x\tZ1\tP31\tQ2\n"), InvalidQid);
  const auto adds = parse_additions("x\tQ1\t<a:p>\tQ2\nx\tQ1\t<a:p>\t\"lbl\"@en\n");
  ASSERT_EQ(adds.size(), 1u);
  EXPECT_EQ(adds[0].triples.size(), 2u);
  EXPECT_EQ(adds[0].triples[0].object, Term::iri(kWd + "Q2"));
}
