#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "ontonorm/error.hpp"
#include "ontonorm/ontology.hpp"

namespace ontonorm {
namespace {

TEST(OntoId, AcceptsCanonicalUnderscoreAndIri) {
  EXPECT_EQ(OntoId::parse("HP:0001251").str(), "HP:0001251");
  EXPECT_EQ(OntoId::parse("HP_0001251").str(), "HP:0001251");
  EXPECT_EQ(OntoId::parse("hp:0001251").str(), "HP:0001251");
  EXPECT_EQ(OntoId::parse(" HP:0001251 ").str(), "HP:0001251");
  EXPECT_EQ(OntoId::parse("http://purl.obolibrary.org/obo/HP_0001251").str(), "HP:0001251");
  EXPECT_EQ(normalize_id("hp_0000001"), OntoId::parse("HP:0000001"));
}

TEST(OntoId, RejectsMalformed) {
  for (const char* raw : {"HP:123", "HP:12345678", "HP:00012a1", "MP:0001251", "HP0001251", "", "HP:"}) {
    EXPECT_THROW(OntoId::parse(raw), InvalidIdError) << raw;
    EXPECT_FALSE(OntoId::try_parse(raw)) << raw;
  }
}

TEST(OntoId, OrderingAndHash) {
  auto a = OntoId::parse("HP:0000001");
  auto b = OntoId::parse("HP:0000002");
  EXPECT_LT(a, b);
  EXPECT_EQ(std::hash<OntoId>{}(a), std::hash<OntoId>{}(OntoId::parse("HP_0000001")));
}

TEST(OntologyCsv, ExcerptCountsWithObsoleteExcluded) {
  auto parsed = parse_ontology_csv(testing::read_source_file("tests/data/hpo_excerpt.csv"), {'|', true});
  EXPECT_EQ(parsed.concepts.size(), 50u);
  EXPECT_EQ(parsed.skipped_non_hp, 3u);
  EXPECT_EQ(parsed.skipped_obsolete, 2u);
  EXPECT_EQ(parsed.skipped_unlabeled, 0u);
  EXPECT_EQ(parsed.concepts.front().id.str(), "HP:9000001");
  EXPECT_EQ(parsed.concepts.front().label, "Gait ataxia");
}

TEST(OntologyCsv, ObsoleteRowsKeptByDefault) {
  auto parsed = parse_ontology_csv(testing::read_source_file("tests/data/hpo_excerpt.csv"));
  EXPECT_EQ(parsed.concepts.size(), 52u);
  EXPECT_EQ(parsed.skipped_obsolete, 0u);
}

TEST(OntologyCsv, SynonymCellSplitsOnDelimiterOnly) {
  auto parsed = parse_ontology_csv(testing::read_source_file("tests/data/hpo_excerpt.csv"), {'|', true});
  const auto& prox = parsed.concepts[25];
  EXPECT_EQ(prox.label, "Proximal muscle weakness");
  EXPECT_EQ(prox.synonyms,
            (std::vector<std::string>{"Weakness of proximal muscles", "Proximal weakness", "Weakness, proximal"}));
}

TEST(OntologyCsv, SynonymEqualToLabelOrDuplicateIsDropped) {
  auto parsed = parse_ontology_csv(testing::read_source_file("tests/data/hpo_excerpt.csv"), {'|', true});
  EXPECT_TRUE(parsed.concepts[1].synonyms.empty());  // Nystagmus|Nystagmus
  EXPECT_TRUE(parsed.concepts[6].synonyms.empty());  // blank cell
  EXPECT_EQ(parsed.concepts[8].synonyms, (std::vector<std::string>{"Dystonic movements", "Dystonic posturing"}));
}

TEST(OntologyCsv, RowErrors) {
  const std::string header = "Class ID,Preferred Label,Synonyms\n";
  EXPECT_THROW(parse_ontology_csv(header + "http://purl.obolibrary.org/obo/HP_12,Bad,\n"), ParseError);
  EXPECT_THROW(parse_ontology_csv(header + "HP:0000001,A,\nHP_0000001,B,\n"), ParseError);
  EXPECT_THROW(parse_ontology_csv("Class ID,Label\nHP:0000001,A\n"), ParseError);
  EXPECT_THROW(parse_ontology_csv(""), ParseError);
  auto parsed = parse_ontology_csv(header + "HP:0000001,,\nHP:0000002,Tab\there,\n");
  EXPECT_EQ(parsed.skipped_unlabeled, 1u);
  EXPECT_EQ(parsed.concepts.at(0).label, "Tab here");
}

TEST(OntologyCsv, CustomDelimiter) {
  auto parsed = parse_ontology_csv("Class ID,Preferred Label,Synonyms\nHP:0000001,A,x;y\n", {';', false});
  EXPECT_EQ(parsed.concepts[0].synonyms, (std::vector<std::string>{"x", "y"}));
}

TEST(EntryTable, LabelThenSynonymsInInputOrder) {
  auto t = EntryTable::build({{OntoId::parse("HP:0000002"), "B", {"b1", "b2"}}, {OntoId::parse("HP:0000001"), "A", {}}});
  ASSERT_EQ(t.size(), 4u);
  EXPECT_EQ(t[0].surface, "B");
  EXPECT_EQ(t[0].kind, EntryKind::PrimaryLabel);
  EXPECT_EQ(t[1].surface, "b1");
  EXPECT_EQ(t[1].kind, EntryKind::Synonym);
  EXPECT_EQ(t[3].surface, "A");
  ASSERT_NE(t.find(OntoId::parse("HP:0000001")), nullptr);
  EXPECT_EQ(t.find(OntoId::parse("HP:0000009")), nullptr);
}

TEST(EntryTable, Preconditions) {
  EXPECT_THROW(EntryTable::build({}), PreconditionError);
  EXPECT_THROW(EntryTable::build({{OntoId::parse("HP:0000001"), "  ", {}}}), PreconditionError);
  EXPECT_THROW(EntryTable::build({{OntoId::parse("HP:0000001"), "A", {}}, {OntoId::parse("HP:0000001"), "B", {}}}),
               PreconditionError);
}

TEST(EntryTable, ExcerptEntryCountIsLabelsPlusSynonyms) {
  auto parsed = parse_ontology_csv(testing::read_source_file("tests/data/hpo_excerpt.csv"), {'|', true});
  std::size_t synonyms = 0;
  for (const auto& c : parsed.concepts) synonyms += c.synonyms.size();
  EXPECT_EQ(synonyms, 77u);
  auto t = build_entry_table(parsed.concepts);
  EXPECT_EQ(t.size(), 127u);
}

TEST(EntryTable, SerializeRoundTripIsByteIdentical) {
  auto parsed = parse_ontology_csv(testing::read_source_file("tests/data/hpo_excerpt.csv"));
  auto t = build_entry_table(parsed.concepts);
  std::string once = serialize_entry_table(t);
  std::string twice = serialize_entry_table(parse_entry_table(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once.substr(0, 16), "surface\tid\tkind\n");
}

TEST(EntryTable, RoundTripProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto fx = testing::random_retrieval_fixture(rng, 1 + trial * 7, 4);
    const EntryTable& t = fx.index->table();
    EntryTable back = parse_entry_table(serialize_entry_table(t));
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(back[i], t[i]);
  }
}

TEST(EntryTable, ParseRejectsBadRows) {
  EXPECT_THROW(parse_entry_table("wrong header\n"), ParseError);
  EXPECT_THROW(parse_entry_table("surface\tid\tkind\nx\tHP:0000001\tsynonym\n"), ParseError);
  EXPECT_THROW(parse_entry_table("surface\tid\tkind\nx\tHP:1\tlabel\n"), ParseError);
  EXPECT_THROW(parse_entry_table("surface\tid\tkind\nx\tHP:0000001\tother\n"), ParseError);
  EXPECT_THROW(parse_entry_table("surface\tid\tkind\n"), ParseError);
}

}  // namespace
}  // namespace ontonorm
