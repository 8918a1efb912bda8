#include <doctest.h>

#include <random>

#include "linnaeus/error.hpp"
#include "linnaeus/taxonomy.hpp"

using namespace linnaeus;

namespace {

std::string one_node_schema() {
  return R"({"name":"tiny","version":"1","nodes":[{"id":"alpha","level":"top","description":"a"}]})";
}

}  // namespace

TEST_SUITE("taxonomy") {
  TEST_CASE("default schema has 18 top and 38 sub nodes") {
    const auto& tax = Taxonomy::default_taxonomy();
    CHECK(tax.name() == "linnaeus-v1");
    CHECK(tax.top_level().size() == 18);
    CHECK(tax.sub_level().size() == 38);
    for (const auto& s : tax.sub_level()) CHECK(tax.node(s).parent.has_value());
  }

  TEST_CASE("single-node schema") {
    auto tax = Taxonomy::parse(one_node_schema());
    CHECK(tax.size() == 1);
    CHECK(tax.is_leaf(TagId("alpha")));
  }

  TEST_CASE("schema errors") {
    CHECK_THROWS_AS(Taxonomy::parse(R"({"name":"x","version":"1","nodes":[
      {"id":"government","level":"top"},{"id":"finance","level":"top"},
      {"id":"executive","level":"sub","parent":"government"},
      {"id":"executive","level":"sub","parent":"finance"}]})"),
                    DataError);
    CHECK_THROWS_AS(Taxonomy::parse(R"({"name":"x","version":"1","nodes":[
      {"id":"a","level":"top"},{"id":"b","level":"sub","parent":"nope"}]})"),
                    DataError);
    CHECK_THROWS_AS(Taxonomy::parse(R"({"name":"x","version":"1","nodes":[
      {"id":"a","level":"top"},{"id":"b","level":"sub"}]})"),
                    DataError);
    CHECK_THROWS_AS(Taxonomy::parse(R"({"name":"x","version":"1","nodes":[
      {"id":"a","level":"top"},{"id":"b","level":"sub","parent":"a"},{"id":"c","level":"sub","parent":"b"}]})"),
                    DataError);
    CHECK_THROWS_AS(Taxonomy::parse("{not json"), DataError);
  }

  TEST_CASE("validate_tagset") {
    const auto& tax = Taxonomy::default_taxonomy();
    CHECK(tax.validate_tagset(make_tagset({"government", "government.executive", "government.national"})).ok());
    auto bad = tax.validate_tagset(make_tagset({"government.executive"}));
    REQUIRE_FALSE(bad.ok());
    CHECK(bad.violations[0].rule == Violation::Rule::parent_missing);
    CHECK(bad.violations[0].tag == TagId("government.executive"));
    CHECK(tax.validate_tagset({}).ok());
    auto clash = tax.validate_tagset(make_tagset({"government", "government.executive", "government.legislative"}));
    REQUIRE_FALSE(clash.ok());
    CHECK(clash.violations[0].rule == Violation::Rule::exclusivity_conflict);
    CHECK_THROWS_AS(tax.validate_tagset(make_tagset({"spaceship"})), DataError);
  }

  TEST_CASE("admissible_subtags") {
    const auto& tax = Taxonomy::default_taxonomy();
    auto gov = tax.admissible_subtags(make_tagset({"government"}));
    CHECK(gov.size() == 8);
    for (const auto& t : gov) CHECK(t.value.rfind("government.", 0) == 0);
    CHECK(tax.admissible_subtags({}).empty());
    CHECK(tax.admissible_subtags(make_tagset({"ixp"})).empty());
    CHECK_THROWS(tax.admissible_subtags(make_tagset({"government.executive"})));
  }

  TEST_CASE("admissible_subtags is monotone") {
    const auto& tax = Taxonomy::default_taxonomy();
    std::mt19937_64 rng(11);
    std::bernoulli_distribution coin(0.3);
    for (int trial = 0; trial < 200; ++trial) {
      TagSet a, b;
      for (const auto& t : tax.top_level()) {
        if (coin(rng)) a.insert(t);
        if (coin(rng)) b.insert(t);
      }
      b.insert(a.begin(), a.end());
      auto sa = tax.admissible_subtags(a), sb = tax.admissible_subtags(b);
      CHECK(std::includes(sb.begin(), sb.end(), sa.begin(), sa.end()));
    }
  }

  TEST_CASE("serialize then load is identity") {
    for (auto name : {"linnaeus-v1", "naicslite-v1", "isic-v1"}) {
      auto tax = Taxonomy::builtin(name);
      auto again = Taxonomy::parse(tax.to_json().dump());
      CHECK(again == tax);
    }
  }

  TEST_CASE("sub-level view rescoring of leaf categories") {
    const auto& tax = Taxonomy::default_taxonomy();
    auto view = tax.sub_level_view(make_tagset({"ixp", "government", "government.national"}));
    CHECK(view == make_tagset({"ixp", "government.national"}));
  }
}
