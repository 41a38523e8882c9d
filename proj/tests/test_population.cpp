#include "helpers.hpp"

#include "mobility/error.hpp"
#include "mobility/population.hpp"
#include "mobility/synthetic.hpp"
#include "mobility/tsv.hpp"

#include <doctest.h>

#include <algorithm>

using namespace mobility;

namespace {

const char* kThreeRows =
    "person_id,birth_year,sex,edu_years,occ_group,father_id,mother_id,inc_1968,inc_1969,inc_1970,inc_2004,inc_2005,inc_2006\n"
    "f1,1920,M,12,3,,,30000,31000,32000,,,\n"
    "m1,1922,F,,10,,,0,0,15000,,,\n"
    "c1,1951,F,14.5,5,f1,m1,,,,20000,21000,22000\n";

} // namespace

TEST_CASE("load three complete rows")
{
    const auto t = parse_microdata(kThreeRows);
    REQUIRE(t.persons.size() == 3);
    CHECK(t.income_years == std::vector<int>{1968, 1969, 1970, 2004, 2005, 2006});
    CHECK(t.persons[0].incomes.at(1969) == 31000);
    CHECK(!t.persons[1].education_years);
    CHECK(t.persons[1].occupation_group == kMissingOccupation);
    CHECK(t.persons[2].father_id == std::optional<std::string>("f1"));
    CHECK(t.persons[2].incomes.count(1968) == 0);
}

TEST_CASE("negative income is rejected at its cell")
{
    const std::string text = "person_id,birth_year,sex,inc_2000,inc_2001\n"
                             "a,1960,M,10,20\n"
                             "b,1960,F,-5,20\n";
    try {
        parse_microdata(text);
        FAIL("expected a parse error");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("inc_2000") != std::string::npos);
    }
}

TEST_CASE("duplicate ids and bad codes are rejected")
{
    CHECK_THROWS_AS(parse_microdata("person_id,birth_year,sex,inc_2000\na,1960,M,1\na,1961,F,2\n"), DataError);
    CHECK_THROWS_AS(parse_microdata("person_id,birth_year,sex,inc_2000\na,1960,X,1\n"), DataError);
    CHECK_THROWS_AS(parse_microdata("person_id,birth_year,sex,occ_group,inc_2000\na,1960,M,11,1\n"), DataError);
    CHECK_THROWS_AS(parse_microdata("person_id,birth_year,sex,inc_2000\na,1760,M,1\n"), DataError);
}

TEST_CASE("writer is lossless and a fixed point")
{
    const auto t = parse_microdata(kThreeRows);
    const std::string once = write_microdata(t);
    CHECK(once == kThreeRows);
    CHECK(write_microdata(parse_microdata(once)) == once);
}

TEST_CASE("synthetic file round-trips byte for byte")
{
    const std::vector<PlantedCohort> chain{{1960, sweden_1951_params()}, {1961, sweden_1951_params()}};
    const auto data = generate_synthetic(chain, reference_maps(), 200, 5);
    const auto dir = testing_support::scratch_dir("roundtrip");
    save_synthetic(dir / "pop.csv", data);
    const std::string bytes = read_text_file(dir / "pop.csv");
    const auto reloaded = load_microdata(dir / "pop.csv");
    CHECK(reloaded.persons.size() == data.persons.persons.size());
    CHECK(write_microdata(reloaded) == bytes);
    for (std::size_t i = 0; i < reloaded.persons.size(); i += 37) {
        CHECK(reloaded.persons[i].incomes == data.persons.persons[i].incomes);
        CHECK(reloaded.persons[i].education_years == data.persons.persons[i].education_years);
    }
}

TEST_CASE("average_income")
{
    PersonRecord p;
    p.incomes = {{2000, 0}, {2001, 0}, {2002, 30}};
    CHECK(average_income(p, {2000, 2001, 2002})->value == 10);

    p.incomes = {{2000, 12}, {2001, 12}, {2002, 12}};
    CHECK(average_income(p, {2000, 2001, 2002})->value == 12);

    SUBCASE("resident years without a record count as zero")
    {
        PersonRecord q;
        q.incomes = {{2001, 30}};
        const auto a = average_income(q, {2000, 2001, 2002});
        CHECK(a->value == 10);
        CHECK(!a->partial);
    }
    SUBCASE("not resident in any window year")
    {
        PersonRecord q;
        q.resident_from = 2010;
        CHECK(!average_income(q, {2000, 2001, 2002}));
    }
    SUBCASE("partial residency averages over resident years and is flagged")
    {
        PersonRecord q;
        q.resident_from = 2001;
        q.incomes = {{2001, 10}, {2002, 20}};
        const auto a = average_income(q, {2000, 2001, 2002});
        CHECK(a->value == 15);
        CHECK(a->years_used == 2);
        CHECK(a->partial);
    }
    CHECK_THROWS_AS(average_income(p, {}), Error);
}

TEST_CASE("average_income is order invariant and exact for cents")
{
    PersonRecord p;
    p.incomes = {{2000, 1234.56}, {2001, 0.01}, {2002, 98765.43}};
    const double total = 1234.56 + 0.01 + 98765.43; // years in ascending order
    CHECK(average_income(p, {2000, 2001, 2002})->value == total / 3);
    CHECK(average_income(p, {2002, 2000, 2001})->value == average_income(p, {2000, 2001, 2002})->value);
}

TEST_CASE("build_pairs")
{
    const std::string text =
        "person_id,birth_year,sex,father_id,mother_id,inc_1968,inc_1969,inc_1970,inc_1986,inc_1987,inc_1988\n"
        "f1,1920,M,,,30,30,30,,,\n"
        "m1,1922,F,,,0,0,15,,,\n"
        "c1,1951,F,f1,m1,,,,20,20,20\n"
        "c2,1951,M,f1,,,,,10,11,12\n"
        "c3,1951,M,,,,,,10,10,10\n"
        "c4,1951,M,ghost,,,,,10,10,10\n";
    const auto persons = parse_microdata(text);
    const auto pairs = build_pairs(persons);

    REQUIRE(pairs.pairs.size() == 2);
    const auto& both = pairs.pairs[0];
    CHECK(both.child_cohort == 1951);
    CHECK(both.child_income == 20);
    CHECK(*both.father_income == 30);
    CHECK(*both.mother_income == 5);
    CHECK(both.parent_income == 17.5);

    const auto& single = pairs.pairs[1];
    CHECK(!single.mother);
    CHECK(single.child_income == 11);
    CHECK(single.parent_income == 30);

    // c4 names a parent who is not in the file: counted as having no parent.
    CHECK(pairs.exclusions.candidates == 3);
    CHECK(pairs.exclusions.no_parent == 1);
    CHECK(pairs.exclusions.dangling_links == 1);
    CHECK(pairs.exclusions.candidates == pairs.pairs.size() + pairs.exclusions.total());
}

TEST_CASE("pair counts are conserved on a synthetic population")
{
    auto data = generate_synthetic(std::vector<PlantedCohort>{{1955, sweden_1951_params()}}, reference_maps(), 1000, 3);
    auto& persons = data.persons.persons;
    // Knock out links and incomes in a known pattern.
    std::size_t removed_links = 0, removed_income = 0;
    for (std::size_t i = 0; i < persons.size(); ++i) {
        auto& p = persons[i];
        if (!p.father_id) continue;
        if (i % 7 == 0) {
            p.father_id.reset();
            p.mother_id.reset();
            p.mother_id = std::string("nobody");
            ++removed_links;
        } else if (i % 11 == 0) {
            p.resident_from = 3000;
            ++removed_income;
        }
    }
    const auto pairs = build_pairs(data.persons);
    CHECK(pairs.exclusions.candidates == 2000);
    CHECK(pairs.exclusions.no_parent == removed_links);
    CHECK(pairs.exclusions.no_child_income == removed_income);
    CHECK(pairs.pairs.size() + pairs.exclusions.total() == 2000);
}
