#include "helpers.hpp"

#include "mobility/pipeline.hpp"
#include "mobility/synthetic.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <map>

using namespace mobility;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MOBILITY_FIXTURE_DIR;

std::map<std::string, std::string> read_tree(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
    return out;
}

PipelineConfig small_config(const fs::path& out)
{
    PipelineConfig c;
    c.input = kFixtures / "three_cohorts.csv";
    c.output_dir = out;
    c.calibration.n_sim = 5000;
    c.calibration.max_iters = 15;
    c.decompose_n = 5000;
    return c;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string("\"") + MOBILITY_CLI_PATH + "\" " + args + " 2>/dev/null";
    return std::system(cmd.c_str());
}

} // namespace

TEST_CASE("config parsing")
{
    const auto kv = parse_config_text("# comment\nseed = 5\n\n  calib.n_sim=2000  # trailing\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"seed", "5"});
    CHECK(kv[1] == std::pair<std::string, std::string>{"calib.n_sim", "2000"});

    const auto dir = testing_support::scratch_dir("config");
    write_text_file(dir / "run.conf", "seed = 5\nstages = estimate,lw\nranges = 1960-1970\n");
    const auto c = load_config(dir / "run.conf", {{"seed", "9"}});
    CHECK(c.seed == 9);
    CHECK(c.stages == std::vector<Stage>{Stage::estimate, Stage::lw});
    CHECK(c.ranges == std::vector<std::pair<int, int>>{{1960, 1970}});

    PipelineConfig p;
    CHECK_THROWS(p.set("no_such_key", "1"));
    CHECK_THROWS(p.set("seed", "x"));
    CHECK_THROWS(p.set("calib.weights", "1,1"));
    CHECK_THROWS(p.set("participation", "cousins"));

    PipelineConfig a, b;
    a.set("seed", "3");
    b.set("seed", "3");
    CHECK(a.canonical() == b.canonical());
    b.set("seed", "4");
    CHECK(a.canonical() != b.canonical());
}

TEST_CASE("fnv1a")
{
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("estimate-only run")
{
    const auto out = testing_support::scratch_dir("estimate_only");
    auto c = small_config(out);
    c.stages = {Stage::estimate};
    const auto r = run_pipeline(c);
    REQUIRE(r.ok);
    const auto t = load_tsv(out / "estimates.tsv");
    std::map<std::string, int> per_spec;
    const auto spec = t.column("spec");
    for (const auto& row : t.rows) ++per_spec[row[spec]];
    CHECK(per_spec.size() >= 5);
    for (const auto& [s, n] : per_spec) CHECK(n == 3);
    CHECK(!fs::exists(out / "calibration.tsv"));

    const auto m = nlohmann::json::parse(read_text_file(out / "manifest.json"));
    CHECK(m["status"] == "ok");
    CHECK(m["stages"][0]["status"] == "ok");
}

TEST_CASE("full pipeline")
{
    const auto out = testing_support::scratch_dir("full");
    const auto c = small_config(out);
    const auto r = run_pipeline(c);
    REQUIRE(r.ok);
    for (const char* f : {"estimates.tsv", "trends.tsv", "lw.tsv", "calibration.tsv", "decomposition.tsv",
                          "beta_tilde.tsv", "manifest.json"})
        CHECK(fs::exists(out / f));
    const auto first = read_tree(out);

    SUBCASE("a rerun is byte-identical")
    {
        REQUIRE(run_pipeline(c).ok);
        CHECK(read_tree(out) == first);
    }
    SUBCASE("thread count does not change results")
    {
        const auto out2 = testing_support::scratch_dir("full_threads");
        ::setenv("MOBILITY_THREADS", "1", 1);
        auto c2 = c;
        c2.output_dir = out2;
        const bool ok = run_pipeline(c2).ok;
        ::unsetenv("MOBILITY_THREADS");
        REQUIRE(ok);
        auto a = first, b = read_tree(out2);
        // the manifest records the output directory
        a.erase("manifest.json");
        b.erase("manifest.json");
        CHECK(a == b);
    }
    SUBCASE("manifest")
    {
        const auto m = nlohmann::json::parse(first.at("manifest.json"));
        CHECK(m["failed_stage"].is_null());
        CHECK(m["config_hash"] == fnv1a_hex(c.canonical()));
        for (const auto& o : m["outputs"])
            CHECK(o["fnv1a"] == fnv1a_hex(first.at(o["file"].get<std::string>())));
    }
}

TEST_CASE("a failing stage is recorded")
{
    const auto out = testing_support::scratch_dir("failing");
    auto c = small_config(out);
    c.stages = {Stage::decompose}; // nothing calibrated yet
    const auto r = run_pipeline(c);
    CHECK(!r.ok);
    const auto m = nlohmann::json::parse(read_text_file(out / "manifest.json"));
    CHECK(m["status"] == "failed");
    CHECK(m["failed_stage"] == "decompose");

    auto bad = small_config(out);
    bad.input = kFixtures / "missing.csv";
    bad.stages = {Stage::estimate};
    CHECK(!run_pipeline(bad).ok);
    // a missing input is caught when the config is validated
    CHECK(nlohmann::json::parse(read_text_file(out / "manifest.json"))["failed_stage"] == "config");
}

TEST_CASE("committed fixtures are reproducible")
{
    const auto dir = testing_support::scratch_dir("fixture_regen");
    REQUIRE(run_cli("synth -o \"" + (dir / "tiny.csv").string() + "\" --cohorts 1951 -n 10 --seed 1") == 0);
    CHECK(read_text_file(dir / "tiny.csv") == read_text_file(kFixtures / "tiny.csv"));
    CHECK(read_text_file(dir / "tiny.csv.truth.tsv") == read_text_file(kFixtures / "tiny.csv.truth.tsv"));

    const auto tiny = load_microdata(kFixtures / "tiny.csv");
    CHECK(tiny.persons.size() == 40);
    CHECK(build_pairs(tiny).pairs.size() == 20);
}

TEST_CASE("cli")
{
    const auto dir = testing_support::scratch_dir("cli");
    const auto a = (dir / "a.csv").string(), b = (dir / "b.csv").string();
    REQUIRE(run_cli("synth -o \"" + a + "\" --cohorts 1960-1961 -n 200 --seed 1") == 0);
    REQUIRE(run_cli("synth -o \"" + b + "\" --cohorts 1960-1961 -n 200 --seed 2") == 0);
    CHECK(read_text_file(a) != read_text_file(b));
    const auto pa = planted_from_tsv(load_tsv(truth_path(a)));
    const auto pb = planted_from_tsv(load_tsv(truth_path(b)));
    REQUIRE(pa.size() == 2);
    REQUIRE(pb.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(pa[i].cohort == pb[i].cohort);
        CHECK(pa[i].params == pb[i].params);
    }

    REQUIRE(run_cli("synth -o \"" + (dir / "p.csv").string() + "\" --cohorts 1960 -n 50 --planted kappa=0.5,phi_m=0.9") ==
            0);
    const auto pp = planted_from_tsv(load_tsv(truth_path(dir / "p.csv")));
    CHECK(pp.at(0).params.kappa == 0.5);
    CHECK(pp.at(0).params.phi_m == 0.9);

    const auto out = (dir / "out").string();
    CHECK(run_cli("estimate -i \"" + a + "\" -o \"" + out + "\"") == 0);
    CHECK(fs::exists(dir / "out" / "estimates.tsv"));
    CHECK(run_cli("estimate -i \"" + a + "\" -o \"" + out + "\" --set bogus=1") != 0);
    CHECK(run_cli("synth -o \"" + a + "\" --planted nonsense=1") != 0);
    CHECK(run_cli("frobnicate") != 0);
}
