#include "helpers.hpp"

#include "mobility/calibration.hpp"
#include "mobility/decomposition.hpp"
#include "mobility/synthetic.hpp"

#include <doctest.h>

#include <cmath>

using namespace mobility;
using doctest::Approx;

namespace {

ModelParams params(double psi, double kappa, double alpha, double phi_m, double phi_d)
{
    return {psi, kappa, alpha, 1.0, phi_m, 1.0, phi_d};
}

CalibrationSettings fast_settings(std::size_t n_sim)
{
    CalibrationSettings s;
    s.n_sim = n_sim;
    return s;
}

/// Replaces every map by a strictly increasing transform of itself.
RoleMaps transformed(const RoleMaps& maps)
{
    auto warp = [](const QuantileMap& m) {
        std::vector<double> v = m.values();
        for (auto& x : v) x = std::sqrt(x) + 0.001 * x;
        return QuantileMap::from_knots(m.probabilities(), v);
    };
    return {warp(maps.father), warp(maps.mother), warp(maps.son), warp(maps.daughter)};
}

} // namespace

TEST_CASE("moment vector limits")
{
    // no zero mass anywhere, so no rank ties
    const auto father = reference_maps().father;
    const RoleMaps maps{father, father, father, father};
    const auto ones = moment_vector(moment_data(simulate_population(params(1, 1, 1, 1, 1), maps, 50000, 1)));
    for (double b : ones.beta) CHECK(std::abs(b - 1.0) < 0.01);

    const auto zeros = moment_vector(moment_data(simulate_population(params(0, 0, 0.5, 1, 1), maps, 50000, 1)));
    for (double b : zeros.beta) CHECK(std::abs(b) < 0.02);

    const auto sweden =
        moment_vector(moment_data(simulate_population(sweden_1951_params(), reference_maps(), 100000, 1)));
    CHECK(std::abs(sweden[3] - 0.074) < 0.03);
}

TEST_CASE("rank moments absorb the earnings maps; pooled simulation does not")
{
    const auto maps = reference_maps();
    const auto warped = transformed(maps);
    const auto draws = draw_base(50000, 2);
    const auto p = sweden_1951_params();
    const auto a = simulate_from_draws(p, maps, draws);
    const auto b = simulate_from_draws(p, warped, draws);
    const auto ma = moment_vector(moment_data(a));
    const auto mb = moment_vector(moment_data(b));
    // Every moment here ranks each role within itself, so all five are
    // unchanged, including the father-on-mother-ventile one.
    for (std::size_t i = 0; i < 5; ++i) CHECK(ma[i] == Approx(mb[i]).epsilon(1e-12));
    // Joint parental earnings add two mapped margins: the pooled slope moves.
    CHECK(std::abs(pooled_ira(a) - pooled_ira(b)) > 1e-4);
}

TEST_CASE("empirical and simulated inputs share one code path")
{
    const auto maps = reference_maps();
    const auto p = sweden_1951_params();
    const std::uint64_t seed = 3;
    const auto data = generate_synthetic(std::vector<PlantedCohort>{{1951, p}}, maps, 20000, seed);
    const auto pairs = build_pairs(data.persons);
    const auto from_file = moment_vector(moment_data(pairs, 1951));
    const auto native = moment_vector(moment_data(simulate_population(p, maps, 20000, stream_seed(seed, 1951))));
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(from_file[i] - native[i]) < 0.01);
}

TEST_CASE("common random numbers make the loss deterministic")
{
    const SimulatedMoments sim(reference_maps(), 20000, 4);
    const auto target = sim(sweden_1951_params());
    const auto q = params(0.3, 0.4, 0.5, 0.6, 0.7);
    const double l1 = moment_loss(sim(q), target, {1, 1, 1, 1, 1});
    const double l2 = moment_loss(sim(q), target, {1, 1, 1, 1, 1});
    CHECK(std::memcmp(&l1, &l2, sizeof l1) == 0);
    CHECK(moment_loss(target, target, {1, 1, 1, 1, 1}) == 0.0);
}

TEST_CASE("fixed point: targets generated at the initial point")
{
    const auto settings = fast_settings(20000);
    const SimulatedMoments sim(reference_maps(), settings.n_sim, settings.seed);
    const auto init = params(0.2, 0.3, 0.6, 0.4, 0.6);
    const auto r = calibrate_cohort(sim(init), init, settings, sim);
    CHECK(r.iterations == 0);
    CHECK(r.converged);
    CHECK(r.fit_distance < settings.tolerance);
    CHECK(r.params == init);
}

TEST_CASE("planted recovery from a random start")
{
    const auto maps = reference_maps();
    const auto truth = params(0.2, 0.3, 0.6, 0.4, 0.6);
    auto settings = fast_settings(100000);
    // Targets from an independent simulation, so recovery is up to sampling noise.
    const auto targets = SimulatedMoments(maps, 100000, 777)(truth);
    const SimulatedMoments sim(maps, settings.n_sim, settings.seed);
    const auto init = random_init(11, settings);
    const auto r = calibrate_cohort(targets, init, settings, sim);
    for (Parameter p : kCalibratedParameters) CHECK(std::abs(get(r.params, p) - get(truth, p)) < 0.05);
    CHECK(r.fit_distance < 1e-4);

    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].loss <= r.trace[i - 1].loss);
    for (const auto& t : r.trace) {
        CHECK(project(t.params, settings) == t.params);
    }
}

TEST_CASE("loss is locally identified at the truth")
{
    const auto maps = reference_maps();
    const auto truth = sweden_1951_params();
    const auto targets = SimulatedMoments(maps, 50000, 888)(truth);
    const SimulatedMoments sim(maps, 50000, 5);
    const std::array<double, 5> w{1, 1, 1, 1, 1};
    const double at_truth = moment_loss(sim(truth), targets, w);
    for (Parameter p : kCalibratedParameters)
        for (double d : {-0.1, 0.1}) {
            auto q = truth;
            const double v = get(truth, p) + d;
            if (v < 0 || (p != Parameter::phi_m && p != Parameter::phi_d && v > 1)) continue;
            set(q, p, v);
            CHECK(at_truth <= moment_loss(sim(q), targets, w));
        }
}

TEST_CASE("random init and projection stay in the boxes")
{
    CalibrationSettings s;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto p = random_init(seed, s);
        CHECK(project(p, s) == p);
        CHECK(p.phi_m <= 1.5);
    }
    const auto clipped = project(params(-0.5, 1.5, 0.5, 3.0, -1.0), s);
    CHECK(clipped == params(0, 1, 0.5, 2, 0));
    CHECK(random_init(1, s) == random_init(1, s));
    CHECK(!(random_init(1, s) == random_init(2, s)));
}

TEST_CASE("settings validation and error paths")
{
    CalibrationSettings s;
    s.n_sim = 10;
    CHECK_THROWS(s.validate());
    s = {};
    s.tolerance = 0;
    CHECK_THROWS(s.validate());

    const auto settings = fast_settings(5000);
    const SimulatedMoments sim(reference_maps(), settings.n_sim, 1);
    MomentVector bad;
    bad[2] = std::nan("");
    CHECK_THROWS_AS(calibrate_cohort(bad, sweden_1951_params(), settings, sim), Error);
    CHECK_THROWS_AS(calibrate_cohort(bad, params(0.5, 0.5, 0.5, 2.5, 0.5), settings, sim), Error);
}

TEST_CASE("warm-started sequences")
{
    const auto maps = reference_maps();
    auto settings = fast_settings(20000);

    SUBCASE("identical targets give identical parameters")
    {
        const auto targets = SimulatedMoments(maps, settings.n_sim, settings.seed)(sweden_1951_params());
        std::vector<CohortTarget> cohorts;
        for (int c = 1960; c < 1965; ++c) cohorts.push_back({c, targets, maps});
        const auto chain = calibrate_sequence(cohorts, settings);
        REQUIRE(chain.size() == 5);
        for (const auto& c : chain) {
            REQUIRE(c.result);
            CHECK(c.params == chain.front().params);
        }
    }
    SUBCASE("a drifting phi_m path is recovered in order")
    {
        std::vector<CohortTarget> cohorts;
        const SimulatedMoments sim(maps, settings.n_sim, settings.seed);
        std::vector<double> planted;
        for (int k = 0; k < 4; ++k) {
            auto p = sweden_1951_params();
            p.phi_m = 0.25 + 0.1 * k;
            planted.push_back(p.phi_m);
            cohorts.push_back({1960 + k, sim(p), maps});
        }
        const auto chain = calibrate_sequence(cohorts, settings, sweden_1951_params());
        for (std::size_t k = 0; k < chain.size(); ++k) CHECK(std::abs(chain[k].params.phi_m - planted[k]) < 0.02);
        for (std::size_t k = 1; k < chain.size(); ++k) CHECK(chain[k].params.phi_m > chain[k - 1].params.phi_m);
    }
    SUBCASE("cohorts must be ordered")
    {
        const auto t = MomentVector{};
        CHECK_THROWS(calibrate_sequence({{1961, t, maps}, {1960, t, maps}}, settings));
    }
}

TEST_CASE("calibration TSV round trips")
{
    std::vector<std::pair<int, MomentVector>> t{{1951, MomentVector{{0.1, 0.2, 0.3, 0.4, 0.5}}}};
    const auto back = targets_from_tsv(parse_tsv(targets_tsv(t).to_string()));
    CHECK(back == t);

    CohortCalibration c;
    c.cohort = 1951;
    c.params = sweden_1951_params();
    c.result = CalibratedParams{c.params, {}, 1e-6, 4, true, {}};
    const std::string text = calibration_tsv({c}, CalibrationSettings{});
    CHECK(text.find("# n_sim=100000") != std::string::npos);
    const auto params_back = params_from_tsv(parse_tsv(text));
    REQUIRE(params_back.size() == 1);
    CHECK(params_back[0].second == sweden_1951_params());
}
