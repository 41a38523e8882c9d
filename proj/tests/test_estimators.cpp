#include "helpers.hpp"

#include "mobility/error.hpp"
#include "mobility/estimators.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mobility;
using doctest::Approx;

namespace {

double copula_rank_slope(double rho) { return 6.0 / std::numbers::pi * std::asin(rho / 2.0); }

std::vector<EstimateRecord> line(double a, double b, int from, int to, const std::string& label = "all")
{
    std::vector<EstimateRecord> out;
    for (int t = from; t <= to; ++t) out.push_back({t, a + b * (t - from), 0, 0, 100, label});
    return out;
}

PairRecord pair(int cohort, Sex sex, double child, std::optional<double> father, std::optional<double> mother)
{
    PairRecord p;
    p.child_cohort = cohort;
    p.child_sex = sex;
    p.child_income = child;
    p.father_income = father;
    p.mother_income = mother;
    if (father) p.father = 0;
    if (mother) p.mother = 1;
    double s = 0;
    int k = 0;
    for (auto v : {father, mother})
        if (v) s += *v, ++k;
    p.parent_income = s / k;
    return p;
}

} // namespace

TEST_CASE("ira basics")
{
    const Eigen::VectorXd r = percentile_ranks(testing_support::normals(1000, 1));
    const auto same = ira(r, r);
    CHECK(same.slope == Approx(1.0).epsilon(1e-12));
    CHECK(same.intercept == Approx(0.0).epsilon(1e-9));
    CHECK(same.n == 1000);

    Eigen::VectorXd flat = Eigen::VectorXd::Constant(10, 50.0);
    try {
        ira(r.head(10), flat);
        FAIL("expected degenerate regressor");
    } catch (const DegenerateError& e) {
        CHECK(std::string(e.what()).find("degenerate regressor") != std::string::npos);
    }
}

TEST_CASE("ira of independent and copula-linked ranks")
{
    const Eigen::Index n = 100000;
    const Eigen::VectorXd a = percentile_ranks(testing_support::normals(n, 2));
    const Eigen::VectorXd b = percentile_ranks(testing_support::normals(n, 3));
    CHECK(std::abs(ira(a, b).slope) < 0.01);

    for (double rho : {0.1, 0.3, 0.5}) {
        const auto [x, y] = testing_support::bivariate_normal(n, rho, 4);
        const auto fit = ira(percentile_ranks(y), percentile_ranks(x));
        CHECK(std::abs(fit.slope - copula_rank_slope(rho)) < 0.01);
        CHECK(fit.se_slope > 0);
        CHECK(std::abs(fit.slope) <= 1 + 1e-9);
    }
}

TEST_CASE("ira is invariant to monotone transforms of either margin")
{
    const auto [x, y] = testing_support::bivariate_normal(5000, 0.4, 5);
    const auto base = ira(percentile_ranks(y), percentile_ranks(x));
    const Eigen::VectorXd ex = (2.0 * x).array().exp();
    const Eigen::VectorXd cy = y.array().cube() + 3.0;
    const auto moved = ira(percentile_ranks(cy), percentile_ranks(ex));
    CHECK(moved.slope == base.slope);
}

TEST_CASE("ige")
{
    const Eigen::VectorXd parent = (testing_support::normals(2000, 6).array() + 10).exp();
    CHECK(ige(parent, parent).slope == Approx(1.0));
    const auto scaled = ige((3.0 * parent).eval(), parent);
    CHECK(scaled.slope == Approx(1.0));
    CHECK(scaled.intercept == Approx(std::log(3.0)));

    SUBCASE("planted elasticity")
    {
        const Eigen::Index n = 50000;
        const Eigen::VectorXd x = testing_support::normals(n, 7);
        const Eigen::VectorXd e = testing_support::normals(n, 8);
        const Eigen::VectorXd p = (x.array() + 10).exp();
        const Eigen::VectorXd c = (0.4 * x.array() + 0.5 * e.array() + 10).exp();
        CHECK(std::abs(ige(c, p).slope - 0.4) < 0.02);
    }
    SUBCASE("zeros are excluded and counted")
    {
        Eigen::VectorXd c = parent.head(10), p = parent.head(10);
        c(0) = 0;
        p(3) = 0;
        CHECK(ige(c, p).n == 8);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(10);
        z(0) = 1;
        CHECK_THROWS_AS(ige(z, p), DegenerateError);
    }
    SUBCASE("rescaling either generation leaves the slope unchanged")
    {
        const auto [x, y] = testing_support::bivariate_normal(3000, 0.3, 9);
        const Eigen::VectorXd p = x.array().exp(), c = y.array().exp();
        const double s = ige(c, p).slope;
        CHECK(ige((7.5 * c).eval(), p).slope == Approx(s).epsilon(1e-12));
        CHECK(ige(c, (0.01 * p).eval()).slope == Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("participation filter")
{
    PairTable t;
    t.pairs = {pair(1960, Sex::male, 0, 10, 0), pair(1960, Sex::female, 5, 10, 3), pair(1960, Sex::male, 20, 0, std::nullopt),
               pair(1960, Sex::male, 20, 30, std::nullopt)};
    CHECK(participation_filter(t, 0, ParticipationScope::child).pairs.size() == 3);
    CHECK(participation_filter(t, 0, ParticipationScope::parent).pairs.size() == 2);
    CHECK(participation_filter(t, 0, ParticipationScope::both).pairs.size() == 2);
    CHECK(participation_filter(t, 5, ParticipationScope::child).pairs.size() == 2); // strict
    CHECK(participation_filter(t, 1e9, ParticipationScope::both).pairs.empty());

    SUBCASE("known share below the threshold")
    {
        PairTable big;
        for (int i = 0; i < 1000; ++i) big.pairs.push_back(pair(1960, Sex::male, i < 120 ? 5000 : 50000, 40000, 30000));
        CHECK(participation_filter(big, 10000, ParticipationScope::child).pairs.size() == 880);
    }
}

TEST_CASE("estimate_ira per spec and cohort")
{
    PairTable t;
    NormalStream z(10);
    for (int c : {1960, 1961})
        for (int i = 0; i < 400; ++i) {
            const double f = std::exp(z()), m = std::exp(z());
            t.pairs.push_back(pair(c, i % 2 ? Sex::male : Sex::female, f * std::exp(z()), f, m));
        }
    const auto est = estimate_ira(t, standard_specs());
    CHECK(est.size() == 10);
    for (const auto& e : est) CHECK(std::isfinite(e.slope));
    const auto round = estimates_from_tsv(parse_tsv(estimates_tsv(est).to_string()));
    REQUIRE(round.size() == est.size());
    CHECK(round[3].slope == est[3].slope);
    CHECK(round[3].spec_label == est[3].spec_label);
}

TEST_CASE("trend_fit")
{
    CHECK(trend_fit(line(0.2, 0, 1960, 1970), {1960, 1970}).slope_x100 == Approx(0.0).scale(1));

    std::vector<EstimateRecord> l;
    for (int t = 1962; t <= 1979; ++t) l.push_back({t, 0.18 + 0.003 * (t - 1962), 0, 0, 0, "all"});
    const auto tr = trend_fit(l, {1962, 1979});
    CHECK(std::abs(tr.slope_x100 - 0.3) < 1e-12);
    CHECK(format_fixed(tr.slope_x100, 3) == "0.300");
    CHECK(tr.se_x100 < 1e-10);

    CHECK_THROWS(trend_fit(line(0.2, 0.01, 1960, 1960), {1960, 1960}));
    CHECK_THROWS(trend_fit(line(0.2, 0.01, 1960, 1960), {1955, 1965}));
}

TEST_CASE("trend equality test")
{
    NormalStream z(12);
    std::vector<EstimateRecord> a, b, c;
    for (int t = 1960; t <= 1990; ++t) {
        a.push_back({t, 0.20 + 0.003 * (t - 1960) + 0.002 * z(), 0, 0, 0, "a"});
        b.push_back({t, 0.25 + 0.003 * (t - 1960) + 0.002 * z(), 0, 0, 0, "b"});
        c.push_back({t, 0.20 - 0.003 * (t - 1960) + 0.002 * z(), 0, 0, 0, "c"});
    }
    CHECK(trend_equality_pvalue(a, b, {1960, 1990}) > 0.01);
    CHECK(trend_equality_pvalue(a, c, {1960, 1990}) < 1e-6);
}

TEST_CASE("duncan index")
{
    const std::vector<double> f{0.7, 0.3}, m{0.4, 0.6};
    CHECK(duncan_index(f, f) == 0.0);
    CHECK(duncan_index(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 1.0);
    CHECK(duncan_index(f, m) == Approx(0.3).epsilon(1e-15));
    CHECK(duncan_index(f, m) == duncan_index(m, f));
    const std::vector<double> f3{0.2, 0.5, 0.3}, m3{0.4, 0.1, 0.5}, f3p{0.3, 0.2, 0.5}, m3p{0.5, 0.4, 0.1};
    CHECK(duncan_index(f3, m3) == Approx(duncan_index(f3p, m3p)).epsilon(1e-15));
    CHECK_THROWS_AS(duncan_index(std::vector<double>{0.5, 0.4}, m), DataError);

    const auto s = segregation_series({{1962, {f, m}}, {1970, {{0.6, 0.4}, {0.45, 0.55}}}}, 1962);
    CHECK(s.normalized.at(1962) == 1.0);
    CHECK(s.normalized.at(1970) == Approx(0.5));
}

TEST_CASE("full-time break correction")
{
    std::map<int, double> series{{1966, .50}, {1967, .52}, {1968, .54}, {1969, .56}, {1970, .58}, {1971, .70}, {1972, .70}};
    const auto c = fulltime_correction(series, 1971, {1966, 1967, 1968, 1969, 1970});
    CHECK(std::abs(c.rate.at(1971) - 0.60) < 1e-12);
    CHECK(std::abs(c.rate.at(1972) - 0.60) < 1e-12);
    CHECK(c.rate.at(1966) == .50);

    SUBCASE("fit through the break value leaves later years unchanged")
    {
        auto s = series;
        s[1971] = 0.60;
        const auto d = fulltime_correction(s, 1971, {1966, 1967, 1968, 1969, 1970});
        CHECK(d.rate.at(1972) == Approx(0.70).epsilon(1e-12));
    }
    SUBCASE("full time stays full time")
    {
        auto s = series;
        s[1972] = 1.0;
        CHECK(fulltime_correction(s, 1971, {1966, 1967, 1968, 1969, 1970}).rate.at(1972) == 1.0);
    }
    SUBCASE("degenerate break level")
    {
        auto s = series;
        s[1971] = 1.0;
        CHECK_THROWS_WITH_AS(fulltime_correction(s, 1971, {1966, 1967, 1968, 1969, 1970}), "degenerate break level",
                             DegenerateError);
    }
}

TEST_CASE("occupational shift")
{
    std::vector<OccupationGroupStats> same{{0, 100, 100, 9}, {1, 50, 50, 12}, {2, 25, 25, 15}};
    const auto flat = occupational_shift(same);
    CHECK(flat.slope == Approx(0.0).scale(1));
    for (const auto& r : flat.rows) CHECK(r.delta_share == Approx(0.0).scale(1));

    CHECK_THROWS_AS(occupational_shift(std::vector<OccupationGroupStats>{{0, 10, 20, 12}}), DegenerateError);

    SUBCASE("planted slope")
    {
        // Equal group sizes before; after-shares move by 0.01 per year of education around the mean.
        const std::vector<double> edu{8, 10, 12, 14, 16};
        std::vector<OccupationGroupStats> g;
        for (int i = 0; i < 5; ++i)
            g.push_back({i, 200, 1000 * (0.2 + 0.01 * (edu[static_cast<std::size_t>(i)] - 12)), edu[static_cast<std::size_t>(i)]});
        const auto s = occupational_shift(g);
        CHECK(s.slope == Approx(0.01).epsilon(1e-9));
    }
    SUBCASE("groups empty in both windows are dropped")
    {
        std::vector<OccupationGroupStats> g{{0, 10, 20, 10}, {1, 0, 0, 0}, {2, 30, 10, 14}};
        const auto s = occupational_shift(g);
        CHECK(s.dropped == std::vector<int>{1});
        CHECK(s.rows.size() == 2);
    }
}
