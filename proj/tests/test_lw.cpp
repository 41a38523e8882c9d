#include "helpers.hpp"

#include "mobility/error.hpp"
#include "mobility/lw.hpp"
#include "mobility/synthetic.hpp"

#include <doctest.h>

using namespace mobility;
using doctest::Approx;

namespace {

struct Planted {
    Eigen::VectorXd status, child, income, education;
};

/// status s ~ N(0,1); proxies s + e_j with var(e_j) = noise_var[j]; child = beta s + e.
Planted planted(Eigen::Index n, double beta, double income_noise_var, double edu_noise_var, std::uint64_t seed)
{
    NormalStream z(seed);
    Planted p;
    p.status.resize(n);
    p.child.resize(n);
    p.income.resize(n);
    p.education.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = z();
        p.status(i) = s;
        p.income(i) = s + std::sqrt(income_noise_var) * z();
        p.education(i) = s + std::sqrt(edu_noise_var) * z();
        p.child(i) = beta * s + z();
    }
    return p;
}

ProxyMatrix two_proxies(const Planted& p)
{
    Eigen::MatrixXd v(p.income.size(), 2);
    v << p.income, p.education;
    return make_proxy_matrix(v, {"log_income", "education"}, {"income", "education"});
}

} // namespace

TEST_CASE("single proxy collapses to the simple slope")
{
    const auto p = planted(5000, 0.35, 1.0, 1.0, 1);
    const auto m = make_proxy_matrix(p.income, {"log_income"}, {"income"});
    const auto fit = lw_weights(p.child, m);
    CHECK(fit.rho(0) == 1.0);
    const double ols = fit_line(p.child, p.income).slope;
    CHECK(fit.b(0) == Approx(ols).epsilon(1e-12));
    CHECK(lw_beta(fit) == Approx(ols).epsilon(1e-12));
    CHECK(proxy_contributions(fit).at("income") == Approx(1.0).epsilon(1e-12));
    CHECK(lw_index_ranks(fit, m) == percentile_ranks(p.income));
}

TEST_CASE("two equally noisy proxies")
{
    const auto p = planted(100000, 0.35, 1.0, 1.0, 2);
    const auto m = two_proxies(p);
    const auto fit = lw_weights(p.child, m);
    CHECK(fit.rho(0) == 1.0);
    // q = sum of inverse noise variances; beta_lw = beta q / (1 + q).
    const double analytic = 0.35 * 2.0 / 3.0;
    CHECK(std::abs(fit.beta_lw - analytic) < 0.02);
    const double income_only = fit_line(p.child, p.income).slope;
    CHECK(std::abs(fit.beta_lw - 0.35) < std::abs(income_only - 0.35));

    const auto c = proxy_contributions(fit);
    CHECK(c.at("income") == Approx(0.5).epsilon(0.1));
    CHECK(c.at("education") == Approx(0.5).epsilon(0.1));
    CHECK(c.at("income") + c.at("education") == Approx(1.0).epsilon(1e-12));

    const Eigen::VectorXd index = lw_index(fit, m);
    CHECK(testing_support::correlation(index, p.status) > testing_support::correlation(p.income, p.status));
}

TEST_CASE("invariances")
{
    const auto p = planted(20000, 0.35, 1.0, 0.5, 3);
    const auto m = two_proxies(p);
    const auto fit = lw_weights(p.child, m);

    SUBCASE("affine rescale of a non-anchor proxy")
    {
        auto m2 = m;
        m2.values.col(1) = 3.0 * m2.values.col(1).array() + 7.0;
        CHECK(lw_weights(p.child, m2).beta_lw == Approx(fit.beta_lw).epsilon(1e-6));
    }
    SUBCASE("common rescale leaves index ranks unchanged")
    {
        auto m2 = m;
        m2.values *= 2.0;
        const Eigen::VectorXd a = lw_index_ranks(fit, m);
        const Eigen::VectorXd b = lw_index_ranks(lw_weights(p.child, m2), m2);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("uninformative proxy gets near-zero weight")
    {
        auto m3 = m;
        m3.values.col(1) = testing_support::normals(p.income.size(), 99);
        const auto f3 = lw_weights(p.child, m3);
        CHECK(std::abs(f3.rho(1)) < 0.05);
        CHECK(std::abs(proxy_contributions(f3).at("education")) < 0.01);
    }
}

TEST_CASE("error paths")
{
    const auto p = planted(500, 0.35, 1.0, 1.0, 4);
    Eigen::MatrixXd v(500, 2);
    v << p.income, p.income;
    CHECK_THROWS_AS(lw_weights(p.child, make_proxy_matrix(v, {"a", "b"})), DataError);

    Eigen::MatrixXd w(500, 2);
    w << Eigen::VectorXd::Constant(500, 1.0), p.education;
    CHECK_THROWS_WITH_AS(lw_weights(p.child, make_proxy_matrix(w, {"a", "b"})), "uninformative anchor proxy",
                         DegenerateError);

    LWFit zero;
    zero.rho = Eigen::VectorXd::Ones(1);
    zero.b = Eigen::VectorXd::Zero(1);
    zero.labels = {"a"};
    zero.blocks = {"a"};
    CHECK_THROWS_WITH_AS(lw_index(zero, make_proxy_matrix(p.income, {"a"})), "index undefined", DegenerateError);
}

TEST_CASE("proxy matrix construction")
{
    const std::vector<double> income{0, 100, 2000, 50};
    const std::vector<std::optional<double>> edu{12.0, std::nullopt, 16.0, 8.0};
    const std::vector<int> occ{3, 10, 3, 0};
    const auto m = build_proxy_matrix(income, edu, occ, std::log(100.0));
    CHECK(m.cols() == 13);
    CHECK(m.values(0, 0) == std::log(100.0));
    CHECK(m.values(1, 1) == 12.0);
    CHECK(m.reference_column == std::optional<Eigen::Index>(12));
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(m.values.row(i).tail(11).sum() == 1.0);
}

TEST_CASE("rank association and flipped regression")
{
    const Eigen::VectorXd r = percentile_ranks(testing_support::normals(1000, 5));
    CHECK(lw_rank_association(r, r).slope == Approx(1.0));
    CHECK(flip_regression(r, r).slope == Approx(1.0));

    const auto [x, y] = testing_support::bivariate_normal(100000, 0.3, 6);
    const Eigen::VectorXd rx = percentile_ranks(x), ry = percentile_ranks(y);
    CHECK(std::abs(flip_regression(rx, ry).slope - lw_rank_association(ry, rx).slope) < 0.01);
    CHECK(std::abs(lw_rank_association(percentile_ranks(testing_support::normals(100000, 7)), rx).slope) < 0.01);
}

TEST_CASE("zero-income token is a small-sensitivity choice")
{
    auto data = generate_synthetic(std::vector<PlantedCohort>{{1960, sweden_1951_params()}}, reference_maps(), 4000, 8);
    const auto pairs = build_pairs(data.persons);
    LWOptions a, b;
    a.token_log = std::log(100.0);
    b.token_log = std::log(50.0);
    const auto ea = estimate_lw(data.persons, pairs, standard_lw_specs(), a);
    const auto eb = estimate_lw(data.persons, pairs, standard_lw_specs(), b);
    REQUIRE(ea.size() == 3);
    REQUIRE(eb.size() == 3);
    for (std::size_t i = 0; i < ea.size(); ++i) {
        CHECK(std::abs(ea[i].rank_slope.slope - eb[i].rank_slope.slope) < 0.02);
        double sum = 0;
        for (const auto& [k, v] : ea[i].contributions) sum += v;
        CHECK(sum == Approx(1.0).epsilon(1e-9));
    }
}
