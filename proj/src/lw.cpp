#include "mobility/lw.hpp"

#include "mobility/error.hpp"
#include "mobility/ranking.hpp"
#include "mobility/regression.hpp"

#include <cmath>

namespace mobility {

ProxyMatrix build_proxy_matrix(std::span<const double> income, std::span<const std::optional<double>> education,
                               std::span<const int> occupation, double token_log)
{
    const auto n = static_cast<Eigen::Index>(income.size());
    if (static_cast<Eigen::Index>(education.size()) != n || static_cast<Eigen::Index>(occupation.size()) != n)
        throw Error("build_proxy_matrix: column length mismatch");

    double edu_sum = 0;
    Eigen::Index edu_n = 0;
    for (const auto& e : education)
        if (e) {
            edu_sum += *e;
            ++edu_n;
        }
    const double edu_fill = edu_n ? edu_sum / static_cast<double>(edu_n) : 0.0;

    ProxyMatrix m;
    m.values = Eigen::MatrixXd::Zero(n, 2 + kMissingOccupation + 1);
    m.labels = {"log_income", "education"};
    m.blocks = {"income", "education"};
    for (int g = 0; g < kMissingOccupation; ++g) {
        m.labels.push_back("occ_" + std::to_string(g));
        m.blocks.push_back("occupation");
    }
    m.labels.push_back("occ_missing");
    m.blocks.push_back("occupation");

    for (Eigen::Index i = 0; i < n; ++i) {
        const double y = income[static_cast<std::size_t>(i)];
        if (!(y >= 0) || !std::isfinite(y)) throw DataError("build_proxy_matrix: invalid income");
        m.values(i, 0) = y > 0 ? std::log(y) : token_log;
        const auto& e = education[static_cast<std::size_t>(i)];
        m.values(i, 1) = e ? *e : edu_fill;
        const int g = occupation[static_cast<std::size_t>(i)];
        if (g < 0 || g > kMissingOccupation) throw DataError("build_proxy_matrix: occupation outside 0..10");
        m.values(i, 2 + g) = 1.0;
    }

    const Eigen::Index missing_col = 2 + kMissingOccupation;
    if (m.values.col(missing_col).sum() > 0) {
        m.reference_column = missing_col;
    } else {
        for (Eigen::Index c = missing_col - 1; c >= 2; --c)
            if (m.values.col(c).sum() > 0) {
                m.reference_column = c;
                break;
            }
    }
    return m;
}

ProxyMatrix make_proxy_matrix(const Eigen::Ref<const Eigen::MatrixXd>& values, std::vector<std::string> labels,
                              std::vector<std::string> blocks)
{
    if (static_cast<Eigen::Index>(labels.size()) != values.cols()) throw Error("make_proxy_matrix: label count mismatch");
    if (blocks.empty()) blocks = labels;
    if (blocks.size() != labels.size()) throw Error("make_proxy_matrix: block count mismatch");
    return {values, std::move(labels), std::move(blocks), std::nullopt};
}

LWFit lw_weights(const Eigen::Ref<const Eigen::VectorXd>& outcome, const ProxyMatrix& proxies)
{
    const Eigen::Index n = proxies.rows();
    const Eigen::Index k = proxies.cols();
    if (outcome.size() != n) throw Error("lw_weights: length mismatch");
    if (k < 1) throw Error("lw_weights: no proxies");
    if (n <= k) throw DegenerateError("lw_weights: need more observations than proxies");

    // Columns entering the regression: all but the reference and all-zero
    // indicator columns (which carry no information and would be collinear).
    std::vector<Eigen::Index> used;
    for (Eigen::Index c = 0; c < k; ++c) {
        if (proxies.reference_column && c == *proxies.reference_column) continue;
        if (c > 0 && proxies.values.col(c).isZero(0.0)) continue;
        used.push_back(c);
    }

    const double anchor_cov = covariance(outcome, proxies.values.col(0));
    const double scale = std::sqrt(covariance(outcome, outcome) * covariance(proxies.values.col(0), proxies.values.col(0)));
    if (!(std::abs(anchor_cov) > 1e-12 * scale)) throw DegenerateError("uninformative anchor proxy");

    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(used.size()));
    std::vector<std::string> names;
    for (std::size_t j = 0; j < used.size(); ++j) {
        X.col(static_cast<Eigen::Index>(j)) = proxies.values.col(used[j]);
        names.push_back(proxies.labels[static_cast<std::size_t>(used[j])]);
    }
    const auto ols = fit_multiple(outcome, X, names);

    LWFit fit;
    fit.labels = proxies.labels;
    fit.blocks = proxies.blocks;
    fit.rho = Eigen::VectorXd::Zero(k);
    fit.b = Eigen::VectorXd::Zero(k);
    for (std::size_t j = 0; j < used.size(); ++j) {
        const Eigen::Index c = used[j];
        fit.rho(c) = c == 0 ? 1.0 : covariance(outcome, proxies.values.col(c)) / anchor_cov;
        fit.b(c) = ols.coef(static_cast<Eigen::Index>(j) + 1);
    }
    fit.beta_lw = lw_beta(fit);
    return fit;
}

double lw_beta(const LWFit& fit)
{
    CompensatedSum<double> s;
    for (Eigen::Index j = 0; j < fit.rho.size(); ++j) s.add(fit.rho(j) * fit.b(j));
    return s.value();
}

Eigen::VectorXd lw_index(const LWFit& fit, const ProxyMatrix& proxies)
{
    if (fit.beta_lw == 0.0) throw DegenerateError("index undefined");
    if (proxies.cols() != fit.b.size()) throw Error("lw_index: proxy columns do not match fit");
    return (proxies.values * fit.b) / fit.beta_lw;
}

Eigen::VectorXd lw_index_ranks(const LWFit& fit, const ProxyMatrix& proxies)
{
    return percentile_ranks(lw_index(fit, proxies));
}

EstimateRecord lw_rank_association(const Eigen::Ref<const Eigen::VectorXd>& child_income_ranks,
                                   const Eigen::Ref<const Eigen::VectorXd>& index_ranks, int cohort, std::string label)
{
    return ira(child_income_ranks, index_ranks, cohort, std::move(label));
}

EstimateRecord flip_regression(const Eigen::Ref<const Eigen::VectorXd>& parent_ranks,
                               const Eigen::Ref<const Eigen::VectorXd>& child_ranks, int cohort, std::string label)
{
    return ira(parent_ranks, child_ranks, cohort, std::move(label));
}

std::map<std::string, double> proxy_contributions(const LWFit& fit)
{
    if (fit.beta_lw == 0.0) throw DegenerateError("proxy_contributions: beta_lw is zero");
    std::map<std::string, double> out;
    for (Eigen::Index j = 0; j < fit.rho.size(); ++j)
        out[fit.blocks[static_cast<std::size_t>(j)]] += fit.rho(j) * fit.b(j) / fit.beta_lw;
    return out;
}

std::vector<LWSpec> standard_lw_specs()
{
    return {
        {"son-mother", Sex::male, ParentRole::mother, false},
        {"son-father", Sex::male, ParentRole::father, false},
        {"daughter-father", Sex::female, ParentRole::father, true},
    };
}

std::vector<LWEstimate> estimate_lw(const PersonTable& persons, const PairTable& pairs,
                                    const std::vector<LWSpec>& specs, const LWOptions& options)
{
    std::vector<LWEstimate> out;
    for (const auto& spec : specs) {
        if (spec.parent == ParentRole::joint) throw Error("estimate_lw: LW needs a single parent");
        std::map<int, std::vector<std::size_t>> by_cohort;
        for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
            const auto& p = pairs.pairs[i];
            if (p.child_sex != spec.child_sex) continue;
            if (options.cohort_min && p.child_cohort < *options.cohort_min) continue;
            if (options.cohort_max && p.child_cohort > *options.cohort_max) continue;
            const bool has_parent = spec.parent == ParentRole::father ? p.father_income.has_value()
                                                                      : p.mother_income.has_value();
            if (has_parent) by_cohort[p.child_cohort].push_back(i);
        }

        for (const auto& [cohort, rows] : by_cohort) {
            const auto n = static_cast<Eigen::Index>(rows.size());
            // "proxied" is the person whose status is measured with proxies;
            // "outcome" is the other side of the pair.
            std::vector<double> proxied_income(rows.size()), outcome_income(rows.size());
            std::vector<std::optional<double>> edu(rows.size());
            std::vector<int> occ(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto& p = pairs.pairs[rows[r]];
                const std::size_t parent_idx = spec.parent == ParentRole::father ? *p.father : *p.mother;
                const double parent_income = spec.parent == ParentRole::father ? *p.father_income : *p.mother_income;
                const PersonRecord& proxied = persons.persons[spec.flipped ? p.child : parent_idx];
                proxied_income[r] = spec.flipped ? p.child_income : parent_income;
                outcome_income[r] = spec.flipped ? parent_income : p.child_income;
                edu[r] = proxied.education_years;
                occ[r] = proxied.occupation_group;
            }
            try {
                const auto proxies = build_proxy_matrix(proxied_income, edu, occ, options.token_log);
                Eigen::VectorXd outcome_log(n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double y = outcome_income[static_cast<std::size_t>(i)];
                    outcome_log(i) = y > 0 ? std::log(y) : options.token_log;
                }
                const auto fit = lw_weights(outcome_log, proxies);
                const Eigen::VectorXd index_ranks = lw_index_ranks(fit, proxies);
                const Eigen::Map<const Eigen::VectorXd> oi(outcome_income.data(), n);
                const Eigen::Map<const Eigen::VectorXd> pi(proxied_income.data(), n);
                const Eigen::VectorXd outcome_ranks = percentile_ranks(oi);
                const Eigen::VectorXd proxied_ranks = percentile_ranks(pi);

                LWEstimate e;
                e.cohort = cohort;
                e.spec_label = spec.label;
                e.beta_lw = fit.beta_lw;
                e.contributions = proxy_contributions(fit);
                if (spec.flipped) {
                    e.rank_slope = flip_regression(outcome_ranks, index_ranks, cohort, spec.label);
                    e.ira_slope = flip_regression(outcome_ranks, proxied_ranks, cohort, spec.label);
                } else {
                    e.rank_slope = lw_rank_association(outcome_ranks, index_ranks, cohort, spec.label);
                    e.ira_slope = ira(outcome_ranks, proxied_ranks, cohort, spec.label);
                }
                out.push_back(std::move(e));
            } catch (const DegenerateError&) {
            } catch (const DataError&) {
            }
        }
    }
    return out;
}

TsvTable lw_tsv(std::span<const LWEstimate> estimates)
{
    TsvTable t;
    t.columns = {"spec",  "cohort", "beta_lw", "slope", "se", "n", "ira_slope", "contrib_income", "contrib_education",
                 "contrib_occupation"};
    auto contrib = [](const LWEstimate& e, const std::string& block) {
        const auto it = e.contributions.find(block);
        return it == e.contributions.end() ? std::string("0") : format_number(it->second);
    };
    for (const auto& e : estimates)
        t.rows.push_back({e.spec_label, std::to_string(e.cohort), format_number(e.beta_lw),
                          format_number(e.rank_slope.slope), format_number(e.rank_slope.se_slope),
                          std::to_string(e.rank_slope.n), format_number(e.ira_slope.slope), contrib(e, "income"),
                          contrib(e, "education"), contrib(e, "occupation")});
    return t;
}

} // namespace mobility
