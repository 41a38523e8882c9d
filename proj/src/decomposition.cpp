#include "mobility/decomposition.hpp"

#include "mobility/error.hpp"
#include "mobility/parallel.hpp"
#include "mobility/ranking.hpp"
#include "mobility/regression.hpp"

#include <algorithm>

namespace mobility {

double pooled_ira(const SimPopulation& population)
{
    const Eigen::Index n = population.size();
    Eigen::VectorXd child(2 * n), parent(2 * n);
    child << population.earn_son, population.earn_daughter;
    parent << population.earn_parents, population.earn_parents;
    return fit_line(percentile_ranks(child), percentile_ranks(parent)).slope;
}

std::vector<double> simulated_trend(std::span<const CohortModel> chain, const BaseDraws& draws)
{
    std::vector<double> out(chain.size());
    parallel_for(chain.size(), [&](std::size_t i) {
        out[i] = pooled_ira(simulate_from_draws(chain[i].params, chain[i].maps, draws));
    });
    return out;
}

std::vector<double> simulated_trend(std::span<const CohortModel> chain, std::size_t n, std::uint64_t seed)
{
    return simulated_trend(chain, draw_base(n, seed));
}

std::vector<double> counterfactual_trend(std::span<const CohortModel> chain, Parameter fixed, int baseline_cohort,
                                         const BaseDraws& draws)
{
    const auto base = std::find_if(chain.begin(), chain.end(), [&](const CohortModel& c) { return c.cohort == baseline_cohort; });
    if (base == chain.end()) throw Error("counterfactual_trend: baseline cohort " + std::to_string(baseline_cohort) + " not in chain");
    const double pinned = get(base->params, fixed);

    std::vector<CohortModel> pinned_chain(chain.begin(), chain.end());
    for (auto& c : pinned_chain) set(c.params, fixed, pinned);
    return simulated_trend(pinned_chain, draws);
}

std::vector<double> counterfactual_trend(std::span<const CohortModel> chain, Parameter fixed, int baseline_cohort,
                                         std::size_t n, std::uint64_t seed)
{
    return counterfactual_trend(chain, fixed, baseline_cohort, draw_base(n, seed));
}

std::vector<double> counterfactual_trend(std::span<const CohortModel> chain, const std::string& fixed,
                                         int baseline_cohort, const BaseDraws& draws)
{
    return counterfactual_trend(chain, parameter_from_name(fixed), baseline_cohort, draws);
}

namespace {

double series_trend_x100(std::span<const int> cohorts, std::span<const double> values, std::pair<int, int> range)
{
    std::vector<EstimateRecord> rows;
    for (std::size_t i = 0; i < cohorts.size(); ++i) rows.push_back({cohorts[i], values[i], 0.0, 0.0, 0, "series"});
    return trend_fit(rows, range).slope_x100;
}

} // namespace

DecompositionResult attribute_trend(std::span<const EstimateRecord> observed, std::span<const int> cohorts,
                                    std::span<const double> beta_tilde,
                                    const std::map<Parameter, std::vector<double>>& beta_tilde_fixed,
                                    std::pair<int, int> range)
{
    if (cohorts.size() != beta_tilde.size()) throw Error("attribute_trend: cohort and beta~ lengths differ");
    for (const auto& [p, series] : beta_tilde_fixed)
        if (series.size() != cohorts.size())
            throw Error("attribute_trend: counterfactual series for " + parameter_name(p) + " has the wrong length");

    std::vector<int> in_range;
    for (int c : cohorts)
        if (c >= range.first && c <= range.second) in_range.push_back(c);
    if (!observed.empty()) {
        std::vector<int> obs;
        for (const auto& e : observed)
            if (e.cohort >= range.first && e.cohort <= range.second) obs.push_back(e.cohort);
        std::sort(obs.begin(), obs.end());
        std::vector<int> sim = in_range;
        std::sort(sim.begin(), sim.end());
        if (obs != sim) throw Error("attribute_trend: observed and simulated cohorts differ in the range");
    }

    DecompositionResult r;
    r.range = range;
    r.cohorts.assign(cohorts.begin(), cohorts.end());
    r.beta_tilde.assign(beta_tilde.begin(), beta_tilde.end());
    r.beta_tilde_fixed = beta_tilde_fixed;
    if (!observed.empty()) r.observed_trend_x100 = trend_fit(observed, range).slope_x100;
    r.simulated_trend_x100 = series_trend_x100(cohorts, beta_tilde, range);
    double total = 0.0;
    for (const auto& [p, series] : beta_tilde_fixed) {
        const double c = r.simulated_trend_x100 - series_trend_x100(cohorts, series, range);
        r.contribution_x100[p] = c;
        total += c;
    }
    r.residual_x100 = r.simulated_trend_x100 - total;
    return r;
}

DecompositionResult decompose(std::span<const CohortModel> chain, std::span<const EstimateRecord> observed,
                              std::pair<int, int> range, int baseline_cohort, std::size_t n, std::uint64_t seed)
{
    const BaseDraws draws = draw_base(n, seed);
    std::vector<int> cohorts;
    for (const auto& c : chain) cohorts.push_back(c.cohort);
    const auto factual = simulated_trend(chain, draws);
    std::map<Parameter, std::vector<double>> fixed;
    for (Parameter p : kCalibratedParameters) fixed[p] = counterfactual_trend(chain, p, baseline_cohort, draws);
    return attribute_trend(observed, cohorts, factual, fixed, range);
}

TsvTable decomposition_tsv(std::span<const DecompositionResult> results)
{
    TsvTable t;
    t.columns = {"row"};
    for (const auto& r : results) t.columns.push_back(std::to_string(r.range.first) + "-" + std::to_string(r.range.second));

    auto add = [&](const std::string& label, auto value) {
        std::vector<std::string> row{label};
        for (const auto& r : results) row.push_back(value(r));
        t.rows.push_back(std::move(row));
    };
    add("trend_beta", [](const DecompositionResult& r) {
        return r.observed_trend_x100 ? format_fixed(*r.observed_trend_x100, 3) : std::string("NA");
    });
    add("trend_beta_tilde", [](const DecompositionResult& r) { return format_fixed(r.simulated_trend_x100, 3); });
    for (Parameter p : kCalibratedParameters)
        add("due_to_" + parameter_name(p), [p](const DecompositionResult& r) {
            const auto it = r.contribution_x100.find(p);
            return it == r.contribution_x100.end() ? std::string("NA") : format_fixed(it->second, 3);
        });
    add("residual", [](const DecompositionResult& r) { return format_fixed(r.residual_x100, 3); });
    return t;
}

TsvTable beta_tilde_tsv(const DecompositionResult& result)
{
    TsvTable t;
    t.columns = {"cohort", "beta_tilde"};
    for (const auto& [p, s] : result.beta_tilde_fixed) t.columns.push_back("beta_tilde_fixed_" + parameter_name(p));
    for (std::size_t i = 0; i < result.cohorts.size(); ++i) {
        std::vector<std::string> row{std::to_string(result.cohorts[i]), format_number(result.beta_tilde[i])};
        for (const auto& [p, s] : result.beta_tilde_fixed) row.push_back(format_number(s[i]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace mobility
