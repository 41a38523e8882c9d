#ifndef MOBILITY_DECOMPOSITION_HPP
#define MOBILITY_DECOMPOSITION_HPP

#include "mobility/estimators.hpp"
#include "mobility/model.hpp"
#include "mobility/tsv.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mobility {

/// Calibrated parameters and earnings maps of one cohort.
struct CohortModel {
    int cohort = 0;
    ModelParams params;
    RoleMaps maps;
};

/// Pooled IRA of a simulated population: child earnings ranked across sons
/// and daughters together, joint parental earnings ranked across families.
double pooled_ira(const SimPopulation& population);

/// beta~_t per cohort. Every cohort is simulated from the same base draws.
std::vector<double> simulated_trend(std::span<const CohortModel> chain, std::size_t n, std::uint64_t seed);
std::vector<double> simulated_trend(std::span<const CohortModel> chain, const BaseDraws& draws);

/// beta~^b_t: as simulated_trend with `fixed` pinned at its value in
/// `baseline_cohort`; maps and draws unchanged.
std::vector<double> counterfactual_trend(std::span<const CohortModel> chain, Parameter fixed, int baseline_cohort,
                                         std::size_t n, std::uint64_t seed);
std::vector<double> counterfactual_trend(std::span<const CohortModel> chain, Parameter fixed, int baseline_cohort,
                                         const BaseDraws& draws);
std::vector<double> counterfactual_trend(std::span<const CohortModel> chain, const std::string& fixed,
                                         int baseline_cohort, const BaseDraws& draws);

struct DecompositionResult {
    std::pair<int, int> range{};
    std::vector<int> cohorts;
    std::vector<double> beta_tilde;
    std::map<Parameter, std::vector<double>> beta_tilde_fixed;
    std::optional<double> observed_trend_x100;
    double simulated_trend_x100 = 0.0;
    /// trend(beta~) - trend(beta~^b), x100.
    std::map<Parameter, double> contribution_x100;
    /// simulated trend minus the summed contributions; reported, never forced to zero.
    double residual_x100 = 0.0;
};

/// Trends (x100) over the inclusive range of the observed IRA series, the
/// simulated series and each counterfactual. `cohorts` indexes the series.
DecompositionResult attribute_trend(std::span<const EstimateRecord> observed, std::span<const int> cohorts,
                                    std::span<const double> beta_tilde,
                                    const std::map<Parameter, std::vector<double>>& beta_tilde_fixed,
                                    std::pair<int, int> range);

/// Convenience: factual and all five counterfactual series from one set of
/// draws, then attribute_trend.
DecompositionResult decompose(std::span<const CohortModel> chain, std::span<const EstimateRecord> observed,
                              std::pair<int, int> range, int baseline_cohort, std::size_t n, std::uint64_t seed);

/// Rows: trend_beta, trend_beta_tilde, due_to_<param>..., residual; one
/// column per result labelled "start-end".
TsvTable decomposition_tsv(std::span<const DecompositionResult> results);

/// cohort, beta_tilde and one beta_tilde_fixed_<param> column per parameter.
TsvTable beta_tilde_tsv(const DecompositionResult& result);

} // namespace mobility

#endif // MOBILITY_DECOMPOSITION_HPP
