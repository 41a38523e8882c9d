#ifndef MOBILITY_ESTIMATORS_HPP
#define MOBILITY_ESTIMATORS_HPP

#include "mobility/population.hpp"
#include "mobility/ranking.hpp"
#include "mobility/regression.hpp"
#include "mobility/tsv.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mobility {

struct EstimateRecord {
    int cohort = 0;
    double slope = 0.0;
    double intercept = 0.0;
    double se_slope = 0.0; // HC1
    std::size_t n = 0;
    std::string spec_label;
};

/// Rank-rank slope: OLS of child rank on parent rank.
EstimateRecord ira(const Eigen::Ref<const Eigen::VectorXd>& child_ranks,
                   const Eigen::Ref<const Eigen::VectorXd>& parent_ranks, int cohort = 0, std::string label = "all");
EstimateRecord ira(std::span<const RankedPair> pairs, std::string label = "all");

/// Log-log slope of child on parent income; pairs with a zero on either side
/// are dropped and `n` counts the pairs kept.
EstimateRecord ige(const Eigen::Ref<const Eigen::VectorXd>& child_income,
                   const Eigen::Ref<const Eigen::VectorXd>& parent_income, int cohort = 0, std::string label = "all");

enum class ParticipationScope { child, parent, both };

/// Keeps pairs whose scoped incomes strictly exceed `threshold`. The parent
/// scope tests every present parent's own average. Ranks must be recomputed
/// on the result.
PairTable participation_filter(const PairTable& pairs, double threshold, ParticipationScope scope);

/// Which parent income a specification uses.
enum class ParentRole { joint, father, mother };

struct EstimationSpec {
    std::string label;
    std::optional<Sex> child_sex;
    ParentRole parent = ParentRole::joint;
};

/// all, son-father, son-mother, daughter-father, daughter-mother.
std::vector<EstimationSpec> standard_specs();

struct EstimationOptions {
    bool gender_rerank = true;
    std::optional<int> cohort_min;
    std::optional<int> cohort_max;
};

/// Per-cohort IRA for every spec, ordered by (spec, cohort). Cohorts where a
/// spec is degenerate are skipped.
std::vector<EstimateRecord> estimate_ira(const PairTable& pairs, const std::vector<EstimationSpec>& specs,
                                         const EstimationOptions& options = {});
std::vector<EstimateRecord> estimate_ige(const PairTable& pairs, const std::vector<EstimationSpec>& specs,
                                         const EstimationOptions& options = {});

/// Ranked rows for one spec (ranks computed over the whole table before the
/// spec's subsetting, per cohort).
RankedTable ranked_spec_rows(const PairTable& pairs, const EstimationSpec& spec, bool gender_rerank);

struct TrendRecord {
    std::string spec_label;
    std::pair<int, int> year_range{};
    double slope_x100 = 0.0;
    double se_x100 = 0.0;
    std::optional<double> p_equal_trends;
};

/// OLS of the slopes on cohort year inside the inclusive range, scaled by 100.
TrendRecord trend_fit(std::span<const EstimateRecord> estimates, std::pair<int, int> range);

/// Two-sided p-value for equal linear trends in two estimate series, from a
/// stacked regression with a series x year interaction and HC1 errors.
double trend_equality_pvalue(std::span<const EstimateRecord> a, std::span<const EstimateRecord> b,
                             std::pair<int, int> range);

/// Duncan dissimilarity: half the summed absolute share differences.
double duncan_index(std::span<const double> female_shares, std::span<const double> male_shares);

struct SegregationSeries {
    std::map<int, double> index;
    int base_year = 0;
    std::map<int, double> normalized;
};

/// year -> (female shares, male shares).
SegregationSeries segregation_series(const std::map<int, std::pair<std::vector<double>, std::vector<double>>>& shares,
                                     int base_year);

/// Share of persons in each occupation group 0..9 (missing excluded) by sex.
std::pair<std::vector<double>, std::vector<double>> occupation_shares(std::span<const PersonRecord> persons);

struct FullTimeSeries {
    std::map<int, double> rate;
    int break_year = 0;
};

/// Splices a level break: the break year takes the linear fit of the
/// pre-break window, later years keep their distance from full time in
/// proportion.
FullTimeSeries fulltime_correction(const std::map<int, double>& series, int break_year, std::vector<int> fit_window);

struct OccupationGroupStats {
    int group = 0;
    double count_before = 0.0;
    double count_after = 0.0;
    double mean_education = 0.0;
};

struct OccupationShiftRow {
    int group = 0;
    double share_before = 0.0;
    double share_after = 0.0;
    double delta_share = 0.0;
    double mean_education = 0.0;
    double weight = 0.0;
};

struct OccupationShift {
    std::vector<OccupationShiftRow> rows;
    std::vector<int> dropped;
    double slope = 0.0;
    double intercept = 0.0;
};

/// Share changes between two windows and the group-size weighted OLS of the
/// change on mean education.
OccupationShift occupational_shift(std::span<const OccupationGroupStats> groups);

/// Group counts of persons of `sex` born in each inclusive window; education
/// is averaged over both windows.
std::vector<OccupationGroupStats> occupation_group_stats(std::span<const PersonRecord> persons, Sex sex,
                                                         std::pair<int, int> window_before,
                                                         std::pair<int, int> window_after);

TsvTable estimates_tsv(std::span<const EstimateRecord> estimates);
std::vector<EstimateRecord> estimates_from_tsv(const TsvTable& table);
TsvTable trends_tsv(std::span<const TrendRecord> trends);
TsvTable occupation_shift_tsv(const OccupationShift& shift);

} // namespace mobility

#endif // MOBILITY_ESTIMATORS_HPP
