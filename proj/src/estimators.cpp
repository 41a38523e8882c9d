#include "mobility/estimators.hpp"

#include "mobility/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mobility {

namespace {

EstimateRecord to_record(const LinearFit<double>& f, int cohort, std::string label)
{
    return {cohort, f.slope, f.intercept, f.se_slope, f.n, std::move(label)};
}

std::optional<double> parent_value(const PairRecord& p, ParentRole role)
{
    switch (role) {
    case ParentRole::joint:
        return p.parent_income;
    case ParentRole::father:
        return p.father_income;
    case ParentRole::mother:
        return p.mother_income;
    }
    return std::nullopt;
}

bool in_range(int cohort, const EstimationOptions& o)
{
    return (!o.cohort_min || cohort >= *o.cohort_min) && (!o.cohort_max || cohort <= *o.cohort_max);
}

} // namespace

EstimateRecord ira(const Eigen::Ref<const Eigen::VectorXd>& child_ranks,
                   const Eigen::Ref<const Eigen::VectorXd>& parent_ranks, int cohort, std::string label)
{
    return to_record(fit_line(child_ranks, parent_ranks), cohort, std::move(label));
}

EstimateRecord ira(std::span<const RankedPair> pairs, std::string label)
{
    const auto n = static_cast<Eigen::Index>(pairs.size());
    Eigen::VectorXd c(n), p(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        c(i) = pairs[static_cast<std::size_t>(i)].child_rank;
        p(i) = pairs[static_cast<std::size_t>(i)].parent_rank;
    }
    return ira(c, p, pairs.empty() ? 0 : pairs.front().cohort, std::move(label));
}

EstimateRecord ige(const Eigen::Ref<const Eigen::VectorXd>& child_income,
                   const Eigen::Ref<const Eigen::VectorXd>& parent_income, int cohort, std::string label)
{
    if (child_income.size() != parent_income.size()) throw Error("ige: length mismatch");
    std::vector<double> lc, lp;
    for (Eigen::Index i = 0; i < child_income.size(); ++i) {
        if (child_income(i) > 0 && parent_income(i) > 0) {
            lc.push_back(std::log(child_income(i)));
            lp.push_back(std::log(parent_income(i)));
        }
    }
    if (lc.size() < 2) throw DegenerateError("ige: fewer than two pairs with positive incomes");
    const Eigen::Map<const Eigen::VectorXd> y(lc.data(), static_cast<Eigen::Index>(lc.size()));
    const Eigen::Map<const Eigen::VectorXd> x(lp.data(), static_cast<Eigen::Index>(lp.size()));
    return to_record(fit_line(y, x), cohort, std::move(label));
}

PairTable participation_filter(const PairTable& pairs, double threshold, ParticipationScope scope)
{
    if (threshold < 0) throw Error("participation_filter: negative threshold");
    PairTable out;
    out.exclusions = pairs.exclusions;
    const bool child = scope != ParticipationScope::parent;
    const bool parent = scope != ParticipationScope::child;
    for (const auto& p : pairs.pairs) {
        if (child && !(p.child_income > threshold)) continue;
        if (parent) {
            if (p.father_income && !(*p.father_income > threshold)) continue;
            if (p.mother_income && !(*p.mother_income > threshold)) continue;
        }
        out.pairs.push_back(p);
    }
    return out;
}

std::vector<EstimationSpec> standard_specs()
{
    return {
        {"all", std::nullopt, ParentRole::joint},
        {"son-father", Sex::male, ParentRole::father},
        {"son-mother", Sex::male, ParentRole::mother},
        {"daughter-father", Sex::female, ParentRole::father},
        {"daughter-mother", Sex::female, ParentRole::mother},
    };
}

RankedTable ranked_spec_rows(const PairTable& pairs, const EstimationSpec& spec, bool gender_rerank)
{
    // Rank every child with the required parent, then keep the spec's sex.
    std::vector<RankingRow> rows;
    std::vector<std::size_t> source;
    for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
        const auto& p = pairs.pairs[i];
        const auto pv = parent_value(p, spec.parent);
        if (!pv) continue;
        RankingRow r;
        r.child_value = p.child_income;
        r.parent_value = *pv;
        r.cohort = p.child_cohort;
        r.child_sex = p.child_sex;
        if (spec.parent == ParentRole::father) r.parent_sex = Sex::male;
        if (spec.parent == ParentRole::mother) r.parent_sex = Sex::female;
        rows.push_back(r);
        source.push_back(i);
    }
    RankedTable ranked = (gender_rerank && spec.child_sex) ? rerank_by_gender(rows, RankDimension::child)
                                                           : rank_by_cohort(rows);
    RankedTable out;
    for (auto& r : ranked.rows) {
        const auto& p = pairs.pairs[source[r.source]];
        if (spec.child_sex && p.child_sex != *spec.child_sex) continue;
        r.source = source[r.source];
        out.rows.push_back(std::move(r));
    }
    for (std::size_t e : ranked.excluded) out.excluded.push_back(source[e]);
    return out;
}

std::vector<EstimateRecord> estimate_ira(const PairTable& pairs, const std::vector<EstimationSpec>& specs,
                                         const EstimationOptions& options)
{
    std::vector<EstimateRecord> out;
    for (const auto& spec : specs) {
        const auto ranked = ranked_spec_rows(pairs, spec, options.gender_rerank);
        std::map<int, std::vector<RankedPair>> by_cohort;
        for (const auto& r : ranked.rows)
            if (in_range(r.cohort, options)) by_cohort[r.cohort].push_back(r);
        for (const auto& [cohort, rows] : by_cohort) {
            try {
                out.push_back(ira(rows, spec.label));
            } catch (const DegenerateError&) {
            }
        }
    }
    return out;
}

std::vector<EstimateRecord> estimate_ige(const PairTable& pairs, const std::vector<EstimationSpec>& specs,
                                         const EstimationOptions& options)
{
    std::vector<EstimateRecord> out;
    for (const auto& spec : specs) {
        std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_cohort;
        for (const auto& p : pairs.pairs) {
            if (!in_range(p.child_cohort, options)) continue;
            if (spec.child_sex && p.child_sex != *spec.child_sex) continue;
            const auto pv = parent_value(p, spec.parent);
            if (!pv) continue;
            auto& cell = by_cohort[p.child_cohort];
            cell.first.push_back(p.child_income);
            cell.second.push_back(*pv);
        }
        for (const auto& [cohort, cell] : by_cohort) {
            const Eigen::Map<const Eigen::VectorXd> c(cell.first.data(), static_cast<Eigen::Index>(cell.first.size()));
            const Eigen::Map<const Eigen::VectorXd> p(cell.second.data(), static_cast<Eigen::Index>(cell.second.size()));
            try {
                out.push_back(ige(c, p, cohort, spec.label));
            } catch (const DegenerateError&) {
            }
        }
    }
    return out;
}

TrendRecord trend_fit(std::span<const EstimateRecord> estimates, std::pair<int, int> range)
{
    if (range.first >= range.second) throw Error("trend_fit: range start must precede end");
    std::vector<double> years, slopes;
    std::string label;
    for (const auto& e : estimates) {
        if (e.cohort < range.first || e.cohort > range.second) continue;
        years.push_back(e.cohort);
        slopes.push_back(e.slope);
        if (label.empty()) label = e.spec_label;
    }
    if (years.size() < 2) throw DegenerateError("trend_fit: fewer than two cohorts in range");
    const Eigen::Map<const Eigen::VectorXd> y(slopes.data(), static_cast<Eigen::Index>(slopes.size()));
    const Eigen::Map<const Eigen::VectorXd> x(years.data(), static_cast<Eigen::Index>(years.size()));
    const auto f = fit_line(y, x);
    return {label, range, 100.0 * f.slope, 100.0 * f.se_slope, std::nullopt};
}

double trend_equality_pvalue(std::span<const EstimateRecord> a, std::span<const EstimateRecord> b,
                             std::pair<int, int> range)
{
    std::vector<double> y, year, series;
    auto add = [&](std::span<const EstimateRecord> s, double g) {
        for (const auto& e : s) {
            if (e.cohort < range.first || e.cohort > range.second) continue;
            y.push_back(e.slope);
            year.push_back(e.cohort - range.first);
            series.push_back(g);
        }
    };
    add(a, 0.0);
    add(b, 1.0);
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::MatrixXd X(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = year[static_cast<std::size_t>(i)];
        X(i, 1) = series[static_cast<std::size_t>(i)];
        X(i, 2) = year[static_cast<std::size_t>(i)] * series[static_cast<std::size_t>(i)];
    }
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    const auto fit = fit_multiple(yv, X, {"year", "series", "series_x_year"});
    const double se = fit.se(3);
    if (!(se > 0)) return fit.coef(3) == 0.0 ? 1.0 : 0.0;
    const double z = fit.coef(3) / se;
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

double duncan_index(std::span<const double> female_shares, std::span<const double> male_shares)
{
    if (female_shares.size() != male_shares.size()) throw Error("duncan_index: share vectors differ in length");
    double sf = 0, sm = 0, d = 0;
    for (std::size_t o = 0; o < female_shares.size(); ++o) {
        if (female_shares[o] < 0 || male_shares[o] < 0) throw DataError("duncan_index: negative share");
        sf += female_shares[o];
        sm += male_shares[o];
        d += std::abs(female_shares[o] - male_shares[o]);
    }
    if (std::abs(sf - 1.0) > 1e-9 || std::abs(sm - 1.0) > 1e-9) throw DataError("duncan_index: shares must sum to 1");
    return 0.5 * d;
}

SegregationSeries segregation_series(const std::map<int, std::pair<std::vector<double>, std::vector<double>>>& shares,
                                     int base_year)
{
    SegregationSeries s;
    s.base_year = base_year;
    for (const auto& [year, fm] : shares) s.index[year] = duncan_index(fm.first, fm.second);
    const auto base = s.index.find(base_year);
    if (base == s.index.end()) throw Error("segregation_series: base year absent");
    if (base->second == 0.0) throw DegenerateError("segregation_series: base-year index is zero");
    for (const auto& [year, d] : s.index) s.normalized[year] = d / base->second;
    return s;
}

std::pair<std::vector<double>, std::vector<double>> occupation_shares(std::span<const PersonRecord> persons)
{
    std::vector<double> f(kMissingOccupation, 0.0), m(kMissingOccupation, 0.0);
    double nf = 0, nm = 0;
    for (const auto& p : persons) {
        if (p.occupation_group == kMissingOccupation) continue;
        auto& v = p.sex == Sex::female ? f : m;
        v[static_cast<std::size_t>(p.occupation_group)] += 1;
        (p.sex == Sex::female ? nf : nm) += 1;
    }
    if (nf == 0 || nm == 0) throw DataError("occupation_shares: no observed occupations for one sex");
    for (auto& x : f) x /= nf;
    for (auto& x : m) x /= nm;
    return {f, m};
}

FullTimeSeries fulltime_correction(const std::map<int, double>& series, int break_year, std::vector<int> fit_window)
{
    for (const auto& [year, rate] : series)
        if (rate < 0 || rate > 1) throw DataError("fulltime_correction: rate outside [0,1] in " + std::to_string(year));
    const auto at_break = series.find(break_year);
    if (at_break == series.end()) throw DataError("fulltime_correction: break year missing from series");

    std::vector<double> xs, ys;
    for (int y : fit_window) {
        if (y >= break_year) throw DataError("fulltime_correction: fit window must precede the break year");
        const auto it = series.find(y);
        if (it == series.end()) throw DataError("fulltime_correction: fit year " + std::to_string(y) + " missing");
        xs.push_back(y - break_year);
        ys.push_back(it->second);
    }
    const Eigen::Map<const Eigen::VectorXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Eigen::Map<const Eigen::VectorXd> yv(ys.data(), static_cast<Eigen::Index>(ys.size()));
    // Years are centered on the break so the intercept is the fitted level.
    const double fitted = fit_line(yv, x).intercept;
    const double observed = at_break->second;
    if (observed == 1.0) throw DegenerateError("degenerate break level");

    FullTimeSeries out;
    out.break_year = break_year;
    const double ratio = (1.0 - fitted) / (1.0 - observed);
    for (const auto& [year, rate] : series) {
        if (year < break_year) out.rate[year] = rate;
        else if (year == break_year) out.rate[year] = fitted;
        else out.rate[year] = 1.0 - (1.0 - rate) * ratio;
    }
    return out;
}

OccupationShift occupational_shift(std::span<const OccupationGroupStats> groups)
{
    OccupationShift out;
    double total_before = 0, total_after = 0;
    std::vector<OccupationGroupStats> kept;
    for (const auto& g : groups) {
        if (g.count_before < 0 || g.count_after < 0) throw DataError("occupational_shift: negative count");
        if (g.count_before == 0 && g.count_after == 0) {
            out.dropped.push_back(g.group);
            continue;
        }
        kept.push_back(g);
        total_before += g.count_before;
        total_after += g.count_after;
    }
    if (kept.size() < 2) throw DegenerateError("degenerate regressor: fewer than two occupation groups");
    if (total_before == 0 || total_after == 0) throw DataError("occupational_shift: an empty window");

    std::vector<double> delta, edu, weight;
    for (const auto& g : kept) {
        OccupationShiftRow r;
        r.group = g.group;
        r.share_before = g.count_before / total_before;
        r.share_after = g.count_after / total_after;
        r.delta_share = r.share_after - r.share_before;
        r.mean_education = g.mean_education;
        r.weight = g.count_before + g.count_after;
        out.rows.push_back(r);
        delta.push_back(r.delta_share);
        edu.push_back(r.mean_education);
        weight.push_back(r.weight);
    }
    const Eigen::Map<const Eigen::VectorXd> y(delta.data(), static_cast<Eigen::Index>(delta.size()));
    const Eigen::Map<const Eigen::VectorXd> x(edu.data(), static_cast<Eigen::Index>(edu.size()));
    const auto f = fit_line(y, x, &weight);
    out.slope = f.slope;
    out.intercept = f.intercept;
    return out;
}

std::vector<OccupationGroupStats> occupation_group_stats(std::span<const PersonRecord> persons, Sex sex,
                                                         std::pair<int, int> window_before,
                                                         std::pair<int, int> window_after)
{
    std::vector<OccupationGroupStats> stats(kMissingOccupation);
    std::vector<double> edu_sum(kMissingOccupation, 0.0), edu_n(kMissingOccupation, 0.0);
    for (int g = 0; g < kMissingOccupation; ++g) stats[static_cast<std::size_t>(g)].group = g;
    for (const auto& p : persons) {
        if (p.sex != sex || p.occupation_group == kMissingOccupation) continue;
        const auto g = static_cast<std::size_t>(p.occupation_group);
        const bool before = p.birth_year >= window_before.first && p.birth_year <= window_before.second;
        const bool after = p.birth_year >= window_after.first && p.birth_year <= window_after.second;
        if (!before && !after) continue;
        if (before) stats[g].count_before += 1;
        if (after) stats[g].count_after += 1;
        if (p.education_years) {
            edu_sum[g] += *p.education_years;
            edu_n[g] += 1;
        }
    }
    for (std::size_t g = 0; g < stats.size(); ++g) stats[g].mean_education = edu_n[g] > 0 ? edu_sum[g] / edu_n[g] : 0.0;
    return stats;
}

TsvTable estimates_tsv(std::span<const EstimateRecord> estimates)
{
    TsvTable t;
    t.columns = {"spec", "cohort", "slope", "intercept", "se", "n"};
    for (const auto& e : estimates)
        t.rows.push_back({e.spec_label, std::to_string(e.cohort), format_number(e.slope), format_number(e.intercept),
                          format_number(e.se_slope), std::to_string(e.n)});
    return t;
}

std::vector<EstimateRecord> estimates_from_tsv(const TsvTable& table)
{
    const auto c_spec = table.column("spec"), c_cohort = table.column("cohort"), c_slope = table.column("slope"),
               c_int = table.column("intercept"), c_se = table.column("se"), c_n = table.column("n");
    std::vector<EstimateRecord> out;
    for (const auto& r : table.rows) {
        EstimateRecord e;
        e.spec_label = r[c_spec];
        e.cohort = static_cast<int>(parse_integer(r[c_cohort], "cohort"));
        e.slope = parse_double(r[c_slope], "slope");
        e.intercept = parse_double(r[c_int], "intercept");
        e.se_slope = parse_double(r[c_se], "se");
        e.n = static_cast<std::size_t>(parse_integer(r[c_n], "n"));
        out.push_back(std::move(e));
    }
    return out;
}

TsvTable trends_tsv(std::span<const TrendRecord> trends)
{
    TsvTable t;
    t.columns = {"spec", "start", "end", "slope_x100", "se_x100", "p_equal_trends"};
    for (const auto& r : trends)
        t.rows.push_back({r.spec_label, std::to_string(r.year_range.first), std::to_string(r.year_range.second),
                          format_number(r.slope_x100), format_number(r.se_x100),
                          r.p_equal_trends ? format_number(*r.p_equal_trends) : std::string("NA")});
    return t;
}

TsvTable occupation_shift_tsv(const OccupationShift& shift)
{
    TsvTable t;
    t.columns = {"group", "share_before", "share_after", "delta_share", "mean_education", "weight"};
    for (const auto& r : shift.rows)
        t.rows.push_back({std::to_string(r.group), format_number(r.share_before), format_number(r.share_after),
                          format_number(r.delta_share), format_number(r.mean_education), format_number(r.weight)});
    return t;
}

} // namespace mobility
