#ifndef MOBILITY_RANKING_HPP
#define MOBILITY_RANKING_HPP

#include "mobility/error.hpp"
#include "mobility/population.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mobility {

/// Percentile ranks on [0, 100] of one group: 100 * (midrank - 0.5) / n, ties
/// sharing their average ordinal position. Non-finite values throw.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> percentile_ranks(const Eigen::DenseBase<Derived>& values)
{
    using Scalar = typename Derived::Scalar;
    const auto& v = values.derived();
    const Eigen::Index n = v.size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ranks(n);
    if (n == 0) return ranks;
    for (Eigen::Index i = 0; i < n; ++i)
        if (!std::isfinite(static_cast<double>(v(i)))) throw DataError("percentile_ranks: non-finite value");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });

    const Scalar scale = Scalar(100) / static_cast<Scalar>(n);
    std::size_t start = 0;
    while (start < order.size()) {
        std::size_t end = start + 1;
        while (end < order.size() && v(order[end]) == v(order[start])) ++end;
        // 1-based positions start+1 .. end; midrank - 0.5 = (start + end) / 2.
        const Scalar r = scale * static_cast<Scalar>(start + end) / Scalar(2);
        for (std::size_t k = start; k < end; ++k) ranks(order[k]) = r;
        start = end;
    }
    return ranks;
}

/// Percentile ranks computed separately within each label of `groups`.
template <class Derived, class Label>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> percentile_ranks(const Eigen::DenseBase<Derived>& values,
                                                                           const std::vector<Label>& groups)
{
    using Scalar = typename Derived::Scalar;
    const auto& v = values.derived();
    if (static_cast<Eigen::Index>(groups.size()) != v.size()) throw Error("percentile_ranks: group length mismatch");
    std::map<Label, std::vector<Eigen::Index>> members;
    for (Eigen::Index i = 0; i < v.size(); ++i) members[groups[static_cast<std::size_t>(i)]].push_back(i);

    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ranks(v.size());
    for (const auto& [label, idx] : members) {
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sub(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) sub(static_cast<Eigen::Index>(k)) = v(idx[k]);
        const auto r = percentile_ranks(sub);
        for (std::size_t k = 0; k < idx.size(); ++k) ranks(idx[k]) = r(static_cast<Eigen::Index>(k));
    }
    return ranks;
}

/// Ventile 1..20 of a percentile rank: ceil(rank / 5), clamped.
inline int ventile_of(double rank) { return std::clamp(static_cast<int>(std::ceil(rank / 5.0)), 1, 20); }

/// Midpoint rank of ventile v on the 0..100 scale.
inline double ventile_midpoint(int v) { return 5.0 * (v - 0.5); }

template <class Derived>
Eigen::VectorXi ventiles(const Eigen::DenseBase<Derived>& values)
{
    const auto r = percentile_ranks(values);
    return r.unaryExpr([](auto x) { return ventile_of(static_cast<double>(x)); }).template cast<int>();
}

template <class Derived, class Label>
Eigen::VectorXi ventiles(const Eigen::DenseBase<Derived>& values, const std::vector<Label>& groups)
{
    const auto r = percentile_ranks(values, groups);
    return r.unaryExpr([](auto x) { return ventile_of(static_cast<double>(x)); }).template cast<int>();
}

/// One child/parent observation prior to ranking.
struct RankingRow {
    double child_value = 0.0;
    double parent_value = 0.0;
    int cohort = 0;
    std::optional<Sex> child_sex;
    std::optional<Sex> parent_sex;
};

struct RankedPair {
    double child_rank = 0.0;
    double parent_rank = 0.0;
    int cohort = 0;
    std::string group_key;
    /// Position of the source row.
    std::size_t source = 0;
};

enum class RankDimension { child, parent };

struct RankedTable {
    std::vector<RankedPair> rows;
    /// Source rows dropped because the ranked dimension had no sex.
    std::vector<std::size_t> excluded;
};

/// Cohort ranks for both margins, with the chosen dimension re-ranked inside
/// cohort x sex cells. The other margin is ranked within cohort.
RankedTable rerank_by_gender(const std::vector<RankingRow>& rows, RankDimension dimension);

/// Both margins ranked within cohort only.
RankedTable rank_by_cohort(const std::vector<RankingRow>& rows);

} // namespace mobility

#endif // MOBILITY_RANKING_HPP
