#include "mobility/ranking.hpp"

namespace mobility {

namespace {

std::string cell_key(int cohort, std::optional<Sex> sex)
{
    std::string key = std::to_string(cohort);
    if (sex) key += std::string("|") + sex_code(*sex);
    return key;
}

RankedTable rank_rows(const std::vector<RankingRow>& rows, std::optional<RankDimension> dimension)
{
    RankedTable out;
    std::vector<std::size_t> kept;
    kept.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool missing = dimension && ((*dimension == RankDimension::child && !rows[i].child_sex) ||
                                           (*dimension == RankDimension::parent && !rows[i].parent_sex));
        (missing ? out.excluded : kept).push_back(i);
    }

    const auto n = static_cast<Eigen::Index>(kept.size());
    Eigen::VectorXd child(n), parent(n);
    std::vector<long long> child_key(kept.size()), parent_key(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto& r = rows[kept[k]];
        child(static_cast<Eigen::Index>(k)) = r.child_value;
        parent(static_cast<Eigen::Index>(k)) = r.parent_value;
        long long child_cell = r.cohort * 4LL;
        long long parent_cell = r.cohort * 4LL;
        if (dimension == RankDimension::child) child_cell += *r.child_sex == Sex::male ? 1 : 2;
        if (dimension == RankDimension::parent) parent_cell += *r.parent_sex == Sex::male ? 1 : 2;
        child_key[k] = child_cell;
        parent_key[k] = parent_cell;
    }
    const Eigen::VectorXd child_ranks = percentile_ranks(child, child_key);
    const Eigen::VectorXd parent_ranks = percentile_ranks(parent, parent_key);

    out.rows.reserve(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto& r = rows[kept[k]];
        std::optional<Sex> label_sex;
        if (dimension) label_sex = *dimension == RankDimension::child ? r.child_sex : r.parent_sex;
        out.rows.push_back({child_ranks(static_cast<Eigen::Index>(k)), parent_ranks(static_cast<Eigen::Index>(k)),
                            r.cohort, cell_key(r.cohort, label_sex), kept[k]});
    }
    return out;
}

} // namespace

RankedTable rerank_by_gender(const std::vector<RankingRow>& rows, RankDimension dimension)
{
    return rank_rows(rows, dimension);
}

RankedTable rank_by_cohort(const std::vector<RankingRow>& rows) { return rank_rows(rows, std::nullopt); }

} // namespace mobility
