#ifndef MOBILITY_LW_HPP
#define MOBILITY_LW_HPP

#include "mobility/estimators.hpp"
#include "mobility/population.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobility {

/// Proxy variables for latent economic status, one row per person. Column 0
/// is always the anchor (log income). Columns are tagged with a block name so
/// contributions can be summed per block (e.g. all occupation dummies).
struct ProxyMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> labels;
    std::vector<std::string> blocks;
    /// Column dropped from the regression as the reference category, if any.
    std::optional<Eigen::Index> reference_column;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

/// Log earnings assigned to zero earners by default: log(threshold / 100).
inline double default_token_log(double participation_threshold) { return std::log(participation_threshold / 100.0); }

/// Builds [log income, education, occ_0..occ_9, occ_missing]. Zero incomes
/// take `token_log`; missing education takes the sample mean. The missing
/// occupation dummy is the reference category (or, when nobody is missing,
/// the highest populated group).
ProxyMatrix build_proxy_matrix(std::span<const double> income, std::span<const std::optional<double>> education,
                               std::span<const int> occupation, double token_log);

/// Anchor-only matrix for custom proxies: [anchor, extra...].
ProxyMatrix make_proxy_matrix(const Eigen::Ref<const Eigen::MatrixXd>& values, std::vector<std::string> labels,
                              std::vector<std::string> blocks = {});

struct LWFit {
    /// Per proxy column (reference column, if any, gets rho and b of 0).
    Eigen::VectorXd rho;
    Eigen::VectorXd b;
    double beta_lw = 0.0;
    std::vector<std::string> labels;
    std::vector<std::string> blocks;
};

/// Weights rho_j = cov(y, x_j) / cov(y, x_0) and multiple-OLS coefficients b
/// of y on all proxies (with intercept). Throws DegenerateError
/// "uninformative anchor proxy" when cov(y, x_0) vanishes and DataError
/// naming the columns when proxies are collinear.
LWFit lw_weights(const Eigen::Ref<const Eigen::VectorXd>& outcome, const ProxyMatrix& proxies);

/// sum_j rho_j b_j
double lw_beta(const LWFit& fit);

/// The status index (1 / beta_lw) * sum_j x_j b_j.
Eigen::VectorXd lw_index(const LWFit& fit, const ProxyMatrix& proxies);

/// Percentile ranks of the status index.
Eigen::VectorXd lw_index_ranks(const LWFit& fit, const ProxyMatrix& proxies);

/// OLS of child income ranks on parental index ranks.
EstimateRecord lw_rank_association(const Eigen::Ref<const Eigen::VectorXd>& child_income_ranks,
                                   const Eigen::Ref<const Eigen::VectorXd>& index_ranks, int cohort = 0,
                                   std::string label = "lw");

/// OLS of parent ranks on child ranks.
EstimateRecord flip_regression(const Eigen::Ref<const Eigen::VectorXd>& parent_ranks,
                               const Eigen::Ref<const Eigen::VectorXd>& child_ranks, int cohort = 0,
                               std::string label = "flipped");

/// rho_j b_j / beta_lw summed within each block.
std::map<std::string, double> proxy_contributions(const LWFit& fit);

struct LWSpec {
    std::string label;
    Sex child_sex = Sex::male;
    ParentRole parent = ParentRole::mother;
    /// Proxy the child instead of the parent and regress parent on child.
    bool flipped = false;
};

/// son-mother, son-father, daughter-father (flipped).
std::vector<LWSpec> standard_lw_specs();

struct LWEstimate {
    int cohort = 0;
    std::string spec_label;
    double beta_lw = 0.0;
    EstimateRecord rank_slope;
    EstimateRecord ira_slope;
    std::map<std::string, double> contributions;
};

struct LWOptions {
    double token_log = default_token_log(10000.0);
    std::optional<int> cohort_min;
    std::optional<int> cohort_max;
};

/// Per-cohort LW estimates; the companion IRA uses the same rows and ranks.
std::vector<LWEstimate> estimate_lw(const PersonTable& persons, const PairTable& pairs,
                                    const std::vector<LWSpec>& specs, const LWOptions& options = {});

TsvTable lw_tsv(std::span<const LWEstimate> estimates);

} // namespace mobility

#endif // MOBILITY_LW_HPP
