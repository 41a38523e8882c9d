#include "mobility/regression.hpp"

namespace mobility {

MultipleFit fit_multiple(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const std::vector<std::string>& column_names)
{
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols() + 1;
    if (y.size() != n) throw Error("fit_multiple: length mismatch");
    if (n <= p) throw DegenerateError("fit_multiple: need more observations than coefficients");

    Eigen::MatrixXd design(n, p);
    design.col(0).setOnes();
    design.rightCols(p - 1) = X;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::string names;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < p; ++k) {
            const Eigen::Index col = perm(k);
            if (!names.empty()) names += ", ";
            if (col == 0) names += "(intercept)";
            else if (static_cast<std::size_t>(col - 1) < column_names.size()) names += column_names[col - 1];
            else names += "column " + std::to_string(col - 1);
        }
        throw DataError("collinear proxies: " + names);
    }

    MultipleFit fit;
    fit.coef = qr.solve(y);
    const Eigen::VectorXd resid = y - design * fit.coef;
    const Eigen::MatrixXd bread = (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd meat = design.transpose() * resid.array().square().matrix().asDiagonal() * design;
    const Eigen::MatrixXd cov = bread * meat * bread * (static_cast<double>(n) / static_cast<double>(n - p));
    fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return fit;
}

} // namespace mobility
