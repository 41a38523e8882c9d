#ifndef MOBILITY_REGRESSION_HPP
#define MOBILITY_REGRESSION_HPP

#include "mobility/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace mobility {

/// Neumaier-compensated running sum.
template <class Scalar>
class CompensatedSum {
public:
    void add(Scalar v)
    {
        const Scalar t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    Scalar value() const { return sum_ + comp_; }

private:
    Scalar sum_{0};
    Scalar comp_{0};
};

template <class Derived>
typename Derived::Scalar compensated_mean(const Eigen::DenseBase<Derived>& v)
{
    using Scalar = typename Derived::Scalar;
    CompensatedSum<Scalar> s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s.add(v.derived()(i));
    return s.value() / static_cast<Scalar>(v.size());
}

/// Sample covariance (divisor n - 1) with a fixed left-to-right summation order.
template <class DerivedA, class DerivedB>
typename DerivedA::Scalar covariance(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b)
{
    using Scalar = typename DerivedA::Scalar;
    const Eigen::Index n = a.size();
    if (n != b.size()) throw Error("covariance: length mismatch");
    if (n < 2) throw Error("covariance: need at least two observations");
    const Scalar ma = compensated_mean(a);
    const Scalar mb = compensated_mean(b);
    CompensatedSum<Scalar> s;
    for (Eigen::Index i = 0; i < n; ++i) s.add((a.derived()(i) - ma) * (b.derived()(i) - mb));
    return s.value() / static_cast<Scalar>(n - 1);
}

/// Bivariate OLS result with a heteroskedasticity-robust (HC1) slope SE.
template <class Scalar>
struct LinearFit {
    Scalar intercept{};
    Scalar slope{};
    Scalar se_slope{};
    std::size_t n = 0;
};

/// OLS of y on x with intercept, optionally weighted. Throws DegenerateError
/// when x has no (weighted) variation.
template <class DerivedY, class DerivedX>
LinearFit<typename DerivedY::Scalar> fit_line(const Eigen::DenseBase<DerivedY>& y_in,
                                              const Eigen::DenseBase<DerivedX>& x_in,
                                              const std::vector<typename DerivedY::Scalar>* weights = nullptr)
{
    using Scalar = typename DerivedY::Scalar;
    const auto& y = y_in.derived();
    const auto& x = x_in.derived();
    const Eigen::Index n = y.size();
    if (x.size() != n) throw Error("fit_line: length mismatch");
    if (weights && static_cast<Eigen::Index>(weights->size()) != n) throw Error("fit_line: weight length mismatch");
    if (n < 2) throw DegenerateError("degenerate regressor: fewer than two observations");

    auto w = [&](Eigen::Index i) -> Scalar { return weights ? (*weights)[static_cast<std::size_t>(i)] : Scalar(1); };

    CompensatedSum<Scalar> sw, swx, swy;
    for (Eigen::Index i = 0; i < n; ++i) {
        sw.add(w(i));
        swx.add(w(i) * x(i));
        swy.add(w(i) * y(i));
    }
    const Scalar wsum = sw.value();
    if (!(wsum > 0)) throw DegenerateError("degenerate regressor: zero total weight");
    const Scalar mx = swx.value() / wsum;
    const Scalar my = swy.value() / wsum;

    CompensatedSum<Scalar> sxx, sxy;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar dx = x(i) - mx;
        sxx.add(w(i) * dx * dx);
        sxy.add(w(i) * dx * (y(i) - my));
    }
    const Scalar Sxx = sxx.value();
    // Relative test so constant-but-rounded regressors are caught too.
    const Scalar scale = std::max(Scalar(1), std::abs(mx));
    if (!(Sxx > Scalar(1e-24) * scale * scale * wsum)) throw DegenerateError("degenerate regressor");

    LinearFit<Scalar> fit;
    fit.n = static_cast<std::size_t>(n);
    fit.slope = sxy.value() / Sxx;
    fit.intercept = my - fit.slope * mx;

    if (n > 2) {
        CompensatedSum<Scalar> meat;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar dx = x(i) - mx;
            const Scalar e = y(i) - fit.intercept - fit.slope * x(i);
            const Scalar we = w(i) * dx * e;
            meat.add(we * we);
        }
        const Scalar dof = static_cast<Scalar>(n) / static_cast<Scalar>(n - 2);
        fit.se_slope = std::sqrt(dof * meat.value()) / Sxx;
    }
    return fit;
}

/// Multiple OLS result; coefficient 0 is the intercept.
struct MultipleFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd se; // HC1
};

/// OLS of y on [1, X]. Collinear columns raise DataError naming them.
MultipleFit fit_multiple(const Eigen::Ref<const Eigen::VectorXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const std::vector<std::string>& column_names = {});

} // namespace mobility

#endif // MOBILITY_REGRESSION_HPP
