#pragma once

#include "mobility/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

namespace testing_support {

/// n draws from a standard bivariate normal with correlation rho.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> bivariate_normal(Eigen::Index n, double rho, std::uint64_t seed)
{
    mobility::NormalStream z(seed);
    Eigen::VectorXd a(n), b(n);
    const double s = std::sqrt(1 - rho * rho);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i) = z();
        b(i) = rho * a(i) + s * z();
    }
    return {a, b};
}

inline Eigen::VectorXd normals(Eigen::Index n, std::uint64_t seed)
{
    mobility::NormalStream z(seed);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = z();
    return v;
}

inline double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    const Eigen::VectorXd da = a.array() - a.mean();
    const Eigen::VectorXd db = b.array() - b.mean();
    return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

inline double variance(const Eigen::VectorXd& a)
{
    return (a.array() - a.mean()).square().sum() / static_cast<double>(a.size() - 1);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("mobility_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testing_support
