#ifndef MOBILITY_MODEL_HPP
#define MOBILITY_MODEL_HPP

#include "mobility/error.hpp"
#include "mobility/tsv.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mobility {

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Inverse standard normal CDF (Wichura AS241, ~1e-16 relative accuracy).
double inverse_normal_cdf(double p);

/// Latent-skill model parameters. phi_f and phi_s are the normalized male
/// skill returns and stay at 1 in calibration.
struct ModelParams {
    double psi = 0.0;   // assortative mating
    double kappa = 0.0; // skill transmission
    double alpha = 0.5; // within-gender weight
    double phi_f = 1.0;
    double phi_m = 1.0;
    double phi_s = 1.0;
    double phi_d = 1.0;

    /// sqrt(psi^2 + (1 - psi)^2)
    double gamma0() const { return std::sqrt(psi * psi + (1 - psi) * (1 - psi)); }
    /// Model-implied corr(x_F, x_M) = psi / gamma0.
    double parental_correlation() const { return psi / gamma0(); }
    /// Normalizer of child skills under the model-implied parental correlation.
    double gamma1() const;

    /// Throws Error when a parameter leaves its domain.
    void validate() const;

    bool operator==(const ModelParams&) const = default;
};

/// Calibrated parameters in a fixed order.
enum class Parameter { psi, kappa, alpha, phi_m, phi_d };
inline constexpr std::array<Parameter, 5> kCalibratedParameters{Parameter::psi, Parameter::kappa, Parameter::alpha,
                                                                 Parameter::phi_m, Parameter::phi_d};
std::string parameter_name(Parameter p);
Parameter parameter_from_name(const std::string& name);
double get(const ModelParams& m, Parameter p);
void set(ModelParams& m, Parameter p, double v);

/// Sweden, 1951 cohort.
ModelParams sweden_1951_params();

enum class Role { father, mother, son, daughter };

/// phi^k over the larger phi of its generation.
double effective_phi(const ModelParams& params, Role role);

/// Variance of a weighted mix a*x1 + (1-a)*x2 of unit normals with correlation rho.
inline double mix_variance(double a, double rho) { return a * a + (1 - a) * (1 - a) + 2 * a * (1 - a) * rho; }

/// Monotone map from a standard-normal index to earnings: z -> Q(Phi(z)),
/// with Q the piecewise-linear interpolant through (probability, earnings)
/// knots, flat outside the knot range.
class QuantileMap {
public:
    QuantileMap() = default;

    /// Knots at p_i = i / (n - 1) over the sorted sample (a single
    /// observation gives a constant map).
    static QuantileMap from_sample(std::vector<double> sample);
    /// Knots must have strictly increasing probabilities in [0,1] and
    /// non-decreasing values.
    static QuantileMap from_knots(std::vector<double> probabilities, std::vector<double> values);

    double quantile(double p) const;
    double operator()(double z) const { return quantile(normal_cdf(z)); }

    double min() const { return values_.front(); }
    double max() const { return values_.back(); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    const std::vector<double>& probabilities() const { return probs_; }
    const std::vector<double>& values() const { return values_; }

    /// Two columns: probability, earnings.
    TsvTable to_tsv() const;
    static QuantileMap from_tsv(const TsvTable& table);

private:
    std::vector<double> probs_;
    std::vector<double> values_;
    bool uniform_ = false;
};

struct RoleMaps {
    QuantileMap father, mother, son, daughter;
    const QuantileMap& operator[](Role r) const;
};

/// The standard-normal draws behind a simulated population. Holding these
/// fixed while parameters change gives common random numbers.
struct BaseDraws {
    Eigen::VectorXd father_skill; // x_F
    Eigen::VectorXd mating_noise; // u0
    Eigen::VectorXd child_noise;  // u1, shared by son and daughter
    Eigen::VectorXd eps_father, eps_mother, eps_son, eps_daughter;
    std::uint64_t seed = 0;

    Eigen::Index size() const { return father_skill.size(); }
};

/// Families are drawn in fixed-size blocks, each from its own counter-based
/// stream, so the draws depend only on (n, seed).
BaseDraws draw_base(std::size_t n, std::uint64_t seed);

inline constexpr std::size_t kDrawBlock = 8192;

/// x_M = (psi x_F + (1 - psi) u0) / gamma0.
template <class DerivedF, class DerivedU>
Eigen::VectorXd mother_skills(double psi, const Eigen::MatrixBase<DerivedF>& father, const Eigen::MatrixBase<DerivedU>& u0)
{
    const double g0 = std::sqrt(psi * psi + (1 - psi) * (1 - psi));
    return (psi * father + (1 - psi) * u0) / g0;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> draw_parental_skills(double psi, std::size_t n, std::uint64_t seed);

/// Child skills from parental skills and the shared child noise. gamma1 uses
/// `parental_correlation` (the model-implied value, not the sample one).
std::pair<Eigen::VectorXd, Eigen::VectorXd> transmit_skills(double kappa, double alpha, double parental_correlation,
                                                            const Eigen::Ref<const Eigen::VectorXd>& father,
                                                            const Eigen::Ref<const Eigen::VectorXd>& mother,
                                                            const Eigen::Ref<const Eigen::VectorXd>& child_noise);
/// Same, drawing the child noise from `seed` (the u1 stream of draw_base).
std::pair<Eigen::VectorXd, Eigen::VectorXd> transmit_skills(double kappa, double alpha, double parental_correlation,
                                                            const Eigen::Ref<const Eigen::VectorXd>& father,
                                                            const Eigen::Ref<const Eigen::VectorXd>& mother,
                                                            std::uint64_t seed);

/// phi~ x + (1 - phi~) eps for the role's effective phi.
template <class DerivedX, class DerivedE>
Eigen::VectorXd earnings_index(const ModelParams& params, const Eigen::MatrixBase<DerivedX>& skills,
                               const Eigen::MatrixBase<DerivedE>& noise, Role role)
{
    const double phi = effective_phi(params, role);
    return phi * skills + (1 - phi) * noise;
}

/// Standard deviation of the earnings index of a role (skills and noise are
/// independent unit normals).
inline double index_sd(const ModelParams& params, Role role)
{
    const double phi = effective_phi(params, role);
    return std::sqrt(phi * phi + (1 - phi) * (1 - phi));
}

QuantileMap fit_quantile_map(std::vector<double> earnings);

struct SimPopulation {
    Eigen::VectorXd skill_father, skill_mother, skill_son, skill_daughter;
    Eigen::VectorXd index_father, index_mother, index_son, index_daughter;
    Eigen::VectorXd earn_father, earn_mother, earn_son, earn_daughter;
    /// Joint parental earnings: father + mother.
    Eigen::VectorXd earn_parents;
    std::uint64_t seed = 0;

    Eigen::Index size() const { return skill_father.size(); }
};

/// Deterministic population for given draws. Indices are standardized by
/// their model standard deviation before the quantile map, so each role's
/// earnings follow its map's distribution.
SimPopulation simulate_from_draws(const ModelParams& params, const RoleMaps& maps, const BaseDraws& draws);
SimPopulation simulate_population(const ModelParams& params, const RoleMaps& maps, std::size_t n, std::uint64_t seed);

} // namespace mobility

#endif // MOBILITY_MODEL_HPP
