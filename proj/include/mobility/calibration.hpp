#ifndef MOBILITY_CALIBRATION_HPP
#define MOBILITY_CALIBRATION_HPP

#include "mobility/error.hpp"
#include "mobility/model.hpp"
#include "mobility/population.hpp"
#include "mobility/tsv.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobility {

/// The five rank slopes matched in calibration:
///   [0] father on mother (mother ventiles)  [1] father on son
///   [2] father on daughter                  [3] mother on son
///   [4] mother on daughter
struct MomentVector {
    std::array<double, 5> beta{};

    double operator[](std::size_t i) const { return beta[i]; }
    double& operator[](std::size_t i) { return beta[i]; }
    Eigen::Map<const Eigen::Matrix<double, 5, 1>> vec() const { return Eigen::Map<const Eigen::Matrix<double, 5, 1>>(beta.data()); }
    bool operator==(const MomentVector&) const = default;
};

inline constexpr std::array<const char*, 5> kMomentNames{"father_mother", "father_son", "father_daughter",
                                                         "mother_son", "mother_daughter"};

/// One row per child: both parents' earnings (NaN when absent), the child's
/// earnings and sex. Empirical pair tables and simulated populations are
/// both reduced to this before computing moments.
struct MomentData {
    Eigen::VectorXd father;
    Eigen::VectorXd mother;
    Eigen::VectorXd child;
    std::vector<Sex> child_sex;
};

/// Two rows per simulated family: the son and the daughter.
MomentData moment_data(const SimPopulation& population);
/// Pairs of one cohort.
MomentData moment_data(const PairTable& pairs, int cohort);

/// Parent ranks within each parent's column, child ranks within sex, then
/// the five OLS slopes. Throws DegenerateError naming the moment.
MomentVector moment_vector(const MomentData& data);

struct Bounds {
    double lower = 0.0;
    double upper = 1.0;
};

struct CalibrationSettings {
    std::size_t n_sim = 100000;
    int max_iters = 200;
    /// First trial step of each line search (a full damped Gauss-Newton step).
    double initial_step = 1.0;
    /// Halvings tried before an iteration is declared unsuccessful.
    int max_backtracks = 8;
    double fd_step = 1e-3;
    /// Stop once the loss falls below this.
    double tolerance = 1e-7;
    /// Stop after this many iterations without a relative improvement of
    /// `min_improvement` in the best loss.
    int patience = 12;
    double min_improvement = 1e-3;
    /// Plain projected gradient instead of the damped Gauss-Newton direction.
    bool plain_gradient = false;
    std::uint64_t seed = 20240517;
    std::array<double, 5> weights{1, 1, 1, 1, 1};
    std::array<Bounds, 5> bounds{{{0, 1}, {0, 1}, {0, 1}, {0, 2}, {0, 2}}};

    void validate() const;
};

/// Simulated moments under common random numbers: the base draws are fixed
/// at construction, so evaluation is a deterministic function of params.
class SimulatedMoments {
public:
    SimulatedMoments(RoleMaps maps, std::size_t n, std::uint64_t seed);
    SimulatedMoments(RoleMaps maps, BaseDraws draws);

    MomentVector operator()(const ModelParams& params) const;
    const BaseDraws& draws() const { return draws_; }
    const RoleMaps& maps() const { return maps_; }

private:
    RoleMaps maps_;
    BaseDraws draws_;
};

/// Weighted sum of squared moment gaps.
double moment_loss(const MomentVector& simulated, const MomentVector& target, const std::array<double, 5>& weights);

struct TraceEntry {
    int iteration = 0;
    ModelParams params;
    double loss = 0.0;
};

struct CalibratedParams {
    ModelParams params;
    MomentVector moments;
    double fit_distance = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Best-seen point after each iteration (loss is non-increasing).
    std::vector<TraceEntry> trace;
};

class CalibrationError : public Error {
public:
    CalibrationError(const std::string& what, std::vector<TraceEntry> trace)
        : Error(what), trace_(std::move(trace))
    {
    }
    const std::vector<TraceEntry>& trace() const { return trace_; }

private:
    std::vector<TraceEntry> trace_;
};

/// Random starting point drawn from the interior of the parameter boxes.
ModelParams random_init(std::uint64_t seed, const CalibrationSettings& settings = {});

/// Projects onto the parameter boxes.
ModelParams project(ModelParams params, const CalibrationSettings& settings);

CalibratedParams calibrate_cohort(const MomentVector& targets, const ModelParams& init,
                                  const CalibrationSettings& settings, const SimulatedMoments& simulator);
CalibratedParams calibrate_cohort(const MomentVector& targets, const ModelParams& init,
                                  const CalibrationSettings& settings, const RoleMaps& maps);

struct CohortTarget {
    int cohort = 0;
    MomentVector targets;
    RoleMaps maps;
};

struct CohortCalibration {
    int cohort = 0;
    std::optional<CalibratedParams> result;
    /// Parameters carried forward (the result, or the last good ones).
    ModelParams params;
    std::string error;
};

/// Warm-started chain: the first cohort starts from random_init(seed), each
/// later one from the previous cohort's parameters. All cohorts share the
/// same base draws. A failing cohort is recorded and the chain continues.
std::vector<CohortCalibration> calibrate_sequence(const std::vector<CohortTarget>& cohorts,
                                                  const CalibrationSettings& settings,
                                                  std::optional<ModelParams> init = std::nullopt);

TsvTable targets_tsv(const std::vector<std::pair<int, MomentVector>>& targets);
std::vector<std::pair<int, MomentVector>> targets_from_tsv(const TsvTable& table);

/// Per-cohort parameters and fit diagnostics. The settings are echoed as
/// comment lines so the output records its own configuration.
std::string calibration_tsv(const std::vector<CohortCalibration>& chain, const CalibrationSettings& settings);
/// Reads (cohort, params) back from calibration_tsv output.
std::vector<std::pair<int, ModelParams>> params_from_tsv(const TsvTable& table);

} // namespace mobility

#endif // MOBILITY_CALIBRATION_HPP
