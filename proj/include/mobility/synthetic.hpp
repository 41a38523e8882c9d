#ifndef MOBILITY_SYNTHETIC_HPP
#define MOBILITY_SYNTHETIC_HPP

#include "mobility/model.hpp"
#include "mobility/population.hpp"
#include "mobility/tsv.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mobility {

struct PlantedCohort {
    int cohort = 0;
    ModelParams params;
};

/// Deterministic lognormal earnings maps (median 30,000 for men) with a zero
/// mass at the bottom for mothers (10%) and daughters (5%).
RoleMaps reference_maps();

struct SyntheticData {
    PersonTable persons;
    /// Ground truth: the planted parameters per cohort plus seed and size.
    TsvTable truth;
};

/// Four persons per family (father, mother, son, daughter). Fathers are born
/// 30 years and mothers 28 years before the cohort. Child incomes are
/// recorded at ages 35-37 and parent incomes when the children are 17-19,
/// constant across each window and rounded to cents, so window averages
/// equal the simulated earnings. Education and occupation are noisy
/// functions of skill; about 5% of occupations are missing. Cohort c draws
/// from stream_seed(seed, c).
SyntheticData generate_synthetic(std::span<const PlantedCohort> chain, const RoleMaps& maps, std::size_t families,
                                 std::uint64_t seed);

/// Writes the microdata CSV to `path` and the ground truth next to it as
/// `<path>.truth.tsv`.
void save_synthetic(const std::filesystem::path& path, const SyntheticData& data);

std::filesystem::path truth_path(const std::filesystem::path& microdata_path);

/// Reads planted parameters from a ground-truth or calibration TSV.
std::vector<PlantedCohort> planted_from_tsv(const TsvTable& table);

} // namespace mobility

#endif // MOBILITY_SYNTHETIC_HPP
