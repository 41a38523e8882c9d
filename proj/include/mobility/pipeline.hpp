#ifndef MOBILITY_PIPELINE_HPP
#define MOBILITY_PIPELINE_HPP

#include "mobility/calibration.hpp"
#include "mobility/estimators.hpp"
#include "mobility/population.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mobility {

inline constexpr const char* kVersion = "0.1.0";

enum class Stage { estimate, lw, calibrate, decompose };
std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

/// Everything a run depends on. Stage seeds come from `seed` via stage_seed:
/// calibration draws use SeedStage::calibrate, the random starting point
/// SeedStage::init and decomposition draws SeedStage::decompose.
struct PipelineConfig {
    std::filesystem::path input;
    std::filesystem::path output_dir = "out";
    std::vector<Stage> stages{Stage::estimate, Stage::lw, Stage::calibrate, Stage::decompose};

    IncomeWindow child_window{IncomeWindow::Anchor::own_age, 36, 1};
    IncomeWindow parent_window{IncomeWindow::Anchor::child_age, 18, 1};
    double participation_threshold = 10000.0;
    std::optional<ParticipationScope> participation;
    std::optional<int> cohort_min;
    std::optional<int> cohort_max;
    bool gender_rerank = true;
    bool estimate_ige = true;
    /// log income assigned to zero earners in the LW proxies; default
    /// log(participation_threshold / 100).
    std::optional<double> token_log;

    CalibrationSettings calibration;
    /// Analyzed ranges for trends and the decomposition; empty = all cohorts.
    std::vector<std::pair<int, int>> ranges;
    /// Pinned cohort of the counterfactuals; default: first cohort of each range.
    std::optional<int> baseline_cohort;
    std::size_t decompose_n = 100000;

    std::uint64_t seed = 1;

    /// Throws Error on an unknown key or a malformed value.
    void set(const std::string& key, const std::string& value);
    /// Throws Error when the config cannot run.
    void validate() const;
    /// Canonical key = value text of every setting (sorted, fixed formatting).
    std::string canonical() const;
};

/// key = value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);

/// File settings first, then overrides (flags win).
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

/// 64-bit FNV-1a, hex.
std::string fnv1a_hex(const std::string& bytes);

struct StageStatus {
    Stage stage = Stage::estimate;
    std::string status; // ok, failed, not_run
    std::string error;
    std::vector<std::string> outputs;
};

struct PipelineResult {
    bool ok = true;
    std::vector<StageStatus> stages;
};

/// Runs the selected stages in order (estimate, lw, calibrate, decompose),
/// writing TSVs under output_dir and always writing manifest.json. Stops at
/// the first failing stage; earlier outputs are kept.
PipelineResult run_pipeline(const PipelineConfig& config);

} // namespace mobility

#endif // MOBILITY_PIPELINE_HPP
