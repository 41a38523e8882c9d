#ifndef MOBILITY_POPULATION_HPP
#define MOBILITY_POPULATION_HPP

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mobility {

enum class Sex { male, female };

constexpr char sex_code(Sex s) { return s == Sex::male ? 'M' : 'F'; }

/// Occupation code used for "missing / none".
inline constexpr int kMissingOccupation = 10;

struct PersonRecord {
    std::string person_id;
    int birth_year = 0;
    Sex sex = Sex::male;
    /// year -> income; a year absent from the map has no income record.
    std::map<int, double> incomes;
    std::optional<double> education_years;
    int occupation_group = kMissingOccupation;
    std::optional<std::string> father_id;
    std::optional<std::string> mother_id;
    /// Inclusive residency span; unset bounds default to the file's income span.
    std::optional<int> resident_from;
    std::optional<int> resident_to;

    bool resident_in(int year) const
    {
        return (!resident_from || year >= *resident_from) && (!resident_to || year <= *resident_to);
    }
};

/// Column-name configuration for load_microdata.
struct MicrodataSchema {
    std::string person_id = "person_id";
    std::string birth_year = "birth_year";
    std::string sex = "sex";
    std::string income_prefix = "inc_";
    std::string education = "edu_years";
    std::string occupation = "occ_group";
    std::string father_id = "father_id";
    std::string mother_id = "mother_id";
    std::string resident_from = "resident_from";
    std::string resident_to = "resident_to";
    int min_birth_year = 1800;
    int max_birth_year = 2100;
};

struct PersonTable {
    std::vector<PersonRecord> persons;
    /// Income years declared in the header, ascending.
    std::vector<int> income_years;
    /// Which optional columns were present (kept so writing is lossless).
    bool has_education = false;
    bool has_occupation = false;
    bool has_links = false;
    bool has_residency = false;

    std::unordered_map<std::string, std::size_t> index() const;
};

/// Parses the population CSV. Throws DataError naming row and column on a
/// malformed cell, and on duplicate person ids. Row numbers are 1-based data
/// rows (the header is row 0).
PersonTable load_microdata(const std::filesystem::path& path, const MicrodataSchema& schema = {});
PersonTable parse_microdata(const std::string& text, const MicrodataSchema& schema = {});

/// Canonical CSV writer; parse_microdata(write_microdata(t)) reproduces t and
/// write_microdata is a fixed point on its own output.
std::string write_microdata(const PersonTable& table, const MicrodataSchema& schema = {});
void save_microdata(const std::filesystem::path& path, const PersonTable& table, const MicrodataSchema& schema = {});

struct IncomeWindow {
    enum class Anchor { child_age, own_age };
    Anchor anchor = Anchor::own_age;
    int center_age = 36;
    int half_width = 1;

    /// Calendar years of the window for a person of `birth_year` (own age) or
    /// whose child was born in `birth_year` (child age).
    std::vector<int> years(int birth_year) const;
};

struct WindowAverage {
    double value = 0.0;
    /// Resident years actually averaged over.
    int years_used = 0;
    /// True when the person was resident in only part of the window.
    bool partial = false;
};

/// Mean income over the resident years of `window`; resident years without an
/// income record count as zero. Returns nullopt when resident in no window
/// year. Throws Error on an empty window.
std::optional<WindowAverage> average_income(const PersonRecord& person, const std::vector<int>& window);

struct PairRecord {
    std::size_t child = 0;
    std::optional<std::size_t> father;
    std::optional<std::size_t> mother;
    int child_cohort = 0;
    Sex child_sex = Sex::male;

    double child_income = 0.0;
    std::optional<double> father_income;
    std::optional<double> mother_income;
    /// Mean of available parent averages.
    double parent_income = 0.0;
    /// Any average used fewer years than the window.
    bool partial_window = false;
};

struct ExclusionReport {
    std::size_t candidates = 0;
    std::size_t no_parent = 0;
    std::size_t no_child_income = 0;
    std::size_t no_parent_income = 0;
    std::size_t unknown_child = 0;
    /// Links naming an absent person (informational; not an exclusion).
    std::size_t dangling_links = 0;

    std::size_t total() const { return no_parent + no_child_income + no_parent_income + unknown_child; }
};

struct PairTable {
    std::vector<PairRecord> pairs;
    ExclusionReport exclusions;
};

/// child id -> (father id, mother id).
using LinkMap = std::map<std::string, std::pair<std::optional<std::string>, std::optional<std::string>>>;

/// Links taken from the father_id/mother_id columns: every person with at
/// least one link cell filled is a candidate child.
LinkMap links_from_columns(const PersonTable& persons);

/// Forms parent-child pairs. Each key of `links` is a candidate child; a link
/// naming an absent person is treated as no parent. Pairs keep the order of
/// the person table. Candidates in = pairs out + exclusions.total().
PairTable build_pairs(const PersonTable& persons, const LinkMap& links,
                      const IncomeWindow& child_window = {IncomeWindow::Anchor::own_age, 36, 1},
                      const IncomeWindow& parent_window = {IncomeWindow::Anchor::child_age, 18, 1});

PairTable build_pairs(const PersonTable& persons, const IncomeWindow& child_window = {IncomeWindow::Anchor::own_age, 36, 1},
                      const IncomeWindow& parent_window = {IncomeWindow::Anchor::child_age, 18, 1});

} // namespace mobility

#endif // MOBILITY_POPULATION_HPP
