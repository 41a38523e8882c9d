#include "mobility/synthetic.hpp"

#include "mobility/calibration.hpp"
#include "mobility/error.hpp"
#include "mobility/random.hpp"

#include <algorithm>
#include <cmath>

namespace mobility {

namespace {

QuantileMap lognormal_map(double median, double sigma, double zero_mass)
{
    constexpr int knots = 400;
    std::vector<double> p, v;
    if (zero_mass > 0) {
        p = {0.0, zero_mass};
        v = {0.0, 0.0};
    }
    for (int i = 0; i < knots; ++i) {
        const double u = (i + 0.5) / knots;
        p.push_back(zero_mass + (1 - zero_mass) * u);
        v.push_back(median * std::exp(sigma * inverse_normal_cdf(u)));
    }
    return QuantileMap::from_knots(std::move(p), std::move(v));
}

double cents(double x) { return std::round(x * 100.0) / 100.0; }

} // namespace

RoleMaps reference_maps()
{
    return {lognormal_map(30000, 0.6, 0.0), lognormal_map(18000, 0.7, 0.10), lognormal_map(32000, 0.6, 0.0),
            lognormal_map(22000, 0.65, 0.05)};
}

std::filesystem::path truth_path(const std::filesystem::path& microdata_path)
{
    auto p = microdata_path;
    p += ".truth.tsv";
    return p;
}

SyntheticData generate_synthetic(std::span<const PlantedCohort> chain, const RoleMaps& maps, std::size_t families,
                                 std::uint64_t seed)
{
    if (chain.empty()) throw Error("generate_synthetic: no cohorts");
    if (families == 0) throw Error("generate_synthetic: need at least one family");

    SyntheticData out;
    out.persons.has_education = true;
    out.persons.has_occupation = true;
    out.persons.has_links = true;
    out.truth.columns = {"cohort", "psi", "kappa", "alpha", "phi_f", "phi_m", "phi_s", "phi_d", "families", "seed"};

    std::vector<int> years;
    for (const auto& c : chain) {
        c.params.validate();
        const std::uint64_t cohort_seed = stream_seed(seed, static_cast<std::uint64_t>(c.cohort));
        const SimPopulation pop = simulate_population(c.params, maps, families, cohort_seed);
        NormalStream extra(stream_seed(cohort_seed, 1));

        auto person = [&](std::size_t i, char role, int birth, Sex sex, double skill, double earn,
                          int first_year) {
            PersonRecord p;
            p.person_id = std::to_string(c.cohort) + "-" + std::to_string(i + 1) + "-" + role;
            p.birth_year = birth;
            p.sex = sex;
            for (int y = first_year; y < first_year + 3; ++y) {
                p.incomes[y] = cents(earn);
                years.push_back(y);
            }
            const double edu = 12.0 + 2.5 * (0.6 * skill + 0.8 * extra());
            p.education_years = std::max(0.0, std::round(edu * 10.0) / 10.0);
            const double z = 0.7 * skill + 0.714 * extra();
            const bool missing = extra.uniform() < 0.05;
            p.occupation_group = missing ? kMissingOccupation : std::clamp(static_cast<int>(normal_cdf(z) * 10), 0, 9);
            return p;
        };

        for (std::size_t i = 0; i < families; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            auto father = person(i, 'F', c.cohort - 30, Sex::male, pop.skill_father[k], pop.earn_father[k], c.cohort + 17);
            auto mother = person(i, 'M', c.cohort - 28, Sex::female, pop.skill_mother[k], pop.earn_mother[k], c.cohort + 17);
            auto son = person(i, 'S', c.cohort, Sex::male, pop.skill_son[k], pop.earn_son[k], c.cohort + 35);
            auto daughter = person(i, 'D', c.cohort, Sex::female, pop.skill_daughter[k], pop.earn_daughter[k], c.cohort + 35);
            son.father_id = daughter.father_id = father.person_id;
            son.mother_id = daughter.mother_id = mother.person_id;
            out.persons.persons.push_back(std::move(father));
            out.persons.persons.push_back(std::move(mother));
            out.persons.persons.push_back(std::move(son));
            out.persons.persons.push_back(std::move(daughter));
        }

        const auto& q = c.params;
        out.truth.rows.push_back({std::to_string(c.cohort), format_number(q.psi), format_number(q.kappa),
                                  format_number(q.alpha), format_number(q.phi_f), format_number(q.phi_m),
                                  format_number(q.phi_s), format_number(q.phi_d), std::to_string(families),
                                  std::to_string(seed)});
    }
    std::sort(years.begin(), years.end());
    years.erase(std::unique(years.begin(), years.end()), years.end());
    out.persons.income_years = std::move(years);
    return out;
}

void save_synthetic(const std::filesystem::path& path, const SyntheticData& data)
{
    save_microdata(path, data.persons);
    write_text_file(truth_path(path), data.truth.to_string());
}

std::vector<PlantedCohort> planted_from_tsv(const TsvTable& table)
{
    std::vector<PlantedCohort> out;
    for (auto& [cohort, params] : params_from_tsv(table)) out.push_back({cohort, params});
    return out;
}

} // namespace mobility
