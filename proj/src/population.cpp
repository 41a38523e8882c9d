#include "mobility/population.hpp"

#include "mobility/error.hpp"
#include "mobility/tsv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace mobility {

namespace {

[[noreturn]] void cell_error(std::size_t row, const std::string& column, const std::string& what)
{
    throw DataError("row " + std::to_string(row) + ", column '" + column + "': " + what);
}

int parse_int(std::string_view cell, std::size_t row, const std::string& column)
{
    int v = 0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end) cell_error(row, column, "expected integer, got '" + std::string(cell) + "'");
    return v;
}

double parse_nonneg(std::string_view cell, std::size_t row, const std::string& column)
{
    double v = 0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        cell_error(row, column, "expected number, got '" + std::string(cell) + "'");
    if (v < 0) cell_error(row, column, "negative value '" + std::string(cell) + "'");
    return v;
}

} // namespace

std::unordered_map<std::string, std::size_t> PersonTable::index() const
{
    std::unordered_map<std::string, std::size_t> idx;
    idx.reserve(persons.size());
    for (std::size_t i = 0; i < persons.size(); ++i) idx.emplace(persons[i].person_id, i);
    return idx;
}

PersonTable parse_microdata(const std::string& text, const MicrodataSchema& schema)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty microdata file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_fields(line, ',');

    std::optional<std::size_t> c_id, c_birth, c_sex, c_edu, c_occ, c_father, c_mother, c_from, c_to;
    std::vector<std::pair<std::size_t, int>> income_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string& h = header[c];
        if (h == schema.person_id) c_id = c;
        else if (h == schema.birth_year) c_birth = c;
        else if (h == schema.sex) c_sex = c;
        else if (h == schema.education) c_edu = c;
        else if (h == schema.occupation) c_occ = c;
        else if (h == schema.father_id) c_father = c;
        else if (h == schema.mother_id) c_mother = c;
        else if (h == schema.resident_from) c_from = c;
        else if (h == schema.resident_to) c_to = c;
        else if (h.starts_with(schema.income_prefix)) {
            const std::string year = h.substr(schema.income_prefix.size());
            income_cols.emplace_back(c, parse_int(year, 0, h));
        }
    }
    if (!c_id) throw DataError("missing required column '" + schema.person_id + "'");
    if (!c_birth) throw DataError("missing required column '" + schema.birth_year + "'");
    if (!c_sex) throw DataError("missing required column '" + schema.sex + "'");
    if (income_cols.empty()) throw DataError("no income columns with prefix '" + schema.income_prefix + "'");
    if (c_father.has_value() != c_mother.has_value())
        throw DataError("link columns must appear together: '" + schema.father_id + "', '" + schema.mother_id + "'");
    if (c_from.has_value() != c_to.has_value())
        throw DataError("residency columns must appear together: '" + schema.resident_from + "', '" + schema.resident_to +
                        "'");

    PersonTable table;
    table.has_education = c_edu.has_value();
    table.has_occupation = c_occ.has_value();
    table.has_links = c_father.has_value();
    table.has_residency = c_from.has_value();
    for (const auto& [col, year] : income_cols) table.income_years.push_back(year);
    std::sort(table.income_years.begin(), table.income_years.end());
    if (std::adjacent_find(table.income_years.begin(), table.income_years.end()) != table.income_years.end())
        throw DataError("duplicate income year column");

    std::unordered_set<std::string> seen;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto cells = split_fields(line, ',');
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(cells.size()));

        PersonRecord p;
        p.person_id = cells[*c_id];
        if (p.person_id.empty()) cell_error(row, schema.person_id, "empty identifier");
        if (!seen.insert(p.person_id).second) cell_error(row, schema.person_id, "duplicate person_id '" + p.person_id + "'");

        p.birth_year = parse_int(cells[*c_birth], row, schema.birth_year);
        if (p.birth_year < schema.min_birth_year || p.birth_year > schema.max_birth_year)
            cell_error(row, schema.birth_year, "birth year out of range");

        const std::string& sex = cells[*c_sex];
        if (sex == "M") p.sex = Sex::male;
        else if (sex == "F") p.sex = Sex::female;
        else cell_error(row, schema.sex, "expected M or F, got '" + sex + "'");

        if (c_edu && !cells[*c_edu].empty()) p.education_years = parse_nonneg(cells[*c_edu], row, schema.education);
        if (c_occ && !cells[*c_occ].empty()) {
            p.occupation_group = parse_int(cells[*c_occ], row, schema.occupation);
            if (p.occupation_group < 0 || p.occupation_group > kMissingOccupation)
                cell_error(row, schema.occupation, "occupation group outside 0..10");
        }
        if (c_father && !cells[*c_father].empty()) p.father_id = cells[*c_father];
        if (c_mother && !cells[*c_mother].empty()) p.mother_id = cells[*c_mother];
        if (c_from && !cells[*c_from].empty()) p.resident_from = parse_int(cells[*c_from], row, schema.resident_from);
        if (c_to && !cells[*c_to].empty()) p.resident_to = parse_int(cells[*c_to], row, schema.resident_to);

        for (const auto& [col, year] : income_cols) {
            if (cells[col].empty()) continue;
            p.incomes.emplace(year, parse_nonneg(cells[col], row, header[col]));
        }
        table.persons.push_back(std::move(p));
    }
    return table;
}

PersonTable load_microdata(const std::filesystem::path& path, const MicrodataSchema& schema)
{
    return parse_microdata(read_text_file(path), schema);
}

std::string write_microdata(const PersonTable& table, const MicrodataSchema& schema)
{
    std::string out;
    out += schema.person_id + "," + schema.birth_year + "," + schema.sex;
    if (table.has_education) out += "," + schema.education;
    if (table.has_occupation) out += "," + schema.occupation;
    if (table.has_links) out += "," + schema.father_id + "," + schema.mother_id;
    if (table.has_residency) out += "," + schema.resident_from + "," + schema.resident_to;
    for (int y : table.income_years) out += "," + schema.income_prefix + std::to_string(y);
    out += '\n';

    for (const auto& p : table.persons) {
        out += p.person_id;
        out += ',' + std::to_string(p.birth_year) + ',' + sex_code(p.sex);
        if (table.has_education) {
            out += ',';
            if (p.education_years) out += format_number(*p.education_years);
        }
        if (table.has_occupation) out += ',' + std::to_string(p.occupation_group);
        if (table.has_links) out += ',' + p.father_id.value_or("") + ',' + p.mother_id.value_or("");
        if (table.has_residency) {
            out += ',';
            if (p.resident_from) out += std::to_string(*p.resident_from);
            out += ',';
            if (p.resident_to) out += std::to_string(*p.resident_to);
        }
        for (int y : table.income_years) {
            out += ',';
            if (auto it = p.incomes.find(y); it != p.incomes.end()) out += format_number(it->second);
        }
        out += '\n';
    }
    return out;
}

void save_microdata(const std::filesystem::path& path, const PersonTable& table, const MicrodataSchema& schema)
{
    write_text_file(path, write_microdata(table, schema));
}

std::vector<int> IncomeWindow::years(int birth_year) const
{
    // Either anchor resolves to "birth year of the anchoring person + age".
    std::vector<int> out;
    for (int a = center_age - half_width; a <= center_age + half_width; ++a) out.push_back(birth_year + a);
    return out;
}

std::optional<WindowAverage> average_income(const PersonRecord& person, const std::vector<int>& window)
{
    if (window.empty()) throw Error("average_income: empty window");
    // Summed in year order so the result does not depend on how the window
    // was listed.
    std::vector<int> years = window;
    std::sort(years.begin(), years.end());
    double total = 0.0;
    int used = 0;
    for (int year : years) {
        if (!person.resident_in(year)) continue;
        ++used;
        if (auto it = person.incomes.find(year); it != person.incomes.end()) total += it->second;
    }
    if (used == 0) return std::nullopt;
    return WindowAverage{total / used, used, used < static_cast<int>(window.size())};
}

LinkMap links_from_columns(const PersonTable& persons)
{
    LinkMap links;
    for (const auto& p : persons.persons)
        if (p.father_id || p.mother_id) links.emplace(p.person_id, std::make_pair(p.father_id, p.mother_id));
    return links;
}

namespace {

/// Residency defaults to the span of the file's income columns.
PersonRecord with_default_span(const PersonRecord& p, const PersonTable& t)
{
    PersonRecord r = p;
    if (!t.income_years.empty()) {
        if (!r.resident_from) r.resident_from = t.income_years.front();
        if (!r.resident_to) r.resident_to = t.income_years.back();
    }
    return r;
}

} // namespace

PairTable build_pairs(const PersonTable& persons, const LinkMap& links, const IncomeWindow& child_window,
                      const IncomeWindow& parent_window)
{
    if (child_window.half_width < 0 || parent_window.half_width < 0) throw Error("build_pairs: negative window half-width");
    if (child_window.center_age <= 0 || parent_window.center_age <= 0) throw Error("build_pairs: non-positive window center");

    const auto idx = persons.index();
    PairTable out;
    out.exclusions.candidates = links.size();

    auto resolve = [&](const std::optional<std::string>& id) -> std::optional<std::size_t> {
        if (!id) return std::nullopt;
        auto it = idx.find(*id);
        if (it == idx.end()) {
            ++out.exclusions.dangling_links;
            return std::nullopt;
        }
        return it->second;
    };

    // Keep person-table order so the output is independent of map ordering.
    std::vector<std::pair<std::size_t, const LinkMap::mapped_type*>> ordered;
    ordered.reserve(links.size());
    std::size_t unknown_children = 0;
    for (const auto& [child_id, parents] : links) {
        auto it = idx.find(child_id);
        if (it == idx.end()) {
            ++unknown_children;
            continue;
        }
        ordered.emplace_back(it->second, &parents);
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    out.exclusions.unknown_child = unknown_children;

    for (const auto& [child_idx, parents] : ordered) {
        const PersonRecord child = with_default_span(persons.persons[child_idx], persons);
        const auto father = resolve(parents->first);
        const auto mother = resolve(parents->second);
        if (!father && !mother) {
            ++out.exclusions.no_parent;
            continue;
        }

        const auto child_avg = average_income(child, child_window.years(child.birth_year));
        if (!child_avg) {
            ++out.exclusions.no_child_income;
            continue;
        }

        // Parent windows are anchored on the child's birth year when the
        // anchor is the child's age.
        auto parent_avg = [&](std::optional<std::size_t> pi) -> std::optional<WindowAverage> {
            if (!pi) return std::nullopt;
            const PersonRecord parent = with_default_span(persons.persons[*pi], persons);
            const int base =
                parent_window.anchor == IncomeWindow::Anchor::child_age ? child.birth_year : parent.birth_year;
            return average_income(parent, parent_window.years(base));
        };
        const auto f_avg = parent_avg(father);
        const auto m_avg = parent_avg(mother);
        if (!f_avg && !m_avg) {
            ++out.exclusions.no_parent_income;
            continue;
        }

        PairRecord pr;
        pr.child = child_idx;
        pr.father = f_avg ? father : std::nullopt;
        pr.mother = m_avg ? mother : std::nullopt;
        pr.child_cohort = child.birth_year;
        pr.child_sex = child.sex;
        pr.child_income = child_avg->value;
        if (f_avg) pr.father_income = f_avg->value;
        if (m_avg) pr.mother_income = m_avg->value;
        if (f_avg && m_avg) pr.parent_income = 0.5 * (f_avg->value + m_avg->value);
        else pr.parent_income = f_avg ? f_avg->value : m_avg->value;
        pr.partial_window = child_avg->partial || (f_avg && f_avg->partial) || (m_avg && m_avg->partial);
        out.pairs.push_back(pr);
    }
    return out;
}

PairTable build_pairs(const PersonTable& persons, const IncomeWindow& child_window, const IncomeWindow& parent_window)
{
    return build_pairs(persons, links_from_columns(persons), child_window, parent_window);
}

} // namespace mobility
