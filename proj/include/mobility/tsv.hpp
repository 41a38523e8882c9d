#ifndef MOBILITY_TSV_HPP
#define MOBILITY_TSV_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mobility {

std::vector<std::string> split_fields(std::string_view line, char sep);

std::string read_text_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: whole content, truncating.
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// Shortest round-trip decimal representation.
std::string format_number(double v);
/// Fixed-precision representation for report columns.
std::string format_fixed(double v, int digits);

double parse_double(std::string_view s, std::string_view what);
long long parse_integer(std::string_view s, std::string_view what);

/// Header + rows of tab-separated text.
struct TsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const;
    std::string to_string() const;
};

TsvTable parse_tsv(const std::string& text);
TsvTable load_tsv(const std::filesystem::path& path);

} // namespace mobility

#endif // MOBILITY_TSV_HPP
