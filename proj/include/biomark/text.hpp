#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace biomark::text {

/// Shortest representation that parses back to the identical double.
std::string format_double(double v);

/// Strict full-string parse; returns false on trailing garbage or empty input.
bool parse_double(std::string_view s, double& out);

std::string_view trim(std::string_view s);

/// One parsed CSV record with its 1-based line number in the source file.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> cells;
};

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF. The first
/// row is returned as the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view content, const std::string& source_name);

/// Quotes a cell only when needed.
std::string csv_escape(std::string_view cell);
std::string csv_join(const std::vector<std::string>& cells);

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// FNV-1a 64-bit, rendered as 16 hex digits.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace biomark::text
