#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace paccs::io {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

void write_f32le(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32le(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

struct CsvRecord {
    std::size_t line = 0;  // 1-based physical line on which the record starts
    std::vector<std::string> fields;
};

/// RFC-4180 reader: quoted fields may contain commas, CRLF and doubled quotes.
std::vector<CsvRecord> parse_csv(std::string_view text);

/// Quotes a field only when it needs it.
std::string csv_escape(std::string_view field);

}  // namespace paccs::io
