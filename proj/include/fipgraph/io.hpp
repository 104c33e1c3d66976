#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace fipgraph {

/// Shortest decimal text that round-trips to the same double.
[[nodiscard]] std::string format_double(double v);

[[nodiscard]] std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lower-case hex SHA-256.
[[nodiscard]] std::string sha256_hex(std::string_view data);

}  // namespace fipgraph
