#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace capeskit {

/// Writes `contents` to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

std::string read_text(const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Fixed-point with `decimals` digits; "-0.000" is normalized to "0.000".
std::string format_fixed(double v, int decimals);

/// Strict parse of a whole token; throws ParseError(line) on failure.
double parse_double(std::string_view token, int line = 0);
long long parse_int(std::string_view token, int line = 0);

/// Caps OpenMP threads from CAPESKIT_THREADS when set. Returns the active cap.
int apply_thread_cap_from_env();

}  // namespace capeskit
