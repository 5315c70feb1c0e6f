#pragma once

// Locale-independent number <-> text helpers shared by prompts, CSV and JSONL.

#include <optional>
#include <string>
#include <string_view>

namespace mathbode {

/// Shortest text that round-trips to the same double ("1", "0.1", "2.5").
std::string format_shortest(double value);

/// Fixed notation, correctly rounded to six decimals ("2.000000").
std::string format_fixed6(double value);

/// Parses a complete decimal/float token with from_chars; nullopt on any trailing junk.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

}  // namespace mathbode
