#include "mathbode/numfmt.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <system_error>

namespace mathbode {

std::string format_shortest(double value) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) return "nan";
    return std::string(buf.data(), end);
}

std::string format_fixed6(double value) {
    std::array<char, 400> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                   std::chars_format::fixed, 6);
    if (ec != std::errc{}) return "nan";
    return std::string(buf.data(), end);
}

std::optional<double> parse_double(std::string_view text) {
    if (text.empty()) return std::nullopt;
    // from_chars rejects a leading '+', which is fine for everything we write.
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

std::optional<long long> parse_int(std::string_view text) {
    if (text.empty()) return std::nullopt;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

}  // namespace mathbode
