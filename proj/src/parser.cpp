#include "mathbode/parser.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "mathbode/errors.hpp"
#include "mathbode/numfmt.hpp"

namespace mathbode {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_word(char c) { return is_digit(c) || is_alpha(c) || c == '_'; }

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

// Characters that, glued to a number, make it something other than a plain
// literal: exponents, units, percent and currency signs.
bool is_attached_unit(char c) { return is_word(c) || c == '%' || c == '$'; }

struct Token {
    enum class Kind { literal, non_finite } kind;
    std::string_view text;
};

bool is_non_finite_word(std::string_view word) {
    std::string w;
    for (char c : word) w.push_back(lower(c));
    return w == "nan" || w == "inf" || w == "infinity";
}

// Left-to-right scan for decimal literals and NaN/Inf words.
std::vector<Token> scan(std::string_view s) {
    std::vector<Token> tokens;
    const std::size_t n = s.size();
    std::size_t i = 0;
    auto skip_while = [&](auto pred) {
        while (i < n && pred(s[i])) ++i;
    };
    auto starts_number = [&](std::size_t at) {
        if (at >= n) return false;
        if (is_digit(s[at])) return true;
        return s[at] == '.' && at + 1 < n && is_digit(s[at + 1]);
    };

    while (i < n) {
        const char ch = s[i];
        if (is_alpha(ch) || ch == '_') {
            std::size_t start = i;
            skip_while(is_word);
            if (is_non_finite_word(s.substr(start, i - start)))
                tokens.push_back({Token::Kind::non_finite, s.substr(start, i - start)});
            continue;
        }
        const bool minus = ch == '-' && starts_number(i + 1);
        if (!minus && !starts_number(i)) {
            ++i;
            continue;
        }
        const char prev = i > 0 ? s[i - 1] : ' ';
        if (minus && (is_word(prev) || prev == '.')) {
            // Binary minus ("3-2"): the digits that follow start their own literal.
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (minus) ++i;
        skip_while(is_digit);
        if (i < n && s[i] == '.') {
            ++i;
            skip_while(is_digit);
        }
        const std::size_t end = i;

        bool rejected = is_word(prev) || prev == '$' || prev == '.';
        if (i < n && is_attached_unit(s[i])) rejected = true;              // 1e5, 5kg, 5%
        if (i + 1 < n && (s[i] == ',' || s[i] == '.') && is_digit(s[i + 1]))
            rejected = true;                                                // 1,000 or 1.2.3
        if (rejected) {
            skip_while([](char c) { return is_attached_unit(c) || is_digit(c) || c == '.' || c == ',' ||
                                           c == '+' || c == '-'; });
            continue;
        }
        tokens.push_back({Token::Kind::literal, s.substr(start, end - start)});
    }
    return tokens;
}

ParsedAnswer failure(FailureReason reason) {
    ParsedAnswer out;
    out.failure_reason = reason;
    return out;
}

std::optional<std::string_view> tag_payload(std::string_view raw, const AnswerFormat& format) {
    if (format.style == TagStyle::final_line) {
        auto pos = raw.rfind(format.final_prefix);
        if (pos == std::string_view::npos) return std::nullopt;
        auto rest = raw.substr(pos + format.final_prefix.size());
        auto eol = rest.find_first_of("\r\n");
        return rest.substr(0, eol);
    }
    auto end = raw.rfind(format.end_tag);
    if (end == std::string_view::npos) return std::nullopt;
    auto start = raw.substr(0, end).rfind(format.start_tag);
    if (start == std::string_view::npos) return std::nullopt;
    auto begin = start + format.start_tag.size();
    return raw.substr(begin, end - begin);
}

bool is_literal(std::string_view s) {
    std::size_t i = 0;
    if (i < s.size() && s[i] == '-') ++i;
    std::size_t int_digits = 0;
    while (i < s.size() && is_digit(s[i])) ++i, ++int_digits;
    std::size_t frac_digits = 0;
    if (i < s.size() && s[i] == '.') {
        ++i;
        while (i < s.size() && is_digit(s[i])) ++i, ++frac_digits;
    }
    return i == s.size() && (int_digits > 0 || frac_digits > 0);
}

}  // namespace

TagStyle tag_style_from_string(std::string_view name) {
    if (name == "tags") return TagStyle::tags;
    if (name == "final") return TagStyle::final_line;
    throw ConfigError(fmt::format("unknown tag style '{}' (expected tags or final)", name));
}

std::string_view to_string(TagStyle style) {
    return style == TagStyle::tags ? "tags" : "final";
}

std::string answer_instruction(const AnswerFormat& format) {
    if (format.style == TagStyle::final_line)
        return fmt::format("Give only the final answer on a single line as {} X.YYYYYY, a decimal "
                           "number with exactly six digits after the decimal point.",
                           format.final_prefix);
    return fmt::format("Give only the final answer as {} X.YYYYYY {}, a decimal number with exactly "
                       "six digits after the decimal point.",
                       format.start_tag, format.end_tag);
}

std::string_view to_string(FailureReason reason) {
    switch (reason) {
    case FailureReason::no_tag_pair: return "no_tag_pair";
    case FailureReason::no_literal: return "no_literal";
    case FailureReason::non_finite: return "non_finite";
    case FailureReason::malformed: return "malformed";
    case FailureReason::transport: return "transport";
    }
    return "malformed";
}

std::optional<FailureReason> failure_reason_from_string(std::string_view name) {
    for (auto r : {FailureReason::no_tag_pair, FailureReason::no_literal, FailureReason::non_finite,
                   FailureReason::malformed, FailureReason::transport})
        if (to_string(r) == name) return r;
    return std::nullopt;
}

ParsedAnswer parse_response(std::string_view raw, const AnswerFormat& format) {
    auto payload = tag_payload(raw, format);
    if (!payload) return failure(FailureReason::no_tag_pair);

    auto tokens = scan(*payload);
    if (tokens.empty()) return failure(FailureReason::no_literal);
    const Token& last = tokens.back();
    if (last.kind == Token::Kind::non_finite) return failure(FailureReason::non_finite);

    std::string text = truncate6(last.text);
    auto value = parse_double(text);
    // Only a literal too long for a double gets here.
    if (!value || !std::isfinite(*value)) return failure(FailureReason::malformed);

    ParsedAnswer out;
    out.compliant = true;
    out.value = *value;
    out.value_text = std::move(text);
    return out;
}

std::string truncate6(std::string_view literal) {
    if (!is_literal(literal)) throw MalformedLiteral(fmt::format("not a decimal literal: '{}'", literal));
    std::string out;
    if (literal.front() == '-') {
        out.push_back('-');
        literal.remove_prefix(1);
    }
    auto dot = literal.find('.');
    std::string_view int_part = literal.substr(0, dot);
    std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : literal.substr(dot + 1);

    while (int_part.size() > 1 && int_part.front() == '0') int_part.remove_prefix(1);
    out += int_part.empty() ? "0" : std::string(int_part);
    out.push_back('.');
    out += frac_part.substr(0, 6);
    out.append(6 - std::min<std::size_t>(6, frac_part.size()), '0');
    return out;
}

std::string format_answer(double value) {
    if (!std::isfinite(value)) throw DomainError("cannot format a non-finite answer");
    std::array<char, 400> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed);
    if (ec != std::errc{}) throw DomainError("answer too large to format");
    return truncate6(std::string_view(buf.data(), static_cast<std::size_t>(end - buf.data())));
}

double quantize_answer(double value) { return *parse_double(format_answer(value)); }

std::string wrap_answer(std::string_view value_text, const AnswerFormat& format) {
    if (format.style == TagStyle::final_line) return fmt::format("{} {}", format.final_prefix, value_text);
    return fmt::format("{} {} {}", format.start_tag, value_text, format.end_tag);
}

}  // namespace mathbode
