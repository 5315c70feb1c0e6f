#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace mathbode {

enum class TagStyle { tags, final_line };

/// How answers are requested in prompts and located in replies.
struct AnswerFormat {
    TagStyle style = TagStyle::tags;
    std::string start_tag = "[answer_start]";
    std::string end_tag = "[answer_end]";
    std::string final_prefix = "FINAL:";
};

TagStyle tag_style_from_string(std::string_view name);
std::string_view to_string(TagStyle style);

/// The instruction line appended to every prompt.
std::string answer_instruction(const AnswerFormat& format);

/// `transport` never comes out of parse_response; run_sweep uses it for rows
/// whose request failed after all retries.
enum class FailureReason { no_tag_pair, no_literal, non_finite, malformed, transport };

std::string_view to_string(FailureReason reason);
std::optional<FailureReason> failure_reason_from_string(std::string_view name);

struct ParsedAnswer {
    bool compliant = false;
    std::optional<double> value;
    std::optional<std::string> value_text;  // always six decimals when present
    std::optional<FailureReason> failure_reason;
};

/// Strict extraction: last complete tag pair, last decimal literal inside it,
/// textual truncation to six decimals. Never throws.
ParsedAnswer parse_response(std::string_view raw, const AnswerFormat& format = {});

/// Truncates (never rounds) a decimal literal to exactly six decimals, padding
/// with zeros. Throws MalformedLiteral when `literal` is not `-?digits[.digits]`.
std::string truncate6(std::string_view literal);

/// Renders a value on the answer grid: shortest fixed representation, then truncate6.
/// Throws DomainError for non-finite input.
std::string format_answer(double value);

/// The double obtained by parsing format_answer(value).
double quantize_answer(double value);

/// `[answer_start] <value_text> [answer_end]` (or `FINAL: <value_text>`).
std::string wrap_answer(std::string_view value_text, const AnswerFormat& format = {});

}  // namespace mathbode
