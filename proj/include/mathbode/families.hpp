#pragma once

// The five closed-form problem families: domains, constants, exact solvers and
// prompt templates.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mathbode/parser.hpp"

namespace mathbode {

enum class FamilyId {
    exponential_interest,
    linear_solve,
    linear_system,
    ratio_saturation,
    similar_triangles,
};

inline constexpr std::array<FamilyId, 5> kAllFamilies{
    FamilyId::exponential_interest, FamilyId::linear_solve, FamilyId::linear_system,
    FamilyId::ratio_saturation, FamilyId::similar_triangles};

inline constexpr int kVariantsPerFamily = 3;

/// |p| for linear_solve and |det| for linear_system must stay above this over the
/// whole parameter range.
inline constexpr double kSingularityFloor = 0.1;

std::string_view to_string(FamilyId id);
std::optional<FamilyId> parse_family(std::string_view name);
/// Like parse_family but throws ConfigError naming the valid choices.
FamilyId family_from_string(std::string_view name);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const { return x >= lo && x <= hi; }
    double half_width() const { return 0.5 * (hi - lo); }
};

using Constants = std::map<std::string, double, std::less<>>;

/// Names of the constants a family needs per variant, in prompt order.
std::span<const std::string_view> constant_names(FamilyId id);

struct FamilySpec {
    FamilyId id{};
    Interval p_range;
    double p0 = 0.0;
    double epsilon_default = 0.0;
    std::array<Constants, kVariantsPerFamily> variants;

    double clip(double p_raw) const;
};

/// Validates and builds a spec. p0 defaults to the range midpoint and epsilon to
/// 10% of the half-range. Throws ConfigError (or SingularInstance when the range
/// reaches the singularity floor).
FamilySpec make_family_spec(FamilyId id, Interval p_range,
                            std::array<Constants, kVariantsPerFamily> variants,
                            std::optional<double> p0 = std::nullopt,
                            std::optional<double> epsilon = std::nullopt);

/// min(max(p_raw, p_min), p_max).
double clip_to_range(const FamilySpec& spec, double p_raw);

struct ProblemInstance {
    FamilyId family{};
    int variant = 0;
    double p = 0.0;
    Constants constants;
};

/// Closed form without the range check. Throws SingularInstance.
double solve_closed_form(FamilyId family, const Constants& constants, double p);

/// Exact answer; throws DomainError when p is outside the family range.
double solve(const FamilySpec& spec, const ProblemInstance& instance);

/// Rounds a driven value to the six decimals printed in prompts.
double quantize_parameter(double p);

std::string render_prompt(const ProblemInstance& instance, const AnswerFormat& format = {});

/// All five family specs plus the text they were loaded from.
class FamilyCatalog {
public:
    /// Parses the INI-style constants file. Throws ConfigError.
    static FamilyCatalog from_text(std::string text);
    static FamilyCatalog from_file(const std::filesystem::path& path);
    static const FamilyCatalog& builtin();

    const FamilySpec& spec(FamilyId id) const;
    int version() const { return version_; }
    const std::string& source_text() const { return text_; }
    /// git blob SHA-1 of the source text.
    std::string content_hash() const;

    /// Instance for (family, variant, p) with constants resolved; p must be in range.
    ProblemInstance instance(FamilyId id, int variant, double p) const;

private:
    std::string text_;
    int version_ = 0;
    std::array<FamilySpec, kAllFamilies.size()> specs_{};
};

/// Text of config/families.v1.ini, compiled in.
std::string_view builtin_family_config();

/// git-style blob hash: sha1("blob <len>\0" + content), lowercase hex.
std::string git_blob_sha1(std::string_view content);

}  // namespace mathbode
