#include "mathbode/families.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "mathbode/errors.hpp"
#include "mathbode/numfmt.hpp"

namespace mathbode {

namespace {

using namespace std::string_view_literals;

constexpr std::array kExponentialNames{"A"sv, "t"sv};
constexpr std::array kLinearSolveNames{"b"sv, "c"sv};
constexpr std::array kLinearSystemNames{"b"sv, "c"sv, "d"sv, "e"sv, "f"sv};
constexpr std::array kRatioNames{"k"sv};
constexpr std::array kTriangleNames{"s"sv};

std::size_t index_of(FamilyId id) { return static_cast<std::size_t>(id); }

double constant(const Constants& constants, std::string_view name) {
    auto it = constants.find(name);
    if (it == constants.end()) throw ConfigError(fmt::format("missing constant '{}'", name));
    return it->second;
}

double linear_system_det(const Constants& k, double p) {
    return p * constant(k, "d") - constant(k, "b") * constant(k, "c");
}

void check_singularity(FamilyId id, const Interval& range, const Constants& k) {
    switch (id) {
    case FamilyId::linear_solve:
        if (range.lo < kSingularityFloor && range.hi > -kSingularityFloor)
            throw SingularInstance(fmt::format(
                "linear_solve range [{}, {}] reaches |p| < {}", range.lo, range.hi,
                kSingularityFloor));
        break;
    case FamilyId::linear_system: {
        // det is affine in p, so the endpoints bound it over the interval.
        double lo = linear_system_det(k, range.lo);
        double hi = linear_system_det(k, range.hi);
        if (lo * hi <= 0.0 || std::min(std::abs(lo), std::abs(hi)) < kSingularityFloor)
            throw SingularInstance(fmt::format(
                "linear_system determinant spans [{}, {}], below floor {}", lo, hi,
                kSingularityFloor));
        break;
    }
    case FamilyId::ratio_saturation:
        if (constant(k, "k") <= 0.0 || range.lo <= 0.0)
            throw ConfigError("ratio_saturation needs k > 0 and p_min > 0");
        break;
    case FamilyId::exponential_interest:
        if (range.lo <= -1.0 || constant(k, "A") <= 0.0 || constant(k, "t") < 1.0)
            throw ConfigError("exponential_interest needs p > -1, A > 0, t >= 1");
        break;
    case FamilyId::similar_triangles:
        break;
    }
}

std::string fixed6(double v) { return format_fixed6(v); }
std::string num(double v) { return format_shortest(v); }

}  // namespace

std::string_view to_string(FamilyId id) {
    switch (id) {
    case FamilyId::exponential_interest: return "exponential_interest";
    case FamilyId::linear_solve: return "linear_solve";
    case FamilyId::linear_system: return "linear_system";
    case FamilyId::ratio_saturation: return "ratio_saturation";
    case FamilyId::similar_triangles: return "similar_triangles";
    }
    return "unknown";
}

std::optional<FamilyId> parse_family(std::string_view name) {
    for (FamilyId id : kAllFamilies)
        if (to_string(id) == name) return id;
    return std::nullopt;
}

FamilyId family_from_string(std::string_view name) {
    if (auto id = parse_family(name)) return *id;
    throw ConfigError(fmt::format(
        "unknown family '{}' (expected one of exponential_interest, linear_solve, "
        "linear_system, ratio_saturation, similar_triangles)",
        name));
}

std::span<const std::string_view> constant_names(FamilyId id) {
    switch (id) {
    case FamilyId::exponential_interest: return kExponentialNames;
    case FamilyId::linear_solve: return kLinearSolveNames;
    case FamilyId::linear_system: return kLinearSystemNames;
    case FamilyId::ratio_saturation: return kRatioNames;
    case FamilyId::similar_triangles: return kTriangleNames;
    }
    return {};
}

double FamilySpec::clip(double p_raw) const { return std::clamp(p_raw, p_range.lo, p_range.hi); }

double clip_to_range(const FamilySpec& spec, double p_raw) { return spec.clip(p_raw); }

FamilySpec make_family_spec(FamilyId id, Interval p_range,
                            std::array<Constants, kVariantsPerFamily> variants,
                            std::optional<double> p0, std::optional<double> epsilon) {
    if (!(std::isfinite(p_range.lo) && std::isfinite(p_range.hi) && p_range.lo < p_range.hi))
        throw ConfigError(fmt::format("{}: invalid p range [{}, {}]", to_string(id), p_range.lo,
                                      p_range.hi));
    FamilySpec spec;
    spec.id = id;
    spec.p_range = p_range;
    spec.p0 = p0.value_or(0.5 * (p_range.lo + p_range.hi));
    spec.epsilon_default = epsilon.value_or(0.10 * p_range.half_width());
    spec.variants = std::move(variants);

    if (!(spec.p0 > p_range.lo && spec.p0 < p_range.hi))
        throw ConfigError(fmt::format("{}: p0 {} not strictly inside range", to_string(id), spec.p0));
    if (!(spec.epsilon_default > 0.0))
        throw ConfigError(fmt::format("{}: epsilon must be positive", to_string(id)));
    if (!p_range.contains(spec.p0 - spec.epsilon_default) ||
        !p_range.contains(spec.p0 + spec.epsilon_default))
        throw ConfigError(fmt::format("{}: p0 +/- epsilon leaves the range", to_string(id)));

    for (const Constants& k : spec.variants) {
        for (std::string_view name : constant_names(id)) {
            auto it = k.find(name);
            if (it == k.end() || !std::isfinite(it->second))
                throw ConfigError(fmt::format("{}: variant missing constant '{}'", to_string(id), name));
        }
        check_singularity(id, p_range, k);
    }
    return spec;
}

double solve_closed_form(FamilyId family, const Constants& k, double p) {
    switch (family) {
    case FamilyId::linear_solve: {
        if (std::abs(p) < kSingularityFloor)
            throw SingularInstance(fmt::format("linear_solve: |p| = {} below floor", std::abs(p)));
        return (constant(k, "c") - constant(k, "b")) / p;
    }
    case FamilyId::ratio_saturation: {
        double denom = p + constant(k, "k");
        if (std::abs(denom) < kSingularityFloor)
            throw SingularInstance("ratio_saturation: p + k near zero");
        return p / denom;
    }
    case FamilyId::exponential_interest:
        return constant(k, "A") * std::pow(1.0 + p, constant(k, "t"));
    case FamilyId::linear_system: {
        // a x + b y = e ; c x + d y = f with a = p. Cramer's rule for x.
        double det = linear_system_det(k, p);
        if (std::abs(det) < kSingularityFloor)
            throw SingularInstance(fmt::format("linear_system: |det| = {} below floor", std::abs(det)));
        return (constant(k, "e") * constant(k, "d") - constant(k, "b") * constant(k, "f")) / det;
    }
    case FamilyId::similar_triangles:
        return constant(k, "s") * p;
    }
    throw ConfigError("unknown family");
}

double solve(const FamilySpec& spec, const ProblemInstance& instance) {
    if (instance.family != spec.id) throw ConfigError("instance family does not match spec");
    if (!spec.p_range.contains(instance.p))
        throw DomainError(fmt::format("{}: p = {} outside [{}, {}]", to_string(spec.id), instance.p,
                                      spec.p_range.lo, spec.p_range.hi));
    return solve_closed_form(instance.family, instance.constants, instance.p);
}

double quantize_parameter(double p) { return *parse_double(format_fixed6(p)); }

std::string render_prompt(const ProblemInstance& inst, const AnswerFormat& format) {
    const Constants& k = inst.constants;
    const std::string p = fixed6(inst.p);
    auto c = [&](std::string_view name) { return num(constant(k, name)); };
    std::string body;
    switch (inst.family) {
    case FamilyId::linear_solve:
        switch (inst.variant) {
        case 0: body = fmt::format("Solve for x: {} * x + {} = {}.", p, c("b"), c("c")); break;
        case 1: body = fmt::format("A number x satisfies {}x + {} = {}. What is x?", p, c("b"), c("c")); break;
        default:
            body = fmt::format("Multiplying an unknown number x by {} and then adding {} gives {}. "
                               "Find x.", p, c("b"), c("c"));
        }
        break;
    case FamilyId::ratio_saturation:
        switch (inst.variant) {
        case 0: body = fmt::format("Compute the ratio p / (p + k) for p = {} and k = {}.", p, c("k")); break;
        case 1:
            body = fmt::format("A saturating response is r = p / (p + {}). What is r when p = {}?",
                               c("k"), p);
            break;
        default:
            body = fmt::format("A tank receives {} units of inflow and {} units of bypass flow. "
                               "What fraction of the combined flow is inflow?", p, c("k"));
        }
        break;
    case FamilyId::exponential_interest:
        switch (inst.variant) {
        case 0:
            body = fmt::format("An account starts with {} dollars and earns interest at a rate of {} "
                               "per year, compounded annually. What is the balance after {} years?",
                               c("A"), p, c("t"));
            break;
        case 1: body = fmt::format("Compute {} * (1 + {})^{}.", c("A"), p, c("t")); break;
        default:
            body = fmt::format("A population of {} grows by a fraction {} every period. "
                               "How large is it after {} periods?", c("A"), p, c("t"));
        }
        break;
    case FamilyId::linear_system:
        switch (inst.variant) {
        case 0:
            body = fmt::format("Solve the system {}x + {}y = {} and {}x + {}y = {}. What is x?", p,
                               c("b"), c("e"), c("c"), c("d"), c("f"));
            break;
        case 1:
            body = fmt::format("Find x given the equations\n{} * x + {} * y = {}\n{} * x + {} * y = {}",
                               p, c("b"), c("e"), c("c"), c("d"), c("f"));
            break;
        default:
            body = fmt::format("Two unknowns x and y satisfy {}x + {}y = {} and {}x + {}y = {}. "
                               "Report the value of x.", p, c("b"), c("e"), c("c"), c("d"), c("f"));
        }
        break;
    case FamilyId::similar_triangles:
        switch (inst.variant) {
        case 0:
            body = fmt::format("Two triangles are similar with scale factor {}. A side of the first "
                               "triangle has length {}. How long is the corresponding side of the "
                               "second triangle?", p, c("s"));
            break;
        case 1:
            body = fmt::format("A map scale multiplies every length by {}. A triangle side of length "
                               "{} is redrawn at this scale. What is its new length?", p, c("s"));
            break;
        default:
            body = fmt::format("A triangle with a side of length {} is scaled by a factor of {}. "
                               "How long is the scaled side?", c("s"), p);
        }
        break;
    }
    return body + "\n" + answer_instruction(format);
}

FamilyCatalog FamilyCatalog::from_text(std::string text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("family config: {}", e.what()));
    }

    FamilyCatalog catalog;
    catalog.text_ = std::move(text);
    catalog.version_ = tree.get<int>("version", 0);
    if (catalog.version_ != 1)
        throw ConfigError(fmt::format("family config: unsupported version {}", catalog.version_));

    auto number = [](const pt::ptree& section, const std::string& key) -> std::optional<double> {
        auto raw = section.get_optional<std::string>(key);
        if (!raw) return std::nullopt;
        auto v = parse_double(*raw);
        if (!v) throw ConfigError(fmt::format("family config: '{}' is not a number", key));
        return v;
    };

    for (FamilyId id : kAllFamilies) {
        const std::string name(to_string(id));
        auto section = tree.get_child_optional(name);
        if (!section) throw ConfigError(fmt::format("family config: missing section [{}]", name));
        auto lo = number(*section, "p_min");
        auto hi = number(*section, "p_max");
        if (!lo || !hi) throw ConfigError(fmt::format("family config: [{}] needs p_min and p_max", name));

        std::array<Constants, kVariantsPerFamily> variants;
        for (int v = 0; v < kVariantsPerFamily; ++v) {
            for (std::string_view cname : constant_names(id)) {
                std::string key = fmt::format("v{}_{}", v, cname);
                auto value = number(*section, key);
                if (!value) throw ConfigError(fmt::format("family config: [{}] missing {}", name, key));
                variants[v].emplace(std::string(cname), *value);
            }
        }
        catalog.specs_[index_of(id)] = make_family_spec(
            id, Interval{*lo, *hi}, std::move(variants), number(*section, "p0"),
            number(*section, "epsilon"));
    }
    return catalog;
}

FamilyCatalog FamilyCatalog::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot open family config {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

const FamilyCatalog& FamilyCatalog::builtin() {
    static const FamilyCatalog catalog = from_text(std::string(builtin_family_config()));
    return catalog;
}

const FamilySpec& FamilyCatalog::spec(FamilyId id) const { return specs_[index_of(id)]; }

std::string FamilyCatalog::content_hash() const { return git_blob_sha1(text_); }

ProblemInstance FamilyCatalog::instance(FamilyId id, int variant, double p) const {
    if (variant < 0 || variant >= kVariantsPerFamily)
        throw ConfigError(fmt::format("variant {} out of range 0..{}", variant, kVariantsPerFamily - 1));
    const FamilySpec& s = spec(id);
    if (!s.p_range.contains(p))
        throw DomainError(fmt::format("{}: p = {} outside [{}, {}]", to_string(id), p, s.p_range.lo,
                                      s.p_range.hi));
    return ProblemInstance{id, variant, p, s.variants[variant]};
}

std::string git_blob_sha1(std::string_view content) {
    std::string header = fmt::format("blob {}", content.size());
    header.push_back('\0');

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, content.data(), content.size());
    EVP_DigestFinal_ex(ctx, digest, &length);
    EVP_MD_CTX_free(ctx);

    std::string hex;
    for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

}  // namespace mathbode
