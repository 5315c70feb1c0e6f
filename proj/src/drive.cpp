#include "mathbode/drive.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <tuple>

#include <fmt/format.h>

#include "mathbode/errors.hpp"
#include "mathbode/numfmt.hpp"

namespace mathbode {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        auto item = trim(text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos));
        if (!item.empty()) {
            auto v = parse_double(item);
            if (!v) throw ConfigError(fmt::format("grid file: bad number '{}' in {}", item, key));
            out.push_back(*v);
        }
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

void sort_unique(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::string_view to_string(SignalType type) {
    switch (type) {
    case SignalType::sinusoid: return "sinusoid";
    case SignalType::chirp: return "chirp";
    case SignalType::step: return "step";
    }
    return "sinusoid";
}

SignalType signal_type_from_string(std::string_view name) {
    if (name == "sinusoid") return SignalType::sinusoid;
    if (name == "chirp") return SignalType::chirp;
    if (name == "step") return SignalType::step;
    throw ConfigError(fmt::format("unknown signal type '{}'", name));
}

std::string SweepPlan::key() const {
    return fmt::format("{}/q{}/{}/a{}/f{}/ph{}/T{}", to_string(family), variant, to_string(signal),
                       format_shortest(amplitude_scale), format_shortest(frequency),
                       format_shortest(phase_deg), steps);
}

bool plan_less(const SweepPlan& a, const SweepPlan& b) {
    // FamilyId enumerators are declared in alphabetical order.
    return std::tuple(a.family, a.variant, a.signal, a.amplitude_scale, a.frequency, a.phase_deg, a.steps) <
           std::tuple(b.family, b.variant, b.signal, b.amplitude_scale, b.frequency, b.phase_deg, b.steps);
}

bool near_nyquist(const SweepPlan& plan) { return plan.frequency > plan.steps / 4.0; }

std::vector<double> Preset::phases_at(double frequency) const {
    std::vector<double> out = phases_deg;
    if (std::find(tri_phase_frequencies.begin(), tri_phase_frequencies.end(), frequency) !=
        tri_phase_frequencies.end())
        out.insert(out.end(), tri_phases_deg.begin(), tri_phases_deg.end());
    sort_unique(out);
    return out;
}

Preset smoke_preset() { return {"SMOKE", {4, 8}, {0}, {}}; }
Preset mvp_preset() { return {"MVP", {4, 8, 16}, {0}, {}}; }
Preset mvp_plus_preset() { return {"MVP_PLUS", {1, 2, 4, 8, 16}, {0}, {4, 8}}; }
Preset full_preset() { return {"FULL", {1, 2, 4, 8, 16}, {0, 120, 240}, {}}; }

Preset preset_by_name(std::string_view name) {
    std::string upper;
    for (char c : name) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (upper == "SMOKE") return smoke_preset();
    if (upper == "MVP") return mvp_preset();
    if (upper == "MVP_PLUS") return mvp_plus_preset();
    if (upper == "FULL") return full_preset();
    throw ConfigError(fmt::format("unknown preset '{}' (expected SMOKE, MVP, MVP_PLUS or FULL)", name));
}

Preset preset_from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open grid file {}", path.string()));
    Preset preset;
    preset.name = path.stem().string();
    preset.tri_phases_deg.clear();
    bool tri_phases_set = false;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (trim(line).empty()) continue;
        if (eq == std::string::npos) throw ConfigError(fmt::format("grid file: expected key = value: '{}'", line));
        auto key = trim(std::string_view(line).substr(0, eq));
        auto value = trim(std::string_view(line).substr(eq + 1));
        if (key == "name") preset.name = value;
        else if (key == "frequencies") preset.frequencies = parse_list(key, value);
        else if (key == "phases") preset.phases_deg = parse_list(key, value);
        else if (key == "tri_phase_frequencies") preset.tri_phase_frequencies = parse_list(key, value);
        else if (key == "tri_phases") { preset.tri_phases_deg = parse_list(key, value); tri_phases_set = true; }
        else if (key == "steps") {
            auto steps = parse_int(value);
            if (!steps) throw ConfigError(fmt::format("grid file: bad steps '{}'", value));
            preset.steps = static_cast<int>(*steps);
        } else throw ConfigError(fmt::format("grid file: unknown key '{}'", key));
    }
    if (!tri_phases_set) preset.tri_phases_deg = {0.0, 120.0, 240.0};
    return preset;
}

std::vector<SweepPlan> expand_preset(const Preset& preset, const FamilyCatalog& catalog,
                                     const std::vector<FamilyId>& families,
                                     const std::vector<int>& variants,
                                     const std::vector<double>& amplitude_scales) {
    if (families.empty()) throw EmptyPlan("no families selected");
    if (variants.empty()) throw EmptyPlan("no variants selected");
    if (amplitude_scales.empty()) throw EmptyPlan("no amplitude scales selected");
    if (preset.frequencies.empty()) throw EmptyPlan(fmt::format("preset {} has no frequencies", preset.name));
    if (preset.steps < kMinSteps)
        throw ConfigError(fmt::format("preset {}: steps {} below minimum {}", preset.name, preset.steps, kMinSteps));
    for (double f : preset.frequencies)
        if (!(f > 0.0 && f < preset.steps / 2.0))
            throw ConfigError(fmt::format("preset {}: frequency {} outside (0, T/2)", preset.name, f));
    for (int v : variants)
        if (v < 0 || v >= kVariantsPerFamily) throw ConfigError(fmt::format("variant {} out of range", v));
    for (double s : amplitude_scales)
        if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError(fmt::format("bad amplitude scale {}", s));

    std::vector<SweepPlan> plans;
    for (FamilyId family : families) {
        const FamilySpec& spec = catalog.spec(family);
        for (int variant : variants)
            for (double scale : amplitude_scales)
                for (double f : preset.frequencies) {
                    auto phases = preset.phases_at(f);
                    if (phases.empty()) throw EmptyPlan(fmt::format("preset {} has no phases at f={}", preset.name, f));
                    for (double phase : phases) {
                        SweepPlan plan;
                        plan.family = family;
                        plan.variant = variant;
                        plan.steps = preset.steps;
                        plan.frequency = f;
                        plan.phase_deg = phase;
                        plan.amplitude_scale = scale;
                        plan.epsilon = spec.epsilon_default;
                        plan.p0 = spec.p0;
                        plans.push_back(plan);
                    }
                }
    }
    std::sort(plans.begin(), plans.end(), plan_less);
    plans.erase(std::unique(plans.begin(), plans.end(),
                            [](const SweepPlan& a, const SweepPlan& b) { return a.key() == b.key(); }),
                plans.end());
    return plans;
}

DrivePoint drive_at(const SweepPlan& plan, const FamilySpec& spec, int t) {
    if (plan.signal != SignalType::sinusoid)
        throw UnsupportedSignal(fmt::format("{} drives are not generated", to_string(plan.signal)));
    const double theta = 2.0 * std::numbers::pi * plan.frequency * t / plan.steps +
                         plan.phase_deg * std::numbers::pi / 180.0;
    DrivePoint point;
    point.t = t;
    point.p_raw = plan.p0 + plan.epsilon * plan.amplitude_scale * std::sin(theta);
    point.p = spec.clip(point.p_raw);
    point.clipped = point.p != point.p_raw;
    return point;
}

std::vector<DrivePoint> drive_series(const SweepPlan& plan, const FamilySpec& spec) {
    if (plan.signal != SignalType::sinusoid)
        throw UnsupportedSignal(fmt::format("{} drives are not generated", to_string(plan.signal)));
    std::vector<DrivePoint> series;
    series.reserve(static_cast<std::size_t>(plan.steps));
    for (int t = 1; t <= plan.steps; ++t) series.push_back(drive_at(plan, spec, t));
    return series;
}

}  // namespace mathbode
