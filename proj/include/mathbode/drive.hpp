#pragma once

// Sweep plans, presets and the sinusoidal drive of the family parameter.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mathbode/families.hpp"

namespace mathbode {

enum class SignalType { sinusoid, chirp, step };

std::string_view to_string(SignalType type);
SignalType signal_type_from_string(std::string_view name);

inline constexpr int kDefaultSteps = 64;
inline constexpr int kMinSteps = 8;

/// One experimental condition.
struct SweepPlan {
    FamilyId family{};
    int variant = 0;
    int steps = kDefaultSteps;
    double frequency = 1.0;  // cycles per `steps`
    double phase_deg = 0.0;
    double amplitude_scale = 1.0;
    double epsilon = 0.0;
    double p0 = 0.0;
    SignalType signal = SignalType::sinusoid;

    /// Stable identifier, e.g. "linear_solve/q0/sinusoid/a1/f4/ph120/T64".
    std::string key() const;
};

/// Dataset sort order: family, variant, signal, scale, frequency, phase.
bool plan_less(const SweepPlan& a, const SweepPlan& b);

/// True when the drive frequency exceeds T/4 and aliasing starts to matter.
bool near_nyquist(const SweepPlan& plan);

struct Preset {
    std::string name;
    std::vector<double> frequencies;
    std::vector<double> phases_deg;             // used at every frequency
    std::vector<double> tri_phase_frequencies;  // these also get tri_phases_deg
    std::vector<double> tri_phases_deg{0.0, 120.0, 240.0};
    int steps = kDefaultSteps;

    std::vector<double> phases_at(double frequency) const;
};

Preset smoke_preset();
Preset mvp_preset();
Preset mvp_plus_preset();
Preset full_preset();

/// SMOKE, MVP, MVP_PLUS or FULL (case-insensitive). Throws ConfigError.
Preset preset_by_name(std::string_view name);

/// Custom grid from a key = value file with keys `name`, `frequencies`, `phases`,
/// `tri_phase_frequencies`, `tri_phases`, `steps` (lists are comma separated).
Preset preset_from_file(const std::filesystem::path& path);

/// Sorted cross-product of families × variants × scales × frequencies × phases.
/// Throws EmptyPlan if any axis is empty.
std::vector<SweepPlan> expand_preset(const Preset& preset, const FamilyCatalog& catalog,
                                     const std::vector<FamilyId>& families,
                                     const std::vector<int>& variants,
                                     const std::vector<double>& amplitude_scales);

struct DrivePoint {
    int t = 0;
    double p = 0.0;      // clipped
    double p_raw = 0.0;  // before clipping
    bool clipped = false;
};

/// Drive value at any integer step (t <= 0 gives the pre-sweep history).
DrivePoint drive_at(const SweepPlan& plan, const FamilySpec& spec, int t);

/// p_t = clip(p0 + eps * scale * sin(2 pi f t / T + phase0)) for t = 1..T.
/// Throws UnsupportedSignal for chirp/step plans.
std::vector<DrivePoint> drive_series(const SweepPlan& plan, const FamilySpec& spec);

}  // namespace mathbode
