#pragma once

// Mid-band aggregation of sweep metrics into MB-Core / MB-Plus scores.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mathbode/families.hpp"
#include "mathbode/harmonics.hpp"

namespace mathbode {

/// A scored sweep with the plan coordinates needed for aggregation.
struct SweepResult {
    FamilyId family{};
    int variant = 0;
    double frequency = 0.0;
    double phase_deg = 0.0;
    double amplitude_scale = 1.0;
    SweepMetrics metrics;
};

struct ScoreParams {
    double lambda_gain = 0.46;
    double lambda_phase = 1.45;  // radians
    std::vector<double> mid_band{4.0, 8.0};
};

struct FamilyAggregate {
    FamilyId family{};
    double g_dev = 0.0;            // mean |G - 1|
    double p_dev = 0.0;            // mean |phase error|, radians
    double r2_med = 1.0;           // median fit quality relative to truth
    double rms_med = 0.0;          // median residual-RMS excess
    double acf1_medabs = 0.0;      // median ACF(1) excess
    double h2h1_excess_med = 0.0;
    int n_sweeps = 0;
};

/// Uses only valid sweeps of `family` at mid-band frequencies. Throws NoValidSweeps.
FamilyAggregate aggregate_family(std::span<const SweepResult> sweeps, FamilyId family,
                                 const ScoreParams& params = {});

/// exp(-(g_dev/λ_G + p_dev/λ_φ)).
double mb_core(const FamilyAggregate& agg, const ScoreParams& params = {});

/// mb_core × clamp(r2, 0, 1) × exp(-rms) × (1 - min(acf, 1)) × 1/(1 + h2h1 excess).
double mb_plus(const FamilyAggregate& agg, double mb_core_value);

struct FamilyScore {
    double mb_core = 0.0;
    double mb_plus = 0.0;
    FamilyAggregate aggregate;
};

struct ScoreCard {
    std::map<FamilyId, FamilyScore> per_family;
    std::map<FamilyId, std::string> unscored;  // family -> reason
    double mb_core_overall = 0.0;
    double mb_plus_overall = 0.0;
};

/// Scores every family present in `sweeps`; families without valid mid-band
/// sweeps are listed in `unscored`. Overall = unweighted mean over scored families.
/// Throws NoValidSweeps when nothing can be scored.
ScoreCard score_card(std::span<const SweepResult> sweeps, const ScoreParams& params = {});

double median(std::vector<double> values);

}  // namespace mathbode

namespace mathbode {

/// All sweeps measured for one responder.
struct ResponderSweeps {
    std::string responder_id;
    std::vector<SweepResult> sweeps;
};

/// Per-frequency mean of one metric, per family, one column per responder.
struct Curve {
    std::string metric;  // gain, phase_rad, acf1, r2, resid_rms, h2h1, compliance
    FamilyId family{};
    std::vector<double> frequencies;
    std::vector<std::vector<std::optional<double>>> values;  // [responder][frequency]
};

struct SummaryTables {
    std::vector<std::string> responders;
    std::vector<FamilyId> families;
    // [family][responder]; absent when a responder has no valid mid-band sweep.
    std::map<FamilyId, std::vector<std::optional<double>>> midband_gain_dev;
    std::map<FamilyId, std::vector<std::optional<double>>> midband_phase_deg;
    std::vector<Curve> curves;
};

inline constexpr std::array<std::string_view, 7> kCurveMetrics{
    "gain", "phase_rad", "acf1", "r2", "resid_rms", "h2h1", "compliance"};

/// Mean mid-band |G-1| and |phase error| (degrees) tables plus per-frequency curves
/// (phase in radians). Compliance curves count every sweep; the rest valid ones.
SummaryTables summary_tables(std::span<const ResponderSweeps> responders, const ScoreParams& params = {});

}  // namespace mathbode
