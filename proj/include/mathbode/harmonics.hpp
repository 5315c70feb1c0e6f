#pragma once

// First-harmonic regression and per-sweep diagnostics.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mathbode {

/// One observation of a series on the integer step grid.
struct Sample {
    int t = 0;
    double y = 0.0;
};

/// y ≈ a sin θ + b cos θ + c with θ_t = 2π f t / T.
struct HarmonicFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double amp = 0.0;    // sqrt(a² + b²)
    double phase = 0.0;  // atan2(b, a)
    double r2 = 1.0;     // about the series mean
    std::vector<double> residuals;
};

/// Ordinary least squares on {sin θ, cos θ, 1} over exactly the given samples
/// (irregular grids allowed). Throws TooFewPoints (< 4 distinct t) or
/// RankDeficient.
HarmonicFit fit_first_harmonic(std::span<const Sample> series, double frequency, int steps);

/// Amplitudes of the joint fit {1, sin θ, cos θ, sin 2θ, cos 2θ}.
struct TwoToneFit {
    double h1 = 0.0;
    double h2 = 0.0;
    double ratio() const { return h1 > 0.0 ? h2 / h1 : 0.0; }
};

/// Throws TooFewPoints below 5 distinct t. At f = T/4 the sin 2θ column vanishes
/// on the integer grid and its coefficient is taken as zero.
TwoToneFit fit_two_tone(std::span<const Sample> series, double frequency, int steps);

/// Maps x into (-π, π]; -π maps to +π. Throws DomainError for non-finite x.
double wrap_phase(double x);

/// Biased lag-1 autocorrelation of the mean-removed sequence; 0 for a flat one.
double lag1_autocorrelation(std::span<const double> values);

double rms(std::span<const double> values);

struct MetricsOptions {
    double min_compliance = 0.8;
    int min_points = 8;
    double rel_amp_floor = 1e-9;   // relative to |c| of the truth fit
    double abs_amp_floor = 1e-12;
};

struct SweepMetrics {
    std::optional<double> gain;
    std::optional<double> phase_err;       // radians, (-π, π]
    double r2_model = 0.0;
    double r2_truth = 0.0;
    std::optional<double> resid_rms_norm;  // RMS(model residuals) / amp(truth)
    std::optional<double> resid_rms_truth; // RMS(truth residuals) / amp(truth)
    double resid_acf1 = 0.0;
    double resid_acf1_truth = 0.0;
    double h2h1_model = 0.0;
    double h2h1_truth = 0.0;
    double h2h1_excess = 0.0;
    // Penalty inputs relative to the truth's own structure.
    double fit_quality = 0.0;              // 1 - max(0, r2_truth - r2_model)
    std::optional<double> rms_excess;      // max(0, resid_rms_norm - resid_rms_truth)
    double acf1_excess = 0.0;              // max(0, |acf_model| - |acf_truth|)
    int n_compliant = 0;
    int n_total = 0;
    bool valid = false;
    std::string invalid_reason;

    double compliance() const { return n_total > 0 ? static_cast<double>(n_compliant) / n_total : 0.0; }
};

/// `model` holds the compliant rows only; `truth` the full exact series. The truth
/// is fitted on the same steps as the model so gaps bias neither side.
/// Fit errors propagate.
SweepMetrics sweep_metrics(std::span<const Sample> model, std::span<const Sample> truth,
                           double frequency, int steps, const MetricsOptions& options = {});

}  // namespace mathbode
