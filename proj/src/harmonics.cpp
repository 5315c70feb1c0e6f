#include "mathbode/harmonics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "mathbode/errors.hpp"

namespace mathbode {

namespace {

constexpr double kRankThreshold = 1e-9;

std::size_t distinct_steps(std::span<const Sample> series) {
    std::set<int> ts;
    for (const Sample& s : series) ts.insert(s.t);
    return ts.size();
}

double angle(int t, double frequency, int steps) {
    return 2.0 * std::numbers::pi * frequency * t / steps;
}

Eigen::VectorXd values(std::span<const Sample> series) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(series.size()));
    for (std::size_t i = 0; i < series.size(); ++i) y(static_cast<Eigen::Index>(i)) = series[i].y;
    return y;
}

}  // namespace

HarmonicFit fit_first_harmonic(std::span<const Sample> series, double frequency, int steps) {
    if (steps <= 0) throw ConfigError("steps must be positive");
    if (distinct_steps(series) < 4)
        throw TooFewPoints(fmt::format("first-harmonic fit needs 4 distinct steps, got {}", distinct_steps(series)));

    const auto n = static_cast<Eigen::Index>(series.size());
    Eigen::MatrixXd design(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        double theta = angle(series[static_cast<std::size_t>(i)].t, frequency, steps);
        design(i, 0) = std::sin(theta);
        design(i, 1) = std::cos(theta);
        design(i, 2) = 1.0;
    }
    const Eigen::VectorXd y = values(series);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(kRankThreshold);
    if (qr.rank() < 3) throw RankDeficient("sin/cos/constant regressors are collinear on these steps");
    const Eigen::Vector3d coef = qr.solve(y);

    HarmonicFit fit;
    fit.a = coef(0);
    fit.b = coef(1);
    fit.c = coef(2);
    fit.amp = std::hypot(fit.a, fit.b);
    fit.phase = std::atan2(fit.b, fit.a);

    const Eigen::VectorXd resid = y - design * coef;
    fit.residuals.assign(resid.data(), resid.data() + resid.size());
    const double ss_res = resid.squaredNorm();
    const double ss_tot = (y.array() - y.mean()).square().sum();
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

TwoToneFit fit_two_tone(std::span<const Sample> series, double frequency, int steps) {
    if (distinct_steps(series) < 5)
        throw TooFewPoints(fmt::format("two-tone fit needs 5 distinct steps, got {}", distinct_steps(series)));
    const auto n = static_cast<Eigen::Index>(series.size());
    Eigen::MatrixXd design(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        double theta = angle(series[static_cast<std::size_t>(i)].t, frequency, steps);
        design(i, 0) = 1.0;
        design(i, 1) = std::sin(theta);
        design(i, 2) = std::cos(theta);
        design(i, 3) = std::sin(2.0 * theta);
        design(i, 4) = std::cos(2.0 * theta);
    }
    // Minimum-norm solution: a vanishing sin 2θ column (Nyquist) gets coefficient 0.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    cod.setThreshold(kRankThreshold);
    if (cod.rank() < 3) throw RankDeficient("two-tone regressors are degenerate on these steps");
    const Eigen::VectorXd coef = cod.solve(values(series));
    return TwoToneFit{std::hypot(coef(1), coef(2)), std::hypot(coef(3), coef(4))};
}

double wrap_phase(double x) {
    if (!std::isfinite(x)) throw DomainError("cannot wrap a non-finite phase");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::remainder(x, two_pi);  // [-π, π]
    if (r <= -std::numbers::pi) r += two_pi;
    return r;
}

double lag1_autocorrelation(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double denom = 0.0;
    for (double v : values) denom += (v - mean) * (v - mean);
    if (!(denom > 0.0)) return 0.0;
    double num = 0.0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) num += (values[i] - mean) * (values[i + 1] - mean);
    return num / denom;
}

double rms(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (double v : values) sum += v * v;
    return std::sqrt(sum / static_cast<double>(values.size()));
}

SweepMetrics sweep_metrics(std::span<const Sample> model, std::span<const Sample> truth, double frequency,
                           int steps, const MetricsOptions& options) {
    SweepMetrics m;
    m.n_compliant = static_cast<int>(model.size());
    m.n_total = static_cast<int>(truth.size());

    if (m.n_compliant < options.min_points) {
        m.invalid_reason = fmt::format("only {} compliant rows (need {})", m.n_compliant, options.min_points);
        return m;
    }
    if (m.compliance() < options.min_compliance) {
        m.invalid_reason = fmt::format("compliance {:.3f} below {}", m.compliance(), options.min_compliance);
        return m;
    }

    std::map<int, double> truth_by_step;
    for (const Sample& s : truth) truth_by_step[s.t] = s.y;
    std::vector<Sample> truth_on_model;
    truth_on_model.reserve(model.size());
    for (const Sample& s : model) {
        auto it = truth_by_step.find(s.t);
        if (it == truth_by_step.end()) throw ConfigError(fmt::format("model step {} has no truth value", s.t));
        truth_on_model.push_back({s.t, it->second});
    }

    const HarmonicFit fm = fit_first_harmonic(model, frequency, steps);
    const HarmonicFit ft = fit_first_harmonic(truth_on_model, frequency, steps);
    m.r2_model = fm.r2;
    m.r2_truth = ft.r2;
    m.resid_acf1 = lag1_autocorrelation(fm.residuals);
    m.resid_acf1_truth = lag1_autocorrelation(ft.residuals);
    m.h2h1_model = fit_two_tone(model, frequency, steps).ratio();
    m.h2h1_truth = fit_two_tone(truth_on_model, frequency, steps).ratio();
    m.h2h1_excess = std::max(0.0, m.h2h1_model - m.h2h1_truth);
    m.fit_quality = 1.0 - std::max(0.0, m.r2_truth - m.r2_model);
    m.acf1_excess = std::max(0.0, std::abs(m.resid_acf1) - std::abs(m.resid_acf1_truth));

    const double floor = std::max(options.rel_amp_floor * std::abs(ft.c), options.abs_amp_floor);
    if (!(ft.amp > floor)) {
        m.invalid_reason = fmt::format("truth amplitude {} at or below floor {}", ft.amp, floor);
        return m;
    }
    m.gain = fm.amp / ft.amp;
    m.phase_err = wrap_phase(fm.phase - ft.phase);
    m.resid_rms_norm = rms(fm.residuals) / ft.amp;
    m.resid_rms_truth = rms(ft.residuals) / ft.amp;
    m.rms_excess = std::max(0.0, *m.resid_rms_norm - *m.resid_rms_truth);
    m.valid = true;
    return m;
}

}  // namespace mathbode
