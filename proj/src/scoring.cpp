#include "mathbode/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "mathbode/errors.hpp"

namespace mathbode {

namespace {

bool in_band(double f, const std::vector<double>& band) {
    return std::find(band.begin(), band.end(), f) != band.end();
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

FamilyAggregate aggregate_family(std::span<const SweepResult> sweeps, FamilyId family,
                                 const ScoreParams& params) {
    FamilyAggregate agg;
    agg.family = family;
    std::vector<double> fit, rms_ex, acf_ex, nl_ex;
    double g_sum = 0.0;
    double p_sum = 0.0;
    for (const SweepResult& s : sweeps) {
        if (s.family != family || !s.metrics.valid || !in_band(s.frequency, params.mid_band)) continue;
        g_sum += std::abs(*s.metrics.gain - 1.0);
        p_sum += std::abs(*s.metrics.phase_err);
        fit.push_back(s.metrics.fit_quality);
        rms_ex.push_back(s.metrics.rms_excess.value_or(0.0));
        acf_ex.push_back(s.metrics.acf1_excess);
        nl_ex.push_back(s.metrics.h2h1_excess);
        ++agg.n_sweeps;
    }
    if (agg.n_sweeps == 0)
        throw NoValidSweeps(fmt::format("{}: no valid mid-band sweeps", to_string(family)));
    agg.g_dev = g_sum / agg.n_sweeps;
    agg.p_dev = p_sum / agg.n_sweeps;
    agg.r2_med = median(fit);
    agg.rms_med = median(rms_ex);
    agg.acf1_medabs = median(acf_ex);
    agg.h2h1_excess_med = median(nl_ex);
    return agg;
}

double mb_core(const FamilyAggregate& agg, const ScoreParams& params) {
    return std::exp(-(agg.g_dev / params.lambda_gain + agg.p_dev / params.lambda_phase));
}

double mb_plus(const FamilyAggregate& agg, double mb_core_value) {
    const double w_fit = std::clamp(agg.r2_med, 0.0, 1.0);
    const double w_rms = std::exp(-agg.rms_med);
    const double w_acf = 1.0 - std::min(agg.acf1_medabs, 1.0);
    const double w_nl = 1.0 / (1.0 + agg.h2h1_excess_med);
    return mb_core_value * w_fit * w_rms * w_acf * w_nl;
}

ScoreCard score_card(std::span<const SweepResult> sweeps, const ScoreParams& params) {
    std::set<FamilyId> families;
    for (const SweepResult& s : sweeps) families.insert(s.family);

    ScoreCard card;
    for (FamilyId family : families) {
        try {
            FamilyScore fs;
            fs.aggregate = aggregate_family(sweeps, family, params);
            fs.mb_core = mb_core(fs.aggregate, params);
            fs.mb_plus = mb_plus(fs.aggregate, fs.mb_core);
            card.per_family.emplace(family, fs);
        } catch (const NoValidSweeps& e) {
            card.unscored.emplace(family, e.what());
        }
    }
    if (card.per_family.empty()) throw NoValidSweeps("no family has a valid mid-band sweep");
    for (const auto& [family, fs] : card.per_family) {
        card.mb_core_overall += fs.mb_core;
        card.mb_plus_overall += fs.mb_plus;
    }
    card.mb_core_overall /= static_cast<double>(card.per_family.size());
    card.mb_plus_overall /= static_cast<double>(card.per_family.size());
    return card;
}

}  // namespace mathbode

namespace mathbode {

namespace {

std::optional<double> curve_value(const SweepResult& s, std::string_view metric) {
    const SweepMetrics& m = s.metrics;
    if (metric == "compliance") return m.compliance();
    if (!m.valid) return std::nullopt;
    if (metric == "gain") return m.gain;
    if (metric == "phase_rad") return m.phase_err;
    if (metric == "acf1") return m.resid_acf1;
    if (metric == "r2") return m.r2_model;
    if (metric == "resid_rms") return m.resid_rms_norm;
    if (metric == "h2h1") return m.h2h1_model;
    return std::nullopt;
}

std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

// Angles near ±π must not average to ~0.
std::optional<double> circular_mean(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0, c = 0.0;
    for (double x : v) s += std::sin(x), c += std::cos(x);
    return wrap_phase(std::atan2(s, c));
}

}  // namespace

SummaryTables summary_tables(std::span<const ResponderSweeps> responders, const ScoreParams& params) {
    SummaryTables tables;
    std::set<FamilyId> families;
    std::map<FamilyId, std::set<double>> frequencies;
    for (const ResponderSweeps& r : responders) {
        tables.responders.push_back(r.responder_id);
        for (const SweepResult& s : r.sweeps) {
            families.insert(s.family);
            frequencies[s.family].insert(s.frequency);
        }
    }
    tables.families.assign(families.begin(), families.end());

    for (FamilyId family : tables.families) {
        auto& gain_row = tables.midband_gain_dev[family];
        auto& phase_row = tables.midband_phase_deg[family];
        for (const ResponderSweeps& r : responders) {
            std::vector<double> g, p;
            for (const SweepResult& s : r.sweeps) {
                if (s.family != family || !s.metrics.valid || !in_band(s.frequency, params.mid_band)) continue;
                g.push_back(std::abs(*s.metrics.gain - 1.0));
                p.push_back(std::abs(*s.metrics.phase_err) * 180.0 / std::numbers::pi);
            }
            gain_row.push_back(mean_of(g));
            phase_row.push_back(mean_of(p));
        }
        for (std::string_view metric : kCurveMetrics) {
            Curve curve;
            curve.metric = std::string(metric);
            curve.family = family;
            curve.frequencies.assign(frequencies[family].begin(), frequencies[family].end());
            for (const ResponderSweeps& r : responders) {
                std::vector<std::optional<double>> column;
                for (double f : curve.frequencies) {
                    std::vector<double> vals;
                    for (const SweepResult& s : r.sweeps)
                        if (s.family == family && s.frequency == f)
                            if (auto v = curve_value(s, metric)) vals.push_back(*v);
                    column.push_back(metric == "phase_rad" ? circular_mean(vals) : mean_of(vals));
                }
                curve.values.push_back(std::move(column));
            }
            tables.curves.push_back(std::move(curve));
        }
    }
    return tables;
}

}  // namespace mathbode
