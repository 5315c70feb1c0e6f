#include "mathbode/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "mathbode/datastore.hpp"
#include "mathbode/numfmt.hpp"

namespace mathbode {

namespace {

constexpr std::array kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string cell(const std::optional<double>& v) { return v ? format_fixed6(*v) : ""; }

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

std::string_view metric_title(std::string_view metric) {
    if (metric == "gain") return "Gain G vs frequency";
    if (metric == "phase_rad") return "Phase error (rad) vs frequency";
    if (metric == "acf1") return "Residual ACF(1) vs frequency";
    if (metric == "r2") return "First-harmonic R^2 vs frequency";
    if (metric == "resid_rms") return "Residual RMS (normalized) vs frequency";
    if (metric == "h2h1") return "H2/H1 vs frequency";
    return "Compliance vs frequency";
}

std::optional<double> metric_reference(std::string_view metric) {
    if (metric == "gain" || metric == "r2" || metric == "compliance") return 1.0;
    if (metric == "phase_rad" || metric == "acf1") return 0.0;
    return std::nullopt;
}

void write_table(const std::filesystem::path& path, const SummaryTables& tables,
                 const std::map<FamilyId, std::vector<std::optional<double>>>& table) {
    std::ostringstream out;
    out << "family";
    for (const auto& r : tables.responders) out << ',' << csv_escape(r);
    out << '\n';
    for (FamilyId family : tables.families) {
        out << to_string(family);
        for (const auto& v : table.at(family)) out << ',' << cell(v);
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

}  // namespace

std::string render_svg(std::string_view title, std::span<const Curve> panels, std::span<const std::string> series_names,
                       std::optional<double> reference) {
    constexpr double panel_w = 250, panel_h = 210, margin_l = 52, margin_t = 64, gap = 28, plot_w = 190, plot_h = 150;
    const double width = margin_l + panels.size() * (panel_w + gap);
    const double height = margin_t + panel_h + 40;

    std::ostringstream svg;
    svg << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{:.0f}" height="{:.0f}" font-family="sans-serif" font-size="11">)",
                       width, height)
        << '\n';
    svg << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
    svg << fmt::format(R"(<text x="{}" y="20" font-size="14">{}</text>)", margin_l, xml_escape(title)) << '\n';
    for (std::size_t s = 0; s < series_names.size(); ++s) {
        const double lx = margin_l + 180.0 * s;
        svg << fmt::format(R"(<line x1="{}" y1="38" x2="{}" y2="38" stroke="{}" stroke-width="2"/>)", lx, lx + 18,
                           kPalette[s % kPalette.size()])
            << fmt::format(R"(<text x="{}" y="42">{}</text>)", lx + 22, xml_escape(series_names[s])) << '\n';
    }

    for (std::size_t p = 0; p < panels.size(); ++p) {
        const Curve& curve = panels[p];
        const double x0 = margin_l + p * (panel_w + gap);
        const double y0 = margin_t;

        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& col : curve.values)
            for (const auto& v : col)
                if (v) lo = std::min(lo, *v), hi = std::max(hi, *v);
        if (reference) lo = std::min(lo, *reference), hi = std::max(hi, *reference);
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
        const double pad = 0.08 * (hi - lo);
        lo -= pad;
        hi += pad;

        const double fmin = curve.frequencies.empty() ? 1.0 : curve.frequencies.front();
        const double fmax = curve.frequencies.empty() ? 2.0 : curve.frequencies.back();
        auto xpos = [&](double f) {
            if (fmax <= fmin) return x0 + plot_w / 2;
            return x0 + plot_w * (std::log2(f) - std::log2(fmin)) / (std::log2(fmax) - std::log2(fmin));
        };
        auto ypos = [&](double v) { return y0 + plot_h * (1.0 - (v - lo) / (hi - lo)); };

        svg << fmt::format(R"(<text x="{}" y="{}" font-size="12">{}</text>)", x0, y0 - 8, to_string(curve.family)) << '\n';
        svg << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888"/>)", x0, y0, plot_w, plot_h)
            << '\n';
        for (int i = 0; i <= 2; ++i) {
            const double v = lo + (hi - lo) * i / 2.0;
            svg << fmt::format(R"(<text x="{:.1f}" y="{:.1f}" text-anchor="end">{:.3g}</text>)", x0 - 4, ypos(v) + 4, v) << '\n';
        }
        for (double f : curve.frequencies)
            svg << fmt::format(R"(<text x="{:.1f}" y="{:.1f}" text-anchor="middle">{}</text>)", xpos(f), y0 + plot_h + 14,
                               format_shortest(f))
                << '\n';
        svg << fmt::format(R"(<text x="{:.1f}" y="{:.1f}" text-anchor="middle">cycles per sweep</text>)", x0 + plot_w / 2,
                           y0 + plot_h + 30)
            << '\n';
        if (reference)
            svg << fmt::format(R"(<line x1="{}" y1="{:.1f}" x2="{}" y2="{:.1f}" stroke="#444" stroke-dasharray="4 3"/>)", x0,
                               ypos(*reference), x0 + plot_w, ypos(*reference))
                << '\n';

        for (std::size_t s = 0; s < curve.values.size(); ++s) {
            std::string points;
            for (std::size_t i = 0; i < curve.frequencies.size(); ++i)
                if (const auto& v = curve.values[s][i])
                    points += fmt::format("{:.1f},{:.1f} ", xpos(curve.frequencies[i]), ypos(*v));
            if (points.empty()) continue;
            const char* color = kPalette[s % kPalette.size()];
            svg << fmt::format(R"(<polyline points="{}" fill="none" stroke="{}" stroke-width="1.8"/>)", points, color) << '\n';
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_report(const std::filesystem::path& dir, std::span<const ResponderSweeps> responders,
                  std::span<const ResponderScore> scores, const SummaryTables& tables) {
    std::filesystem::create_directories(dir / "curves");

    std::ostringstream card;
    card << "responder,family,mb_core,mb_plus,g_dev,p_dev_rad,r2_med,rms_med,acf1_medabs,h2h1_excess_med,n_sweeps\n";
    for (const ResponderScore& rs : scores) {
        if (!rs.card) continue;
        for (const auto& [family, fs] : rs.card->per_family) {
            const FamilyAggregate& a = fs.aggregate;
            card << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", csv_escape(rs.responder_id), to_string(family),
                                format_fixed6(fs.mb_core), format_fixed6(fs.mb_plus), format_fixed6(a.g_dev),
                                format_fixed6(a.p_dev), format_fixed6(a.r2_med), format_fixed6(a.rms_med),
                                format_fixed6(a.acf1_medabs), format_fixed6(a.h2h1_excess_med), a.n_sweeps);
        }
        card << fmt::format("{},overall,{},{},,,,,,,\n", csv_escape(rs.responder_id),
                            format_fixed6(rs.card->mb_core_overall), format_fixed6(rs.card->mb_plus_overall));
    }
    write_file_atomic(dir / "scorecard.csv", card.str());

    write_table(dir / "midband_gain.csv", tables, tables.midband_gain_dev);
    write_table(dir / "midband_phase_deg.csv", tables, tables.midband_phase_deg);

    std::ostringstream sweeps;
    sweeps << "responder,family,question_id,amplitude_scale,frequency_cycles,phase_deg,valid,gain,phase_err_rad,"
              "r2_model,r2_truth,resid_rms_norm,resid_acf1,h2h1_model,h2h1_truth,h2h1_excess,n_compliant,n_total,"
              "invalid_reason\n";
    for (const ResponderSweeps& r : responders)
        for (const SweepResult& s : r.sweeps) {
            const SweepMetrics& m = s.metrics;
            sweeps << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_escape(r.responder_id),
                                  to_string(s.family), s.variant, format_shortest(s.amplitude_scale),
                                  format_shortest(s.frequency), format_shortest(s.phase_deg), m.valid ? 1 : 0,
                                  cell(m.gain), cell(m.phase_err), format_fixed6(m.r2_model), format_fixed6(m.r2_truth),
                                  cell(m.resid_rms_norm), format_fixed6(m.resid_acf1), format_fixed6(m.h2h1_model),
                                  format_fixed6(m.h2h1_truth), format_fixed6(m.h2h1_excess), m.n_compliant, m.n_total,
                                  csv_escape(m.invalid_reason));
        }
    write_file_atomic(dir / "sweeps.csv", sweeps.str());

    for (std::string_view metric : kCurveMetrics) {
        std::vector<Curve> panels;
        for (const Curve& curve : tables.curves) {
            if (curve.metric != metric) continue;
            panels.push_back(curve);
            std::ostringstream csv;
            csv << "frequency_cycles";
            for (const auto& r : tables.responders) csv << ',' << csv_escape(r);
            csv << '\n';
            for (std::size_t i = 0; i < curve.frequencies.size(); ++i) {
                csv << format_shortest(curve.frequencies[i]);
                for (const auto& col : curve.values) csv << ',' << cell(col[i]);
                csv << '\n';
            }
            write_file_atomic(dir / "curves" / fmt::format("{}_{}.csv", metric, to_string(curve.family)), csv.str());
        }
        write_file_atomic(dir / fmt::format("{}.svg", metric),
                          render_svg(metric_title(metric), panels, tables.responders, metric_reference(metric)));
    }
}

}  // namespace mathbode
