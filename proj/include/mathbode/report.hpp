#pragma once

// Report files: scorecard, mid-band tables, per-frequency curves and SVG plots.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mathbode/scoring.hpp"

namespace mathbode {

struct ResponderScore {
    std::string responder_id;
    std::optional<ScoreCard> card;  // absent when nothing could be scored
    std::string error;
};

/// Writes into `dir`:
///   scorecard.csv, midband_gain.csv, midband_phase_deg.csv, sweeps.csv,
///   curves/<metric>_<family>.csv and <metric>.svg (one panel per family).
void write_report(const std::filesystem::path& dir, std::span<const ResponderSweeps> responders,
                  std::span<const ResponderScore> scores, const SummaryTables& tables);

/// Line chart panels, one per curve, on a log2 frequency axis.
std::string render_svg(std::string_view title, std::span<const Curve> panels,
                       std::span<const std::string> series_names, std::optional<double> reference);

}  // namespace mathbode
