#pragma once

// Dataset rows (CSV) and result records (JSONL).

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mathbode/drive.hpp"
#include "mathbode/families.hpp"
#include "mathbode/parser.hpp"

namespace mathbode {

/// Published column set, in order.
inline constexpr std::array<std::string_view, 10> kDatasetColumns{
    "family",    "question_id", "signal_type", "amplitude_scale", "frequency_cycles",
    "phase_deg", "time_step",   "p_value",     "prompt",          "ground_truth"};

struct DatasetRow {
    FamilyId family{};
    int question_id = 0;
    SignalType signal_type = SignalType::sinusoid;
    double amplitude_scale = 1.0;
    double frequency_cycles = 0.0;
    double phase_deg = 0.0;
    int time_step = 0;
    double p_value = 0.0;  // exactly the value printed in the prompt
    std::string prompt;
    double ground_truth = 0.0;

    friend bool operator==(const DatasetRow&, const DatasetRow&) = default;
};

/// A dataset row together with the instance it was rendered from.
struct RowInstance {
    DatasetRow row;
    ProblemInstance instance;
    bool clipped = false;
};

/// Drive → clip → six-decimal parameter → solve → render, for t = 1..T.
std::vector<RowInstance> build_sweep_rows(const SweepPlan& plan, const FamilyCatalog& catalog,
                                          const AnswerFormat& format = {});

/// Exact answer for the value the prompt shows at step t (any integer t).
double truth_at_step(const SweepPlan& plan, const FamilyCatalog& catalog, int t);

/// True when the row's ground truth equals solve() on its own fields (1e-9 relative).
bool verify_ground_truth(const DatasetRow& row, const FamilyCatalog& catalog);

/// Writes the header and one row per (plan, t), sorted by plan then step.
/// Returns the row count.
std::size_t export_dataset(std::span<const SweepPlan> plans, const FamilyCatalog& catalog,
                           std::ostream& out, const AnswerFormat& format = {});
std::size_t export_dataset(std::span<const SweepPlan> plans, const FamilyCatalog& catalog,
                           const std::filesystem::path& path, const AnswerFormat& format = {});

/// Strict reader: the header must match kDatasetColumns exactly. Throws DataError.
std::vector<DatasetRow> import_dataset(std::istream& in);
std::vector<DatasetRow> import_dataset(const std::filesystem::path& path);

/// Sweep plan the row belongs to (epsilon/p0 from the catalog, steps = `steps`).
SweepPlan plan_for_row(const DatasetRow& row, const FamilyCatalog& catalog, int steps);

/// Dataset rows grouped into sweeps, in file order.
struct DatasetSweep {
    SweepPlan plan;
    std::vector<DatasetRow> rows;  // ordered by time_step
};
std::vector<DatasetSweep> group_dataset(std::span<const DatasetRow> rows, const FamilyCatalog& catalog);

struct SweepRecord {
    DatasetRow row;
    int steps = kDefaultSteps;
    std::string plan_key;
    bool clipped = false;
    std::string raw_response;
    bool compliant = false;
    std::optional<double> parsed_value;
    std::optional<std::string> value_text;
    std::optional<FailureReason> failure_reason;
    int attempts = 1;
    std::int64_t latency_ms = 0;
    std::string responder_id;
    std::string run_id;

    friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

/// One JSON object per line, fixed key order.
std::string record_to_json_line(const SweepRecord& record);
void save_results(std::ostream& out, std::span<const SweepRecord> records);

struct LoadOptions {
    bool lenient = false;                // skip bad lines instead of throwing
    std::optional<std::string> run_id;  // keep only this run
};

struct LoadedResults {
    std::vector<SweepRecord> records;
    std::vector<std::string> skipped;  // "line N: reason" for lenient loads
};

/// Throws DataError (with line number) on the first bad line unless lenient.
LoadedResults load_results(std::istream& in, const LoadOptions& options = {});
LoadedResults load_results(const std::filesystem::path& path, const LoadOptions& options = {});

struct RecordSweep {
    std::string run_id;
    std::string responder_id;
    std::string plan_key;
    SweepPlan plan;
    std::vector<SweepRecord> records;  // ordered by time_step
};

/// Groups by (run, responder, plan key) in order of first appearance.
std::vector<RecordSweep> group_records(std::span<const SweepRecord> records, const FamilyCatalog& catalog);

/// Minimal RFC 4180 helpers.
std::string csv_escape(std::string_view field);
/// Reads one record; returns false at end of input. `line` tracks physical lines.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mathbode
