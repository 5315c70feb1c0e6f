#pragma once

// generate / run / score, as called by the command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mathbode/drive.hpp"
#include "mathbode/families.hpp"
#include "mathbode/parser.hpp"
#include "mathbode/responders.hpp"

namespace mathbode {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitLowCompliance = 3,
    kExitNoScore = 4,
};

/// Plan selection shared by generate and run.
struct PlanOptions {
    std::string preset = "MVP";
    std::optional<std::filesystem::path> grid;  // custom preset file, overrides `preset`
    std::vector<std::string> families;          // empty: all five
    std::vector<int> variants;                  // empty: 0, 1, 2
    std::vector<double> scales{1.0};
    std::optional<std::filesystem::path> family_config;  // empty: built-in constants
    TagStyle tag_style = TagStyle::tags;
};

struct ResolvedPlans {
    FamilyCatalog catalog;
    Preset preset;
    AnswerFormat format;
    std::vector<FamilyId> families;
    std::vector<int> variants;
    std::vector<SweepPlan> plans;
};

/// Validates options and expands the preset. Throws ConfigError.
ResolvedPlans resolve_plans(const PlanOptions& options);

struct GenerateOptions {
    PlanOptions plans;
    std::filesystem::path out = "out";
};

/// Writes <out>/dataset.csv and prints per-family row counts.
int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream& err);

struct RunOptions {
    PlanOptions plans;
    std::filesystem::path out = "out";
    std::string responder = "oracle";  // oracle | synthetic[:k=v,...] | remote[:model]
    RemoteParams remote;
    std::uint64_t seed = 0;            // synthetic noise seed unless the responder string sets seed=
    std::optional<std::filesystem::path> dataset;  // run over a generated CSV instead of the preset
    int jobs = 1;
    bool resume = false;
    double min_compliance = 0.8;
    std::optional<int> stop_after;     // stop after this many sweeps (interruption testing)
};

/// Builds the responder named by `spec`. Throws ConfigError.
std::unique_ptr<Responder> make_responder(const RunOptions& options, const AnswerFormat& format,
                                          std::shared_ptr<SlidingWindowLimiter> limiter = nullptr);

/// Run identifier: leading 12 hex digits of the SHA-1 of the serialized config.
std::string run_id_for(const RunOptions& options, const ResolvedPlans& resolved, const std::string& responder_id);

/// Writes <out>/manifest.json, <out>/results.jsonl and <out>/requests.jsonl.
/// Completed sweeps are listed in the manifest; --resume skips them.
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);

struct ScoreOptions {
    std::vector<std::filesystem::path> results;  // empty: <out>/results.jsonl
    std::filesystem::path out = "out";
    bool lenient = false;
    std::optional<std::string> run_id;
    std::optional<std::filesystem::path> family_config;
};

/// Fits every sweep, scores per responder and writes <out>/report/.
int cmd_score(const ScoreOptions& options, std::ostream& out, std::ostream& err);

}  // namespace mathbode
