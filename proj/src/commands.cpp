#include "mathbode/commands.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mathbode/datastore.hpp"
#include "mathbode/errors.hpp"
#include "mathbode/harmonics.hpp"
#include "mathbode/numfmt.hpp"
#include "mathbode/report.hpp"
#include "mathbode/scoring.hpp"

namespace mathbode {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kManifestName = "manifest.json";
constexpr std::string_view kResultsName = "results.jsonl";
constexpr std::string_view kRequestsName = "requests.jsonl";

FamilyCatalog load_catalog(const std::optional<fs::path>& path) {
    return path ? FamilyCatalog::from_file(*path) : FamilyCatalog::builtin();
}

std::string dump(const ojson& j) { return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace); }

ojson request_log_json(const std::string& plan_key, const RequestLog& log) {
    ojson j;
    j["plan_key"] = plan_key;
    j["time_step"] = log.t;
    j["attempts"] = log.attempts;
    j["latency_ms"] = log.latency_ms;
    j["http_status"] = log.http_status;
    j["transport_error"] = log.transport_error ? ojson(*log.transport_error) : ojson(nullptr);
    j["request_body"] = log.request_body;
    j["response_body"] = log.response_body;
    return j;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Complete lines of `text` (a trailing partial line is dropped).
std::vector<std::string_view> complete_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (true) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) break;
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

/// plan_key of a results/requests line, or empty when unreadable.
std::string line_plan_key(std::string_view line) {
    try {
        auto j = nlohmann::json::parse(line);
        return j.at("plan_key").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        return {};
    }
}

struct FamilyTally {
    int compliant = 0;
    int total = 0;
};

void tally(std::map<FamilyId, FamilyTally>& tallies, const SweepRecord& r) {
    auto& t = tallies[r.row.family];
    ++t.total;
    if (r.compliant) ++t.compliant;
}

}  // namespace

ResolvedPlans resolve_plans(const PlanOptions& options) {
    ResolvedPlans r{load_catalog(options.family_config), {}, {}, {}, {}, {}};
    r.preset = options.grid ? preset_from_file(*options.grid) : preset_by_name(options.preset);
    r.format.style = options.tag_style;

    if (options.families.empty()) {
        r.families.assign(kAllFamilies.begin(), kAllFamilies.end());
    } else {
        for (const std::string& name : options.families) {
            auto id = parse_family(name);
            if (!id) {
                std::string known;
                for (FamilyId f : kAllFamilies) known += fmt::format("{}{}", known.empty() ? "" : ", ", to_string(f));
                throw ConfigError(fmt::format("unknown family '{}' (expected one of: {})", name, known));
            }
            if (std::find(r.families.begin(), r.families.end(), *id) == r.families.end()) r.families.push_back(*id);
        }
    }
    if (options.variants.empty()) {
        for (int v = 0; v < kVariantsPerFamily; ++v) r.variants.push_back(v);
    } else {
        r.variants = options.variants;
    }
    r.plans = expand_preset(r.preset, r.catalog, r.families, r.variants, options.scales);
    return r;
}

int cmd_generate(const GenerateOptions& options, std::ostream& out, std::ostream&) {
    ResolvedPlans r = resolve_plans(options.plans);
    fs::create_directories(options.out);
    const fs::path path = options.out / "dataset.csv";
    const std::size_t rows = export_dataset(r.plans, r.catalog, path, r.format);

    std::map<FamilyId, std::size_t> per_family;
    for (const SweepPlan& p : r.plans) per_family[p.family] += static_cast<std::size_t>(p.steps);
    for (const auto& [family, n] : per_family) out << fmt::format("{:<22} {:>7} rows\n", to_string(family), n);
    out << fmt::format("{:<22} {:>7} rows ({} sweeps) -> {}\n", "total", rows, r.plans.size(), path.string());
    return kExitOk;
}

std::unique_ptr<Responder> make_responder(const RunOptions& options, const AnswerFormat& format,
                                          std::shared_ptr<SlidingWindowLimiter> limiter) {
    const std::string& spec = options.responder;
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);

    if (kind == "oracle") {
        if (!rest.empty()) throw ConfigError("the oracle responder takes no parameters");
        return std::make_unique<OracleResponder>(format);
    }
    if (kind == "synthetic") {
        SyntheticParams params = parse_synthetic_params(rest);
        if (rest.find("seed=") == std::string::npos) params.seed = options.seed;
        return std::make_unique<SyntheticResponder>(params, format);
    }
    if (kind == "remote") {
        RemoteParams params = options.remote;
        if (!rest.empty()) params.model = rest;
        if (params.endpoint.empty()) throw ConfigError("remote responder needs --endpoint");
        return std::make_unique<RemoteResponder>(params, std::move(limiter));
    }
    throw ConfigError(fmt::format("unknown responder '{}' (expected oracle, synthetic[:k=v,...] or remote[:model])", spec));
}

namespace {

ojson config_json(const RunOptions& options, const ResolvedPlans& resolved, const std::string& responder_id) {
    ojson c;
    c["preset"] = resolved.preset.name;
    ojson preset;
    preset["frequencies"] = resolved.preset.frequencies;
    preset["phases_deg"] = resolved.preset.phases_deg;
    preset["tri_phase_frequencies"] = resolved.preset.tri_phase_frequencies;
    preset["tri_phases_deg"] = resolved.preset.tri_phases_deg;
    preset["steps"] = resolved.preset.steps;
    c["grid"] = preset;
    ojson families = ojson::array();
    for (FamilyId f : resolved.families) families.push_back(std::string(to_string(f)));
    c["families"] = families;
    c["variants"] = resolved.variants;
    c["amplitude_scales"] = options.plans.scales;
    c["tag_style"] = std::string(to_string(options.plans.tag_style));
    c["responder"] = responder_id;
    c["seed"] = options.seed;
    c["dataset"] = options.dataset ? ojson(options.dataset->string()) : ojson(nullptr);
    if (options.responder.rfind("remote", 0) == 0) {
        ojson remote;
        remote["endpoint"] = options.remote.endpoint;
        remote["model"] = options.remote.model;
        remote["api_key_env"] = options.remote.api_key_env;
        remote["temperature"] = options.remote.temperature;
        remote["max_tokens"] = options.remote.max_tokens;
        remote["rpm"] = options.remote.rpm_limit;
        remote["tpm"] = options.remote.tpm_limit;
        remote["timeout_s"] = options.remote.timeout_s;
        remote["max_retries"] = options.remote.max_retries;
        remote["unsafe_decoding"] = options.remote.unsafe_decoding;
        c["remote"] = remote;
    }
    c["min_compliance"] = options.min_compliance;
    return c;
}

struct Job {
    SweepPlan plan;
    std::vector<DatasetRow> rows;  // dataset mode only
};

ojson manifest_json(const std::string& run_id, const ojson& config, const ResolvedPlans& resolved,
                    std::size_t plans_total, const std::vector<std::string>& completed,
                    const std::map<FamilyId, FamilyTally>& tallies, std::string_view status) {
    ojson m;
    m["run_id"] = run_id;
    m["status"] = status;
    m["config"] = config;
    m["family_constants"] = {{"version", resolved.catalog.version()}, {"sha1", resolved.catalog.content_hash()}};
    m["plans_total"] = plans_total;
    m["results"] = kResultsName;
    m["request_log"] = kRequestsName;
    ojson compliance = ojson::object();
    for (const auto& [family, t] : tallies)
        compliance[std::string(to_string(family))] = {{"compliant", t.compliant}, {"total", t.total}};
    m["compliance"] = compliance;
    m["completed_sweeps"] = completed;
    return m;
}

}  // namespace

std::string run_id_for(const RunOptions& options, const ResolvedPlans& resolved, const std::string& responder_id) {
    ojson c = config_json(options, resolved, responder_id);
    c["family_constants_sha1"] = resolved.catalog.content_hash();
    return git_blob_sha1(dump(c)).substr(0, 12);
}

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
    if (options.jobs < 1) throw ConfigError("--jobs must be at least 1");
    if (options.stop_after && *options.stop_after < 0) throw ConfigError("--stop-after must be non-negative");
    ResolvedPlans resolved = resolve_plans(options.plans);

    std::vector<Job> jobs;
    if (options.dataset) {
        std::vector<DatasetRow> rows = import_dataset(*options.dataset);
        for (DatasetSweep& s : group_dataset(rows, resolved.catalog)) jobs.push_back({s.plan, std::move(s.rows)});
    } else {
        for (const SweepPlan& p : resolved.plans) jobs.push_back({p, {}});
    }

    std::shared_ptr<SlidingWindowLimiter> limiter;
    static SteadyClock steady;
    if (options.responder.rfind("remote", 0) == 0)
        limiter = std::make_shared<SlidingWindowLimiter>(
            RateLimits{options.remote.rpm_limit, options.remote.tpm_limit}, steady);
    std::unique_ptr<Responder> probe = make_responder(options, resolved.format, limiter);
    const std::string responder_id = probe->id();
    const std::string run_id = run_id_for(options, resolved, responder_id);
    const ojson config = config_json(options, resolved, responder_id);

    fs::create_directories(options.out);
    const fs::path manifest_path = options.out / kManifestName;
    const fs::path results_path = options.out / kResultsName;
    const fs::path requests_path = options.out / kRequestsName;

    std::set<std::string> done;
    std::vector<std::string> completed;
    std::map<FamilyId, FamilyTally> tallies;
    std::string kept_results, kept_requests;

    if (options.resume && fs::exists(manifest_path)) {
        ojson manifest;
        try {
            manifest = ojson::parse(read_text(manifest_path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(fmt::format("{}: unreadable manifest: {}", manifest_path.string(), e.what()));
        }
        const std::string previous = manifest.value("run_id", "");
        if (previous != run_id)
            throw ConfigError(fmt::format("cannot resume: {} belongs to run {}, this configuration is run {}",
                                          manifest_path.string(), previous, run_id));
        std::set<std::string> listed;
        for (const auto& key : manifest.value("completed_sweeps", ojson::array())) listed.insert(key.get<std::string>());

        // Keep whole sweeps that the manifest lists; anything after them was in flight.
        std::map<std::string, std::vector<std::string_view>> by_key;
        const std::string results_text = fs::exists(results_path) ? read_text(results_path) : "";
        for (std::string_view line : complete_lines(results_text)) {
            std::string key = line_plan_key(line);
            if (listed.count(key)) by_key[key].push_back(line);
        }
        std::string requests_text = fs::exists(requests_path) ? read_text(requests_path) : "";
        std::map<std::string, std::vector<std::string_view>> req_by_key;
        for (std::string_view line : complete_lines(requests_text)) {
            std::string key = line_plan_key(line);
            if (listed.count(key)) req_by_key[key].push_back(line);
        }
        for (const Job& job : jobs) {
            const std::string key = job.plan.key();
            auto it = by_key.find(key);
            if (it == by_key.end() || it->second.size() != static_cast<std::size_t>(job.plan.steps)) continue;
            std::string block;
            for (std::string_view line : it->second) block.append(line).push_back('\n');
            std::istringstream check(block);
            LoadedResults loaded = load_results(check);
            for (const SweepRecord& r : loaded.records) tally(tallies, r);
            kept_results += block;
            for (std::string_view line : req_by_key[key]) kept_requests.append(line).push_back('\n');
            done.insert(key);
            completed.push_back(key);
        }
        out << fmt::format("resuming run {}: {} of {} sweeps already complete\n", run_id, done.size(), jobs.size());
    }

    // The full configuration is on disk before the first request goes out.
    write_file_atomic(manifest_path,
                      dump(manifest_json(run_id, config, resolved, jobs.size(), completed, tallies, "running")) + "\n");
    write_file_atomic(results_path, kept_results);
    write_file_atomic(requests_path, kept_requests);

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (!done.count(jobs[i].plan.key())) pending.push_back(i);
    std::size_t budget = pending.size();
    if (options.stop_after) budget = std::min(budget, static_cast<std::size_t>(*options.stop_after));

    std::ofstream results(results_path, std::ios::binary | std::ios::app);
    std::ofstream requests(requests_path, std::ios::binary | std::ios::app);
    if (!results || !requests) throw IoError(fmt::format("cannot append to {}", options.out.string()));

    // Workers fill slots in any order; this thread writes them in plan order.
    std::vector<std::optional<SweepRun>> slots(budget);
    std::vector<std::exception_ptr> failures(budget);
    std::mutex mu;
    std::condition_variable ready;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};

    auto worker = [&] {
        std::unique_ptr<Responder> responder = make_responder(options, resolved.format, limiter);
        while (!abort) {
            const std::size_t slot = next++;
            if (slot >= budget) break;
            const Job& job = jobs[pending[slot]];
            std::optional<SweepRun> run;
            std::exception_ptr failure;
            try {
                run = job.rows.empty() ? run_sweep(*responder, job.plan, resolved.catalog, resolved.format, run_id)
                                       : run_sweep(*responder, job.plan, job.rows, resolved.catalog, resolved.format, run_id);
            } catch (...) {
                failure = std::current_exception();
            }
            std::lock_guard lock(mu);
            slots[slot] = std::move(run);
            failures[slot] = failure;
            ready.notify_all();
        }
    };

    const int n_workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(options.jobs), std::max<std::size_t>(budget, 1)));
    std::vector<std::thread> threads;
    struct Joiner {
        std::vector<std::thread>& threads;
        std::atomic<bool>& abort;
        ~Joiner() {
            abort = true;
            for (auto& t : threads)
                if (t.joinable()) t.join();
        }
    } joiner{threads, abort};
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);

    std::exception_ptr first_failure;
    for (std::size_t slot = 0; slot < budget; ++slot) {
        SweepRun run;
        {
            std::unique_lock lock(mu);
            ready.wait(lock, [&] { return slots[slot].has_value() || failures[slot]; });
            if (failures[slot]) {
                first_failure = failures[slot];
                abort = true;
                break;
            }
            run = std::move(*slots[slot]);
            slots[slot].reset();
        }
        const std::string key = jobs[pending[slot]].plan.key();
        for (const SweepRecord& r : run.records) {
            results << record_to_json_line(r) << '\n';
            tally(tallies, r);
        }
        for (const RequestLog& log : run.requests) requests << dump(request_log_json(key, log)) << '\n';
        results.flush();
        requests.flush();
        if (!results || !requests) throw IoError(fmt::format("failed writing results in {}", options.out.string()));
        completed.push_back(key);
        write_file_atomic(manifest_path, dump(manifest_json(run_id, config, resolved, jobs.size(), completed, tallies,
                                                            "running")) + "\n");
    }
    abort = true;
    for (auto& t : threads) t.join();
    threads.clear();
    if (first_failure) std::rethrow_exception(first_failure);

    const bool finished = completed.size() == jobs.size();
    write_file_atomic(manifest_path, dump(manifest_json(run_id, config, resolved, jobs.size(), completed, tallies,
                                                        finished ? "complete" : "interrupted")) + "\n");

    out << fmt::format("run {} ({}): {}/{} sweeps -> {}\n", run_id, responder_id, completed.size(), jobs.size(),
                       results_path.string());
    bool low = false;
    for (const auto& [family, t] : tallies) {
        const double c = t.total ? static_cast<double>(t.compliant) / t.total : 0.0;
        out << fmt::format("  {:<22} compliance {:6.2f}%  ({} non-compliant of {})\n", to_string(family), 100.0 * c,
                           t.total - t.compliant, t.total);
        if (c < options.min_compliance) low = true;
    }
    if (!finished) {
        out << fmt::format("stopped early; continue with --resume\n");
        return kExitOk;
    }
    if (low) {
        err << fmt::format("error: compliance below {:.0f}% for at least one family\n", 100.0 * options.min_compliance);
        return kExitLowCompliance;
    }
    return kExitOk;
}

int cmd_score(const ScoreOptions& options, std::ostream& out, std::ostream& err) {
    const FamilyCatalog catalog = load_catalog(options.family_config);
    std::vector<fs::path> paths = options.results;
    if (paths.empty()) paths.push_back(options.out / kResultsName);

    std::vector<SweepRecord> records;
    for (const fs::path& p : paths) {
        if (!fs::exists(p)) throw ConfigError(fmt::format("results file {} does not exist", p.string()));
        LoadedResults loaded;
        try {
            loaded = load_results(p, LoadOptions{options.lenient, options.run_id});
        } catch (const DataError& e) {
            err << fmt::format("data error: {}: {}{}\n", p.string(), e.what(),
                               options.lenient ? "" : " (use --lenient to skip bad lines)");
            return kExitConfig;
        }
        for (const std::string& s : loaded.skipped) err << fmt::format("warning: {}: skipped {}\n", p.string(), s);
        records.insert(records.end(), std::make_move_iterator(loaded.records.begin()),
                       std::make_move_iterator(loaded.records.end()));
    }
    if (records.empty()) {
        err << "error: no result records to score\n";
        return kExitNoScore;
    }

    std::vector<RecordSweep> grouped = group_records(records, catalog);
    // One label per responder; repeated responders across runs are told apart by run id.
    std::map<std::string, std::set<std::string>> runs_of;
    for (const RecordSweep& s : grouped) runs_of[s.responder_id].insert(s.run_id);

    std::vector<ResponderSweeps> responders;
    std::map<std::string, std::size_t> slot;
    for (const RecordSweep& s : grouped) {
        const std::string label = runs_of[s.responder_id].size() > 1 ? s.responder_id + "@" + s.run_id : s.responder_id;
        auto [it, inserted] = slot.try_emplace(label, responders.size());
        if (inserted) responders.push_back({label, {}});

        std::vector<Sample> model, truth;
        for (const SweepRecord& r : s.records) {
            truth.push_back({r.row.time_step, quantize_answer(r.row.ground_truth)});
            if (r.compliant && r.parsed_value) model.push_back({r.row.time_step, *r.parsed_value});
        }
        SweepMetrics m;
        try {
            m = sweep_metrics(model, truth, s.plan.frequency, s.plan.steps);
        } catch (const FitError& e) {
            m.n_compliant = static_cast<int>(model.size());
            m.n_total = static_cast<int>(truth.size());
            m.valid = false;
            m.invalid_reason = e.what();
        }
        responders[it->second].sweeps.push_back(
            {s.plan.family, s.plan.variant, s.plan.frequency, s.plan.phase_deg, s.plan.amplitude_scale, std::move(m)});
    }

    std::vector<ResponderScore> scores;
    bool any = false;
    for (const ResponderSweeps& r : responders) {
        ResponderScore rs{r.responder_id, std::nullopt, {}};
        try {
            rs.card = score_card(r.sweeps);
            any = true;
        } catch (const NoValidSweeps& e) {
            rs.error = e.what();
        }
        scores.push_back(std::move(rs));
    }
    if (!any) {
        for (const ResponderScore& rs : scores) err << fmt::format("error: {}: {}\n", rs.responder_id, rs.error);
        return kExitNoScore;
    }

    const fs::path report_dir = options.out / "report";
    write_report(report_dir, responders, scores, summary_tables(responders));

    for (const ResponderScore& rs : scores) {
        out << rs.responder_id << '\n';
        if (!rs.card) {
            out << fmt::format("  not scored: {}\n", rs.error);
            continue;
        }
        out << fmt::format("  {:<22} {:>8} {:>8} {:>8} {:>9}\n", "family", "MB-Core", "MB-Plus", "|G-1|", "|phi| rad");
        for (const auto& [family, fs_] : rs.card->per_family)
            out << fmt::format("  {:<22} {:>8.3f} {:>8.3f} {:>8.3f} {:>9.3f}\n", to_string(family), fs_.mb_core,
                               fs_.mb_plus, fs_.aggregate.g_dev, fs_.aggregate.p_dev);
        for (const auto& [family, reason] : rs.card->unscored) {
            out << fmt::format("  {:<22} not scored: {}\n", to_string(family), reason);
            err << fmt::format("warning: {}: {} not scored: {}\n", rs.responder_id, to_string(family), reason);
        }
        out << fmt::format("  {:<22} {:>8.3f} {:>8.3f}\n", "overall", rs.card->mb_core_overall, rs.card->mb_plus_overall);
    }
    out << fmt::format("report -> {}\n", report_dir.string());
    return kExitOk;
}

}  // namespace mathbode
