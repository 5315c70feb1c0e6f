#include "mathbode/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mathbode/errors.hpp"
#include "mathbode/numfmt.hpp"

namespace mathbode {

namespace {

using ojson = nlohmann::ordered_json;

template <typename T>
T require_field(const nlohmann::json& j, const char* name, std::size_t line) {
    auto it = j.find(name);
    if (it == j.end()) throw DataError(fmt::format("missing field '{}'", name), line);
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw DataError(fmt::format("field '{}' has the wrong type", name), line);
    }
}

bool is_six_decimal(std::string_view text) {
    auto dot = text.find('.');
    return dot != std::string_view::npos && text.size() - dot - 1 == 6;
}

SweepRecord record_from_json(const std::string& text, std::size_t line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(fmt::format("invalid JSON ({})", e.what()), line);
    }
    if (!j.is_object()) throw DataError("record is not a JSON object", line);

    SweepRecord r;
    r.run_id = require_field<std::string>(j, "run_id", line);
    r.responder_id = require_field<std::string>(j, "responder_id", line);
    r.plan_key = require_field<std::string>(j, "plan_key", line);
    r.steps = require_field<int>(j, "steps", line);
    auto family = parse_family(require_field<std::string>(j, "family", line));
    if (!family) throw DataError("unknown family", line);
    r.row.family = *family;
    r.row.question_id = require_field<int>(j, "question_id", line);
    try {
        r.row.signal_type = signal_type_from_string(require_field<std::string>(j, "signal_type", line));
    } catch (const ConfigError& e) {
        throw DataError(e.what(), line);
    }
    r.row.amplitude_scale = require_field<double>(j, "amplitude_scale", line);
    r.row.frequency_cycles = require_field<double>(j, "frequency_cycles", line);
    r.row.phase_deg = require_field<double>(j, "phase_deg", line);
    r.row.time_step = require_field<int>(j, "time_step", line);
    r.row.p_value = require_field<double>(j, "p_value", line);
    r.clipped = require_field<bool>(j, "clipped", line);
    r.row.prompt = require_field<std::string>(j, "prompt", line);
    r.row.ground_truth = require_field<double>(j, "ground_truth", line);
    r.raw_response = require_field<std::string>(j, "raw_response", line);
    r.compliant = require_field<bool>(j, "compliant", line);
    if (auto it = j.find("parsed_value"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw DataError("parsed_value is not a number", line);
        r.parsed_value = it->get<double>();
    }
    if (auto it = j.find("value_text"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError("value_text is not a string", line);
        r.value_text = it->get<std::string>();
    }
    if (auto it = j.find("failure_reason"); it != j.end() && !it->is_null()) {
        auto reason = it->is_string() ? failure_reason_from_string(it->get<std::string>()) : std::nullopt;
        if (!reason) throw DataError("unknown failure_reason", line);
        r.failure_reason = reason;
    }
    r.attempts = require_field<int>(j, "attempts", line);
    r.latency_ms = require_field<std::int64_t>(j, "latency_ms", line);

    if (r.compliant != r.parsed_value.has_value() || r.compliant != r.value_text.has_value())
        throw DataError("parsed_value/value_text must be present exactly when compliant", line);
    if (r.compliant == r.failure_reason.has_value())
        throw DataError("failure_reason must be present exactly when non-compliant", line);
    if (r.value_text && !is_six_decimal(*r.value_text))
        throw DataError("value_text must have six decimals", line);
    if (r.row.time_step < 1 || r.row.time_step > r.steps) throw DataError("time_step outside 1..steps", line);
    return r;
}

DatasetRow row_from_fields(const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != kDatasetColumns.size())
        throw DataError(fmt::format("expected {} fields, got {}", kDatasetColumns.size(), f.size()), line);
    auto number = [&](std::size_t i) {
        auto v = parse_double(f[i]);
        if (!v) throw DataError(fmt::format("column {}: '{}' is not a number", kDatasetColumns[i], f[i]), line);
        return *v;
    };
    auto integer = [&](std::size_t i) {
        auto v = parse_int(f[i]);
        if (!v) throw DataError(fmt::format("column {}: '{}' is not an integer", kDatasetColumns[i], f[i]), line);
        return static_cast<int>(*v);
    };
    DatasetRow row;
    auto family = parse_family(f[0]);
    if (!family) throw DataError(fmt::format("unknown family '{}'", f[0]), line);
    row.family = *family;
    row.question_id = integer(1);
    try {
        row.signal_type = signal_type_from_string(f[2]);
    } catch (const ConfigError& e) {
        throw DataError(e.what(), line);
    }
    row.amplitude_scale = number(3);
    row.frequency_cycles = number(4);
    row.phase_deg = number(5);
    row.time_step = integer(6);
    row.p_value = number(7);
    row.prompt = f[8];
    row.ground_truth = number(9);
    return row;
}

}  // namespace

double truth_at_step(const SweepPlan& plan, const FamilyCatalog& catalog, int t) {
    const FamilySpec& spec = catalog.spec(plan.family);
    const double p = spec.clip(quantize_parameter(drive_at(plan, spec, t).p));
    return solve(spec, catalog.instance(plan.family, plan.variant, p));
}

std::vector<RowInstance> build_sweep_rows(const SweepPlan& plan, const FamilyCatalog& catalog,
                                          const AnswerFormat& format) {
    const FamilySpec& spec = catalog.spec(plan.family);
    std::vector<RowInstance> rows;
    rows.reserve(static_cast<std::size_t>(plan.steps));
    for (const DrivePoint& point : drive_series(plan, spec)) {
        // Rounding to the printed precision can step past a range end by < 1e-6.
        const double p = spec.clip(quantize_parameter(point.p));
        RowInstance ri;
        ri.instance = catalog.instance(plan.family, plan.variant, p);
        ri.clipped = point.clipped;
        ri.row.family = plan.family;
        ri.row.question_id = plan.variant;
        ri.row.signal_type = plan.signal;
        ri.row.amplitude_scale = plan.amplitude_scale;
        ri.row.frequency_cycles = plan.frequency;
        ri.row.phase_deg = plan.phase_deg;
        ri.row.time_step = point.t;
        ri.row.p_value = p;
        ri.row.prompt = render_prompt(ri.instance, format);
        ri.row.ground_truth = solve(spec, ri.instance);
        rows.push_back(std::move(ri));
    }
    return rows;
}

bool verify_ground_truth(const DatasetRow& row, const FamilyCatalog& catalog) {
    try {
        const auto inst = catalog.instance(row.family, row.question_id, row.p_value);
        const double expected = solve(catalog.spec(row.family), inst);
        return std::abs(expected - row.ground_truth) <= 1e-9 * std::max(1.0, std::abs(expected));
    } catch (const Error&) {
        return false;
    }
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    ++line;
    std::string field;
    bool quoted = false;
    bool at_field_start = true;
    char c;
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && at_field_start) {
            quoted = true;
            at_field_start = false;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            at_field_start = true;
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
            at_field_start = false;
        }
    }
    if (quoted) throw DataError("unterminated quoted field", line);
    fields.push_back(std::move(field));
    return true;
}

std::size_t export_dataset(std::span<const SweepPlan> plans, const FamilyCatalog& catalog, std::ostream& out,
                           const AnswerFormat& format) {
    std::vector<SweepPlan> sorted(plans.begin(), plans.end());
    std::stable_sort(sorted.begin(), sorted.end(), plan_less);

    for (std::size_t i = 0; i < kDatasetColumns.size(); ++i) out << (i ? "," : "") << kDatasetColumns[i];
    out << '\n';
    std::size_t count = 0;
    for (const SweepPlan& plan : sorted) {
        for (const RowInstance& ri : build_sweep_rows(plan, catalog, format)) {
            const DatasetRow& r = ri.row;
            if (!std::isfinite(r.ground_truth))
                throw DataError(fmt::format("non-finite ground truth in {}", plan.key()), count + 2);
            out << to_string(r.family) << ',' << r.question_id << ',' << to_string(r.signal_type) << ','
                << format_shortest(r.amplitude_scale) << ',' << format_shortest(r.frequency_cycles) << ','
                << format_shortest(r.phase_deg) << ',' << r.time_step << ',' << format_fixed6(r.p_value) << ','
                << csv_escape(r.prompt) << ',' << format_shortest(r.ground_truth) << '\n';
            ++count;
        }
    }
    if (!out) throw IoError("failed writing dataset");
    return count;
}

std::size_t export_dataset(std::span<const SweepPlan> plans, const FamilyCatalog& catalog,
                           const std::filesystem::path& path, const AnswerFormat& format) {
    std::ostringstream buffer;
    std::size_t count = export_dataset(plans, catalog, buffer, format);
    write_file_atomic(path, buffer.str());
    return count;
}

std::vector<DatasetRow> import_dataset(std::istream& in) {
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!read_csv_record(in, fields, line)) throw DataError("empty dataset file", 1);
    if (fields.size() != kDatasetColumns.size() ||
        !std::equal(fields.begin(), fields.end(), kDatasetColumns.begin()))
        throw DataError("header does not match the dataset column set", 1);

    std::vector<DatasetRow> rows;
    while (true) {
        const std::size_t start_line = line + 1;
        if (!read_csv_record(in, fields, line)) break;
        if (fields.size() == 1 && fields[0].empty()) continue;
        rows.push_back(row_from_fields(fields, start_line));
    }
    return rows;
}

std::vector<DatasetRow> import_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open dataset {}", path.string()));
    return import_dataset(in);
}

SweepPlan plan_for_row(const DatasetRow& row, const FamilyCatalog& catalog, int steps) {
    const FamilySpec& spec = catalog.spec(row.family);
    SweepPlan plan;
    plan.family = row.family;
    plan.variant = row.question_id;
    plan.signal = row.signal_type;
    plan.amplitude_scale = row.amplitude_scale;
    plan.frequency = row.frequency_cycles;
    plan.phase_deg = row.phase_deg;
    plan.steps = steps;
    plan.epsilon = spec.epsilon_default;
    plan.p0 = spec.p0;
    return plan;
}

std::vector<DatasetSweep> group_dataset(std::span<const DatasetRow> rows, const FamilyCatalog& catalog) {
    std::vector<DatasetSweep> sweeps;
    std::map<std::string, std::size_t> index;
    for (const DatasetRow& row : rows) {
        // Group key without T: the sweep length is what the file contains.
        std::string key = plan_for_row(row, catalog, 0).key();
        auto [it, inserted] = index.try_emplace(key, sweeps.size());
        if (inserted) sweeps.push_back({plan_for_row(row, catalog, 0), {}});
        sweeps[it->second].rows.push_back(row);
    }
    for (DatasetSweep& s : sweeps) {
        std::sort(s.rows.begin(), s.rows.end(),
                  [](const DatasetRow& a, const DatasetRow& b) { return a.time_step < b.time_step; });
        s.plan.steps = static_cast<int>(s.rows.size());
    }
    return sweeps;
}

std::string record_to_json_line(const SweepRecord& r) {
    ojson j;
    j["run_id"] = r.run_id;
    j["responder_id"] = r.responder_id;
    j["plan_key"] = r.plan_key;
    j["steps"] = r.steps;
    j["family"] = to_string(r.row.family);
    j["question_id"] = r.row.question_id;
    j["signal_type"] = to_string(r.row.signal_type);
    j["amplitude_scale"] = r.row.amplitude_scale;
    j["frequency_cycles"] = r.row.frequency_cycles;
    j["phase_deg"] = r.row.phase_deg;
    j["time_step"] = r.row.time_step;
    j["p_value"] = r.row.p_value;
    j["clipped"] = r.clipped;
    j["prompt"] = r.row.prompt;
    j["ground_truth"] = r.row.ground_truth;
    j["raw_response"] = r.raw_response;
    j["compliant"] = r.compliant;
    j["parsed_value"] = r.parsed_value ? ojson(*r.parsed_value) : ojson(nullptr);
    j["value_text"] = r.value_text ? ojson(*r.value_text) : ojson(nullptr);
    j["failure_reason"] = r.failure_reason ? ojson(std::string(to_string(*r.failure_reason))) : ojson(nullptr);
    j["attempts"] = r.attempts;
    j["latency_ms"] = r.latency_ms;
    // Raw responses are arbitrary bytes; replace invalid UTF-8 rather than throw.
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void save_results(std::ostream& out, std::span<const SweepRecord> records) {
    for (const SweepRecord& r : records) out << record_to_json_line(r) << '\n';
    out.flush();
    if (!out) throw IoError("failed writing results");
}

LoadedResults load_results(std::istream& in, const LoadOptions& options) {
    LoadedResults out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        try {
            SweepRecord r = record_from_json(text, line);
            if (options.run_id && r.run_id != *options.run_id) continue;
            out.records.push_back(std::move(r));
        } catch (const DataError& e) {
            if (!options.lenient) throw;
            out.skipped.emplace_back(e.what());
        }
    }
    return out;
}

LoadedResults load_results(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open results {}", path.string()));
    return load_results(in, options);
}

std::vector<RecordSweep> group_records(std::span<const SweepRecord> records, const FamilyCatalog& catalog) {
    std::vector<RecordSweep> sweeps;
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
    for (const SweepRecord& r : records) {
        auto [it, inserted] = index.try_emplace({r.run_id, r.responder_id, r.plan_key}, sweeps.size());
        if (inserted)
            sweeps.push_back({r.run_id, r.responder_id, r.plan_key, plan_for_row(r.row, catalog, r.steps), {}});
        sweeps[it->second].records.push_back(r);
    }
    for (RecordSweep& s : sweeps)
        std::stable_sort(s.records.begin(), s.records.end(), [](const SweepRecord& a, const SweepRecord& b) {
            return a.row.time_step < b.row.time_step;
        });
    return sweeps;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError(fmt::format("failed writing {}", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace mathbode
