#include "mathbode/responders.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mathbode/errors.hpp"
#include "mathbode/numfmt.hpp"

namespace mathbode {

namespace {

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string reply_text(double value, const AnswerFormat& format) {
    return wrap_answer(format_answer(value), format);
}

SweepRun run_rows(Responder& responder, const SweepPlan& plan, const std::vector<RowInstance>& rows,
                  const FamilyCatalog& catalog, const AnswerFormat& format, const std::string& run_id) {
    auto truth_at = [&](int t) {
        if (t >= 1 && t <= static_cast<int>(rows.size())) return rows[static_cast<std::size_t>(t - 1)].row.ground_truth;
        return truth_at_step(plan, catalog, t);
    };
    const std::string key = plan.key();
    const std::string responder_id = responder.id();

    SweepRun run;
    run.records.reserve(rows.size());
    for (const RowInstance& ri : rows) {
        RowContext ctx{plan, ri.instance, ri.row.time_step, ri.row.ground_truth, truth_at};
        ResponderReply reply = responder.respond(ctx, ri.row.prompt);

        SweepRecord rec;
        rec.row = ri.row;
        rec.steps = plan.steps;
        rec.plan_key = key;
        rec.clipped = ri.clipped;
        rec.raw_response = reply.raw_text;
        rec.attempts = reply.attempt_count;
        rec.latency_ms = reply.latency_ms;
        rec.responder_id = responder_id;
        rec.run_id = run_id;
        if (reply.transport_error) {
            rec.failure_reason = FailureReason::transport;
        } else {
            ParsedAnswer parsed = parse_response(reply.raw_text, format);
            rec.compliant = parsed.compliant;
            rec.parsed_value = parsed.value;
            rec.value_text = parsed.value_text;
            rec.failure_reason = parsed.failure_reason;
        }
        run.records.push_back(std::move(rec));
        run.requests.push_back({ri.row.time_step, reply.attempt_count, reply.latency_ms, reply.http_status,
                                reply.transport_error, std::move(reply.request_body),
                                std::move(reply.response_body)});
    }
    return run;
}

}  // namespace

ResponderReply OracleResponder::respond(const RowContext& row, std::string_view) {
    ResponderReply reply;
    reply.raw_text = reply_text(row.truth, format_);
    return reply;
}

SyntheticParams parse_synthetic_params(std::string_view spec) {
    SyntheticParams params;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        auto comma = spec.find(',', pos);
        std::string_view item = spec.substr(pos, comma == std::string_view::npos ? spec.npos : comma - pos);
        pos = comma == std::string_view::npos ? spec.size() : comma + 1;
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string_view::npos) throw ConfigError(fmt::format("synthetic parameter '{}' needs key=value", item));
        std::string_view key = item.substr(0, eq);
        std::string_view value = item.substr(eq + 1);
        auto number = parse_double(value);
        if (!number || !std::isfinite(*number))
            throw ConfigError(fmt::format("synthetic parameter {}: '{}' is not a number", key, value));
        if (key == "gain" || key == "k") params.gain_k = *number;
        else if (key == "delay") {
            if (*number < 0 || *number != std::floor(*number)) throw ConfigError("delay must be a non-negative integer");
            params.delay_steps = static_cast<int>(*number);
        } else if (key == "sat") {
            if (*number <= 0) throw ConfigError("sat must be positive");
            params.saturation_limit = *number;
        } else if (key == "noise") {
            if (*number < 0) throw ConfigError("noise must be non-negative");
            params.noise_sigma = *number;
        } else if (key == "seed") {
            if (*number < 0) throw ConfigError("seed must be non-negative");
            params.seed = static_cast<std::uint64_t>(*number);
        } else throw ConfigError(fmt::format("unknown synthetic parameter '{}'", key));
    }
    return params;
}

SyntheticResponder::SyntheticResponder(SyntheticParams params, AnswerFormat format)
    : params_(params), format_(std::move(format)) {}

std::string SyntheticResponder::id() const {
    std::string id = fmt::format("synthetic:gain={},delay={}", format_shortest(params_.gain_k), params_.delay_steps);
    if (params_.saturation_limit) id += ",sat=" + format_shortest(*params_.saturation_limit);
    if (params_.noise_sigma > 0) id += fmt::format(",noise={},seed={}", format_shortest(params_.noise_sigma), params_.seed);
    return id;
}

ResponderReply SyntheticResponder::respond(const RowContext& row, std::string_view) {
    double value = params_.gain_k * row.truth_at(row.t - params_.delay_steps);
    if (params_.noise_sigma > 0.0) {
        const std::uint64_t key_hash = fnv1a(row.plan.key());
        std::seed_seq seq{static_cast<std::uint32_t>(params_.seed), static_cast<std::uint32_t>(params_.seed >> 32),
                          static_cast<std::uint32_t>(key_hash), static_cast<std::uint32_t>(key_hash >> 32),
                          static_cast<std::uint32_t>(row.t)};
        std::mt19937_64 rng(seq);
        value += std::normal_distribution<double>(0.0, params_.noise_sigma)(rng);
    }
    if (params_.saturation_limit) value = std::clamp(value, -*params_.saturation_limit, *params_.saturation_limit);
    ResponderReply reply;
    reply.raw_text = reply_text(value, format_);
    return reply;
}

RemoteResponder::RemoteResponder(RemoteParams params, std::shared_ptr<SlidingWindowLimiter> limiter, Clock* clock)
    : params_(std::move(params)), clock_(clock), limiter_(std::move(limiter)) {
    if (!params_.unsafe_decoding &&
        (params_.temperature != kFixedTemperature || params_.max_tokens != kFixedMaxTokens))
        throw ConfigError("temperature 0 and max_tokens 1028 are fixed; pass --unsafe-decoding to change them");
    if (params_.model.empty()) throw ConfigError("remote responder needs a model name");
    if (params_.max_retries < 0) throw ConfigError("max_retries must be non-negative");

    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(params_.endpoint, m, url_re))
        throw ConfigError(fmt::format("endpoint '{}' is not an http(s) URL", params_.endpoint));
    base_url_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";

    if (!clock_) {
        own_clock_ = std::make_unique<SteadyClock>();
        clock_ = own_clock_.get();
    }
    if (!limiter_)
        limiter_ = std::make_shared<SlidingWindowLimiter>(RateLimits{params_.rpm_limit, params_.tpm_limit}, *clock_);
    if (const char* key = std::getenv(params_.api_key_env.c_str())) api_key_ = key;
}

RemoteResponder::~RemoteResponder() = default;

std::string RemoteResponder::request_body(std::string_view prompt) const {
    nlohmann::ordered_json body;
    body["model"] = params_.model;
    body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", std::string(prompt)}}});
    body["temperature"] = params_.temperature;
    body["max_tokens"] = params_.max_tokens;
    return body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

ResponderReply RemoteResponder::respond(const RowContext&, std::string_view prompt) {
    ResponderReply reply;
    reply.request_body = request_body(prompt);
    const std::int64_t tokens = estimate_request_tokens(prompt, params_.max_tokens);
    const auto started = std::chrono::steady_clock::now();

    httplib::Client client(base_url_);
    const auto timeout = std::chrono::duration<double>(params_.timeout_s);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto backoff = params_.backoff_initial;
    const int max_attempts = 1 + params_.max_retries;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        reply.attempt_count = attempt;
        limiter_->acquire(tokens);
        auto res = client.Post(path_, headers, reply.request_body, "application/json");
        bool retryable = false;
        if (!res) {
            reply.transport_error = fmt::format("transport: {}", httplib::to_string(res.error()));
            reply.http_status = 0;
            retryable = true;
        } else {
            reply.http_status = res->status;
            reply.response_body = res->body;
            if (res->status == 200) {
                try {
                    auto j = nlohmann::json::parse(res->body);
                    reply.raw_text = j.at("choices").at(0).at("message").at("content").get<std::string>();
                    reply.transport_error.reset();
                } catch (const nlohmann::json::exception& e) {
                    reply.transport_error = fmt::format("unreadable completion body: {}", e.what());
                }
                break;
            }
            reply.transport_error = fmt::format("HTTP {}", res->status);
            retryable = res->status == 429 || res->status >= 500;
        }
        if (!retryable || attempt == max_attempts) break;
        clock_->sleep_for(backoff);
        backoff = std::min(backoff * 2, params_.backoff_max);
    }
    reply.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    return reply;
}

SweepRun run_sweep(Responder& responder, const SweepPlan& plan, const FamilyCatalog& catalog,
                   const AnswerFormat& format, const std::string& run_id) {
    return run_rows(responder, plan, build_sweep_rows(plan, catalog, format), catalog, format, run_id);
}

SweepRun run_sweep(Responder& responder, const SweepPlan& plan, std::span<const DatasetRow> rows,
                   const FamilyCatalog& catalog, const AnswerFormat& format, const std::string& run_id) {
    const FamilySpec& spec = catalog.spec(plan.family);
    std::vector<RowInstance> instances;
    instances.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const DatasetRow& row = rows[i];
        if (row.time_step != static_cast<int>(i) + 1)
            throw ConfigError(fmt::format("{}: dataset steps are not 1..{}", plan.key(), rows.size()));
        RowInstance ri;
        ri.row = row;
        ri.instance = catalog.instance(row.family, row.question_id, row.p_value);
        ri.clipped = drive_at(plan, spec, row.time_step).clipped;
        instances.push_back(std::move(ri));
    }
    return run_rows(responder, plan, instances, catalog, format, run_id);
}

}  // namespace mathbode
