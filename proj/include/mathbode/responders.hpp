#pragma once

// Answer producers: the symbolic oracle, synthetic dynamics fixtures and a
// rate-limited chat-completion client; plus the per-sweep driver.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mathbode/datastore.hpp"
#include "mathbode/drive.hpp"
#include "mathbode/families.hpp"
#include "mathbode/parser.hpp"
#include "mathbode/rate_limiter.hpp"

namespace mathbode {

/// What a responder may look at when answering row t of a sweep.
struct RowContext {
    const SweepPlan& plan;
    const ProblemInstance& instance;
    int t = 0;
    double truth = 0.0;
    /// Exact answer at any integer step, including t <= 0 (pre-sweep history).
    std::function<double(int)> truth_at;
};

struct ResponderReply {
    std::string raw_text;
    std::int64_t latency_ms = 0;
    int attempt_count = 1;
    std::optional<std::string> transport_error;
    // Audit trail for remote calls; empty otherwise.
    std::string request_body;
    std::string response_body;
    int http_status = 0;
};

class Responder {
public:
    virtual ~Responder() = default;
    virtual std::string id() const = 0;
    virtual ResponderReply respond(const RowContext& row, std::string_view prompt) = 0;
};

/// Symbolic baseline: the exact answer in the compliant answer format.
class OracleResponder final : public Responder {
public:
    explicit OracleResponder(AnswerFormat format = {}) : format_(std::move(format)) {}
    std::string id() const override { return "oracle"; }
    ResponderReply respond(const RowContext& row, std::string_view prompt) override;

private:
    AnswerFormat format_;
};

struct SyntheticParams {
    double gain_k = 1.0;
    int delay_steps = 0;
    std::optional<double> saturation_limit;  // clamp output to [-limit, limit]
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Parses "gain=0.5,delay=2,sat=3,noise=0.01,seed=7" (any subset). Throws ConfigError.
SyntheticParams parse_synthetic_params(std::string_view spec);

/// Known-dynamics test bench acting on the true answer sequence:
/// y_t = sat(k · y*_{t-d} + noise). Noise is seeded per (seed, sweep, t).
class SyntheticResponder final : public Responder {
public:
    explicit SyntheticResponder(SyntheticParams params, AnswerFormat format = {});
    std::string id() const override;
    ResponderReply respond(const RowContext& row, std::string_view prompt) override;
    const SyntheticParams& params() const { return params_; }

private:
    SyntheticParams params_;
    AnswerFormat format_;
};

inline constexpr double kFixedTemperature = 0.0;
inline constexpr int kFixedMaxTokens = 1028;

struct RemoteParams {
    std::string endpoint;  // full URL of the chat-completions route
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = kFixedTemperature;
    int max_tokens = kFixedMaxTokens;
    std::int64_t rpm_limit = 600;
    std::int64_t tpm_limit = 20000;
    double timeout_s = 60.0;
    int max_retries = 3;
    std::chrono::milliseconds backoff_initial{500};
    std::chrono::milliseconds backoff_max{8000};
    bool unsafe_decoding = false;  // required to change temperature/max_tokens
};

/// Chat-completion client: one user message per row, fixed decoding, retries
/// with exponential backoff on transport errors, 429 and 5xx.
class RemoteResponder final : public Responder {
public:
    /// `limiter` may be shared between responders; null builds one from params.
    /// `clock` drives backoff sleeps and the built-in limiter.
    RemoteResponder(RemoteParams params, std::shared_ptr<SlidingWindowLimiter> limiter = nullptr,
                    Clock* clock = nullptr);
    ~RemoteResponder() override;

    std::string id() const override { return "remote:" + params_.model; }
    ResponderReply respond(const RowContext& row, std::string_view prompt) override;

    /// The JSON body sent for `prompt`.
    std::string request_body(std::string_view prompt) const;

private:
    RemoteParams params_;
    std::unique_ptr<SteadyClock> own_clock_;
    Clock* clock_;
    std::shared_ptr<SlidingWindowLimiter> limiter_;
    std::string base_url_;
    std::string path_;
    std::string api_key_;
};

/// Per-row request metadata for the run manifest.
struct RequestLog {
    int t = 0;
    int attempts = 1;
    std::int64_t latency_ms = 0;
    int http_status = 0;
    std::optional<std::string> transport_error;
    std::string request_body;
    std::string response_body;
};

struct SweepRun {
    std::vector<SweepRecord> records;  // ordered by t
    std::vector<RequestLog> requests;
};

/// For t = 1..T: drive, solve, render, respond, parse.
SweepRun run_sweep(Responder& responder, const SweepPlan& plan, const FamilyCatalog& catalog,
                   const AnswerFormat& format, const std::string& run_id);

/// Same, over rows loaded from a dataset file (prompts and truths as stored).
SweepRun run_sweep(Responder& responder, const SweepPlan& plan, std::span<const DatasetRow> rows,
                   const FamilyCatalog& catalog, const AnswerFormat& format, const std::string& run_id);

}  // namespace mathbode
