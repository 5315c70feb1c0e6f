#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mathbode/errors.hpp"
#include "mathbode/responders.hpp"

using namespace mathbode;

namespace {

const FamilyCatalog& catalog() { return FamilyCatalog::builtin(); }

SweepPlan first_plan(FamilyId family, double f = 4.0, int variant = 0, double phase = 0.0) {
    for (const auto& p : expand_preset(full_preset(), catalog(), {family}, {variant}, {1.0}))
        if (p.frequency == f && p.phase_deg == phase) return p;
    FAIL("no plan");
    return {};
}

/// Chat-completions stand-in. Answers from a prompt -> reply table; prompts in
/// `always_fail` get HTTP 500 on every attempt; the first `throttle` requests get 429.
class StubServer {
public:
    StubServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            ++requests;
            last_auth = req.get_header_value("Authorization");
            last_body = req.body;
            const auto body = nlohmann::json::parse(req.body);
            const std::string prompt = body["messages"][0]["content"];
            if (throttle > 0) {
                --throttle;
                res.status = 429;
                return;
            }
            if (always_fail.count(prompt)) {
                res.status = 500;
                res.set_content("boom", "text/plain");
                return;
            }
            if (bad_request) {
                res.status = 400;
                return;
            }
            nlohmann::json reply;
            reply["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", answers[prompt]}}}}});
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

    std::map<std::string, std::string> answers;
    std::set<std::string> always_fail;
    int throttle = 0;
    bool bad_request = false;
    std::atomic<int> requests{0};
    std::string last_auth, last_body;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mu_;
};

RemoteParams remote_params(const std::string& url) {
    RemoteParams p;
    p.endpoint = url;
    p.model = "stub-model";
    p.api_key_env = "MATHBODE_TEST_KEY";
    p.timeout_s = 5;
    p.tpm_limit = 10'000'000;  // keep the simulated clock for backoff only
    return p;
}

}  // namespace

TEST_CASE("oracle formats the exact answer") {
    const SweepPlan plan = first_plan(FamilyId::linear_solve);
    ProblemInstance inst{FamilyId::linear_solve, 0, 2.0, {{"b", 1}, {"c", 5}}};
    OracleResponder oracle;
    RowContext row{plan, inst, 1, 2.0, [](int) { return 2.0; }};
    CHECK(oracle.respond(row, "").raw_text == "[answer_start] 2.000000 [answer_end]");
    CHECK(oracle.id() == "oracle");
}

TEST_CASE("synthetic attenuator on the true answer") {
    const SweepPlan plan = first_plan(FamilyId::similar_triangles);
    ProblemInstance inst{FamilyId::similar_triangles, 0, 2.0, {{"s", 3}}};
    SyntheticResponder half(parse_synthetic_params("gain=0.5"));
    RowContext row{plan, inst, 1, 6.0, [](int) { return 6.0; }};
    CHECK(half.respond(row, "ignored").raw_text == "[answer_start] 3.000000 [answer_end]");
    CHECK(half.id() == "synthetic:gain=0.5,delay=0");
}

TEST_CASE("synthetic params") {
    auto p = parse_synthetic_params("k=0.9,delay=2,sat=3,noise=0.01,seed=7");
    CHECK(p.gain_k == 0.9);
    CHECK(p.delay_steps == 2);
    CHECK(*p.saturation_limit == 3.0);
    CHECK(p.noise_sigma == 0.01);
    CHECK(p.seed == 7);
    CHECK(parse_synthetic_params("").gain_k == 1.0);
    CHECK_THROWS_AS(parse_synthetic_params("delay=1.5"), ConfigError);
    CHECK_THROWS_AS(parse_synthetic_params("delay=-1"), ConfigError);
    CHECK_THROWS_AS(parse_synthetic_params("gain"), ConfigError);
    CHECK_THROWS_AS(parse_synthetic_params("gain=abc"), ConfigError);
    CHECK_THROWS_AS(parse_synthetic_params("wobble=1"), ConfigError);
    CHECK_THROWS_AS(parse_synthetic_params("sat=0"), ConfigError);
}

TEST_CASE("run_sweep with the oracle: 64 ordered compliant records") {
    for (FamilyId fam : kAllFamilies) {
        const SweepPlan plan = first_plan(fam, 8.0, 1);
        OracleResponder oracle;
        const SweepRun run = run_sweep(oracle, plan, catalog(), {}, "r1");
        REQUIRE(run.records.size() == 64);
        for (int t = 1; t <= 64; ++t) {
            const SweepRecord& r = run.records[static_cast<std::size_t>(t - 1)];
            CHECK(r.row.time_step == t);
            CHECK(r.compliant);
            CHECK(*r.value_text == format_answer(r.row.ground_truth));
            CHECK(r.plan_key == plan.key());
            CHECK(r.run_id == "r1");
            CHECK(r.responder_id == "oracle");
        }
    }
}

TEST_CASE("synthetic with no noise reproduces the oracle byte for byte") {
    const SweepPlan plan = first_plan(FamilyId::exponential_interest, 2.0, 2);
    OracleResponder oracle;
    SyntheticResponder same(SyntheticParams{});
    auto a = run_sweep(oracle, plan, catalog(), {}, "r");
    auto b = run_sweep(same, plan, catalog(), {}, "r");
    for (std::size_t i = 0; i < 64; ++i) CHECK(a.records[i].raw_response == b.records[i].raw_response);
}

TEST_CASE("synthetic delay reads the drive history before t = 1") {
    const SweepPlan plan = first_plan(FamilyId::similar_triangles, 4.0);
    SyntheticResponder delayed(parse_synthetic_params("delay=3"));
    auto run = run_sweep(delayed, plan, catalog(), {}, "r");
    for (int t = 1; t <= 64; ++t) {
        const double want = truth_at_step(plan, catalog(), t - 3);
        CHECK(*run.records[static_cast<std::size_t>(t - 1)].value_text == format_answer(want));
    }
}

TEST_CASE("synthetic noise is seeded and saturation clamps") {
    const SweepPlan plan = first_plan(FamilyId::ratio_saturation, 4.0);
    auto text = [&](const char* spec) {
        SyntheticResponder r(parse_synthetic_params(spec));
        std::string all;
        for (const auto& rec : run_sweep(r, plan, catalog(), {}, "r").records) all += *rec.value_text + ";";
        return all;
    };
    CHECK(text("noise=0.01,seed=4") == text("noise=0.01,seed=4"));
    CHECK(text("noise=0.01,seed=4") != text("noise=0.01,seed=5"));
    SyntheticResponder sat(parse_synthetic_params("sat=0.5"));
    for (const auto& rec : run_sweep(sat, plan, catalog(), {}, "r").records) CHECK(*rec.parsed_value <= 0.5);
}

TEST_CASE("remote: fixed decoding unless explicitly unlocked") {
    RemoteParams p = remote_params("http://127.0.0.1:9/v1/chat/completions");
    p.temperature = 0.7;
    CHECK_THROWS_AS(RemoteResponder{p}, ConfigError);
    p.temperature = 0.0;
    p.max_tokens = 256;
    CHECK_THROWS_AS(RemoteResponder{p}, ConfigError);
    p.unsafe_decoding = true;
    CHECK_NOTHROW(RemoteResponder{p});
    p = remote_params("ftp://example.org");
    CHECK_THROWS_AS(RemoteResponder{p}, ConfigError);
    p = remote_params("http://127.0.0.1:9");
    p.model.clear();
    CHECK_THROWS_AS(RemoteResponder{p}, ConfigError);
}

TEST_CASE("remote: request body and auth header") {
    StubServer stub;
    ::setenv("MATHBODE_TEST_KEY", "sk-test", 1);
    RemoteResponder remote(remote_params(stub.url()));
    stub.answers["What is 1+1?"] = "[answer_start] 2 [answer_end]";
    const SweepPlan plan = first_plan(FamilyId::linear_solve);
    ProblemInstance inst{FamilyId::linear_solve, 0, 2.0, {{"b", 1}, {"c", 5}}};
    auto reply = remote.respond({plan, inst, 1, 2.0, [](int) { return 2.0; }}, "What is 1+1?");
    CHECK(reply.raw_text == "[answer_start] 2 [answer_end]");
    CHECK_FALSE(reply.transport_error.has_value());
    CHECK(reply.attempt_count == 1);
    CHECK(reply.http_status == 200);
    CHECK(stub.last_auth == "Bearer sk-test");

    const auto body = nlohmann::json::parse(stub.last_body);
    CHECK(body["model"] == "stub-model");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["max_tokens"] == 1028);
    REQUIRE(body["messages"].size() == 1);
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "What is 1+1?");
    CHECK(reply.request_body.find("sk-test") == std::string::npos);
    ::unsetenv("MATHBODE_TEST_KEY");
}

TEST_CASE("remote: 500 on three rows gives 61 compliant and 3 transport failures") {
    StubServer stub;
    const SweepPlan plan = first_plan(FamilyId::linear_solve, 1.0, 0, 120.0);
    const auto rows = build_sweep_rows(plan, catalog());
    for (const auto& ri : rows) stub.answers[ri.row.prompt] = wrap_answer(format_answer(ri.row.ground_truth));
    // the drive is periodic, so fail only prompts that occur once in the sweep
    std::map<std::string, int> seen;
    for (const auto& ri : rows) ++seen[ri.row.prompt];
    std::vector<int> failing;
    for (const auto& ri : rows)
        if (seen[ri.row.prompt] == 1 && failing.size() < 3) failing.push_back(ri.row.time_step);
    REQUIRE(failing.size() == 3);
    for (int t : failing) stub.always_fail.insert(rows[static_cast<std::size_t>(t - 1)].row.prompt);

    ManualClock clock;
    RemoteResponder remote(remote_params(stub.url()), nullptr, &clock);
    const auto start = clock.now();
    const SweepRun run = run_sweep(remote, plan, catalog(), {}, "fault");
    REQUIRE(run.records.size() == 64);
    int ok = 0, transport = 0;
    for (const auto& r : run.records) {
        if (r.compliant) ++ok;
        if (r.failure_reason == FailureReason::transport) {
            ++transport;
            CHECK(r.attempts == 4);
        }
    }
    CHECK(ok == 61);
    CHECK(transport == 3);
    CHECK(stub.requests == 61 + 3 * 4);
    // backoff 0.5 + 1 + 2 s per failed row, slept on the simulated clock
    CHECK(clock.now() - start == std::chrono::milliseconds(3 * 3500));
    const auto& failed = run.requests[static_cast<std::size_t>(failing[0] - 1)];
    CHECK(failed.http_status == 500);
    CHECK(failed.response_body == "boom");
}

TEST_CASE("remote: 429 is retried, 400 is not") {
    StubServer stub;
    stub.answers["q"] = "[answer_start] 1.5 [answer_end]";
    ManualClock clock;
    RemoteResponder remote(remote_params(stub.url()), nullptr, &clock);
    const SweepPlan plan = first_plan(FamilyId::linear_solve);
    ProblemInstance inst{FamilyId::linear_solve, 0, 2.0, {{"b", 1}, {"c", 5}}};
    RowContext row{plan, inst, 1, 2.0, [](int) { return 2.0; }};

    stub.throttle = 2;
    auto reply = remote.respond(row, "q");
    CHECK(reply.attempt_count == 3);
    CHECK_FALSE(reply.transport_error.has_value());
    CHECK(reply.raw_text == "[answer_start] 1.5 [answer_end]");

    stub.bad_request = true;
    reply = remote.respond(row, "q");
    CHECK(reply.attempt_count == 1);
    CHECK(reply.transport_error.has_value());
}

TEST_CASE("remote: unreachable endpoint degrades to a transport failure") {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }  // closed again: nothing listens there now
    RemoteParams p = remote_params("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
    p.timeout_s = 1;
    p.max_retries = 1;
    ManualClock clock;
    RemoteResponder remote(p, nullptr, &clock);
    const SweepPlan plan = first_plan(FamilyId::linear_solve);
    ProblemInstance inst{FamilyId::linear_solve, 0, 2.0, {{"b", 1}, {"c", 5}}};
    auto reply = remote.respond({plan, inst, 1, 2.0, [](int) { return 2.0; }}, "q");
    CHECK(reply.transport_error.has_value());
    CHECK(reply.attempt_count == 2);
}

TEST_CASE("run_sweep over stored dataset rows") {
    const SweepPlan plan = first_plan(FamilyId::linear_system, 4.0);
    std::vector<DatasetRow> rows;
    for (const auto& ri : build_sweep_rows(plan, catalog())) rows.push_back(ri.row);
    OracleResponder oracle;
    auto a = run_sweep(oracle, plan, rows, catalog(), {}, "x");
    auto b = run_sweep(oracle, plan, catalog(), {}, "x");
    CHECK(a.records == b.records);
    rows.erase(rows.begin());
    CHECK_THROWS_AS(run_sweep(oracle, plan, rows, catalog(), {}, "x"), ConfigError);
}
