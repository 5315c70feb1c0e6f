// Acceptance criteria 1-10: one PASS/FAIL line each; nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "mathbode/commands.hpp"
#include "mathbode/datastore.hpp"
#include "mathbode/drive.hpp"
#include "mathbode/harmonics.hpp"
#include "mathbode/parser.hpp"
#include "mathbode/rate_limiter.hpp"
#include "mathbode/scoring.hpp"

using namespace mathbode;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

fs::path workdir() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "mathbode_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string strip_latency(const std::string& s) {
    static const std::regex latency(R"("latency_ms":\d+)");
    return std::regex_replace(s, latency, "");
}

int run_cmd(const RunOptions& o) {
    std::ostringstream out, err;
    return cmd_run(o, out, err);
}

RunOptions run_options(const std::string& preset, const fs::path& out, const std::string& responder) {
    RunOptions o;
    o.plans.preset = preset;
    o.out = out;
    o.responder = responder;
    return o;
}

/// Per-sweep metrics recomputed from a results file: compliant values against
/// the six-decimal truth, exactly as scoring sees them.
std::vector<SweepResult> sweeps_of(const fs::path& results) {
    const LoadedResults loaded = load_results(results);
    std::vector<SweepResult> out;
    for (const RecordSweep& s : group_records(loaded.records, FamilyCatalog::builtin())) {
        std::vector<Sample> model, truth;
        for (const SweepRecord& r : s.records) {
            truth.push_back({r.row.time_step, quantize_answer(r.row.ground_truth)});
            if (r.compliant && r.parsed_value) model.push_back({r.row.time_step, *r.parsed_value});
        }
        SweepResult sr;
        sr.family = s.plan.family;
        sr.variant = s.plan.variant;
        sr.frequency = s.plan.frequency;
        sr.phase_deg = s.plan.phase_deg;
        sr.amplitude_scale = s.plan.amplitude_scale;
        sr.metrics = sweep_metrics(model, truth, s.plan.frequency, s.plan.steps);
        out.push_back(std::move(sr));
    }
    return out;
}

/// Rows of scorecard.csv for one responder: family -> (mb_core, mb_plus).
std::map<std::string, std::pair<double, double>> scorecard(const fs::path& report, const std::string& responder) {
    std::map<std::string, std::pair<double, double>> rows;
    std::istringstream in(slurp(report / "scorecard.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() >= 4 && f[0] == responder) rows[f[1]] = {std::stod(f[2]), std::stod(f[3])};
    }
    return rows;
}

// 1 ---------------------------------------------------------------------------
Outcome oracle_calibration() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    for (const char* preset : {"FULL", "SMOKE", "MVP", "MVP_PLUS"}) {
        const fs::path dir = workdir() / (std::string("oracle_") + preset);
        std::ostringstream out, err;
        GenerateOptions g;
        g.plans.preset = preset;
        g.out = dir;
        o.require(cmd_generate(g, out, err) == kExitOk, std::string(preset) + ": generate failed");
        RunOptions r = run_options(preset, dir, "oracle");
        r.dataset = dir / "dataset.csv";
        r.jobs = 2;
        o.require(run_cmd(r) == kExitOk, std::string(preset) + ": run did not exit 0");
        ScoreOptions s;
        s.out = dir;
        o.require(cmd_score(s, out, err) == kExitOk, std::string(preset) + ": score did not exit 0");

        const auto sweeps = sweeps_of(dir / "results.jsonl");
        std::size_t valid = 0;
        for (const SweepResult& sr : sweeps) {
            const SweepMetrics& m = sr.metrics;
            o.require(m.n_compliant == m.n_total, std::string(preset) + ": compliance below 100%");
            if (!m.valid) continue;
            ++valid;
            o.require(std::abs(*m.gain - 1) <= 1e-6, std::string(preset) + ": |G-1| > 1e-6");
            o.require(std::abs(*m.phase_err) <= 1e-6, std::string(preset) + ": |phase_err| > 1e-6");
        }
        o.require(valid == sweeps.size() && !sweeps.empty(), std::string(preset) + ": invalid oracle sweeps");
        const auto card = scorecard(dir / "report", "oracle");
        o.require(card.size() == kAllFamilies.size() + 1, std::string(preset) + ": scorecard rows missing");
        for (const auto& [family, v] : card)
            o.require(std::abs(v.first - 1) < 5e-7 && std::abs(v.second - 1) < 5e-7,
                      std::string(preset) + ": " + family + " score is not 1.000");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(secs <= 60.0, "runtime above 60 s");
    if (o.pass) o.detail = "FULL + every preset, " + std::to_string(secs).substr(0, 5) + " s";
    return o;
}

// 2 ---------------------------------------------------------------------------
Outcome known_gain() {
    Outcome o;
    for (double k : {0.5, 0.9}) {
        const std::string spec = k == 0.5 ? "synthetic:gain=0.5" : "synthetic:gain=0.9";
        RunOptions r = run_options("FULL", workdir() / ("gain_" + std::to_string(k)), spec);
        r.plans.families = {"similar_triangles"};
        o.require(run_cmd(r) == kExitOk, spec + ": run failed");
        const auto sweeps = sweeps_of(r.out / "results.jsonl");
        for (const SweepResult& s : sweeps)
            o.require(s.metrics.valid && std::abs(*s.metrics.gain - k) <= 1e-3, spec + ": G off by more than 1e-3");
        const std::vector<ResponderSweeps> rs{{spec, sweeps}};
        const SummaryTables t = summary_tables(rs);
        const auto& entry = t.midband_gain_dev.at(FamilyId::similar_triangles)[0];
        o.require(entry && std::abs(*entry - (1 - k)) <= 1e-3, spec + ": mid-band |G-1| is not 1-k");
    }
    if (o.pass) o.detail = "k = 0.5, 0.9 at f = 1..16";
    return o;
}

// 3 ---------------------------------------------------------------------------
Outcome known_lag() {
    Outcome o;
    for (int d : {1, 2, 4}) {
        const std::string spec = "synthetic:delay=" + std::to_string(d);
        RunOptions r = run_options("FULL", workdir() / ("lag_" + std::to_string(d)), spec);
        r.plans.families = {"similar_triangles"};
        o.require(run_cmd(r) == kExitOk, spec + ": run failed");
        for (const SweepResult& s : sweeps_of(r.out / "results.jsonl")) {
            const double raw = -2 * kPi * s.frequency * d / 64;
            if (s.frequency <= 8) {
                o.require(s.metrics.valid && std::abs(wrap_phase(*s.metrics.phase_err - raw)) <= 5e-3,
                          spec + ": phase off at f=" + std::to_string(s.frequency));
                // no wrap needed below π: the raw value itself must match
                if (std::abs(raw) < kPi - 1e-2)
                    o.require(std::abs(*s.metrics.phase_err - raw) <= 5e-3, spec + ": phase not -2 pi f d / 64");
            }
            if (s.frequency == 16 && d == 4) {
                // -2π wraps to 0
                o.require(s.metrics.valid && std::abs(*s.metrics.phase_err) <= 5e-3, "f=16, d=4 not wrapped to 0");
                o.require(*s.metrics.phase_err > -kPi && *s.metrics.phase_err <= kPi, "phase outside (-pi, pi]");
            }
        }
    }
    if (o.pass) o.detail = "d = 1, 2, 4 at f = 1, 2, 4, 8; f=16 d=4 wraps";
    return o;
}

// 4 ---------------------------------------------------------------------------
Outcome harmonic_fit_oracle() {
    Outcome o;
    std::mt19937_64 rng(20240501);
    std::uniform_real_distribution<double> coef(-5, 5);
    std::uniform_int_distribution<int> freq(1, 15);
    const int T = 64;
    double worst = 0, worst_r2 = 0;
    for (int n = 0; n < 100; ++n) {
        const double a = coef(rng), b = coef(rng), c = coef(rng);
        const int f = freq(rng);
        std::vector<Sample> s;
        for (int t = 1; t <= T; ++t) {
            const double th = 2 * kPi * f * t / T;
            s.push_back({t, a * std::sin(th) + b * std::cos(th) + c});
        }
        // DFT bin f: the projections are orthogonal on whole cycles
        double sa = 0, sb = 0, sc = 0;
        for (const Sample& x : s) {
            const double th = 2 * kPi * f * x.t / T;
            sa += x.y * std::sin(th);
            sb += x.y * std::cos(th);
            sc += x.y;
        }
        sa *= 2.0 / T;
        sb *= 2.0 / T;
        sc /= T;
        const HarmonicFit fit = fit_first_harmonic(s, f, T);
        worst = std::max({worst, std::abs(fit.a - sa), std::abs(fit.b - sb), std::abs(fit.c - sc)});
        worst_r2 = std::max(worst_r2, std::abs(fit.r2 - 1));
    }
    o.require(worst <= 1e-6, "coefficients differ from the DFT oracle by " + std::to_string(worst));
    o.require(worst_r2 <= 1e-9, "R2 differs from 1");
    if (o.pass) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "100 series, max coef diff %.1e, max |R2-1| %.1e", worst, worst_r2);
        o.detail = buf;
    }
    return o;
}

// 5 ---------------------------------------------------------------------------
Outcome nonlinearity_proxy() {
    Outcome o;
    const int T = 64;
    for (double f : {1.0, 2.0, 4.0, 8.0}) {
        std::vector<Sample> truth, model;
        for (int t = 1; t <= T; ++t) {
            const double th = 2 * kPi * f * t / T;
            truth.push_back({t, 3.0 + std::sin(th)});
            model.push_back({t, 3.0 + std::sin(th) + 0.3 * std::sin(2 * th)});
        }
        const double ratio = fit_two_tone(model, f, T).ratio();
        o.require(std::abs(ratio - 0.3) <= 1e-3, "H2/H1 off at f=" + std::to_string(f));
        const SweepMetrics m = sweep_metrics(model, truth, f, T);
        o.require(std::abs(m.h2h1_model - 0.3) <= 1e-3 && std::abs(m.h2h1_excess - 0.3) <= 1e-3,
                  "sweep h2h1 excess off at f=" + std::to_string(f));
    }
    // the oracle has no excess distortion in any family
    const fs::path dir = workdir() / "oracle_FULL";
    std::map<FamilyId, std::vector<SweepResult>> by_family;
    for (SweepResult& s : sweeps_of(dir / "results.jsonl")) {
        o.require(s.metrics.h2h1_excess == 0.0, "oracle sweep with h2h1_excess != 0");
        by_family[s.family].push_back(std::move(s));
    }
    o.require(by_family.size() == kAllFamilies.size(), "oracle FULL results missing families");
    for (const auto& [family, sweeps] : by_family)
        o.require(aggregate_family(sweeps, family).h2h1_excess_med == 0.0, "family h2h1 excess median != 0");
    if (o.pass) o.detail = "H2/H1 = 0.3 at f = 1, 2, 4, 8; oracle excess 0 in all 5 families";
    return o;
}

// 6 ---------------------------------------------------------------------------
Outcome parser_exactness() {
    Outcome o;
    struct Case {
        const char* raw;
        const char* text;  // null: non-compliant
        FailureReason reason;
    };
    const Case cases[] = {
        {"[answer_start] 3.14 [answer_end]", "3.140000", {}},
        {"x [answer_start] 1.0 [answer_end] y [answer_start] 2.5 [answer_end]", "2.500000", {}},
        {"[answer_start] the result 12 is close to 12.5 [answer_end]", "12.500000", {}},
        {"[answer_start] 3.1415926535 [answer_end]", "3.141592", {}},
        {"[answer_start] -2.9999999 [answer_end]", "-2.999999", {}},
        {"[answer_start] 7 [answer_end]", "7.000000", {}},
        {"[answer_start] 1e5 [answer_end]", nullptr, FailureReason::no_literal},
        {"[answer_start] 2.5E-3 [answer_end]", nullptr, FailureReason::no_literal},
        {"[answer_start] NaN [answer_end]", nullptr, FailureReason::non_finite},
        {"[answer_start] inf [answer_end]", nullptr, FailureReason::non_finite},
        {"[answer_start] -Infinity [answer_end]", nullptr, FailureReason::non_finite},
        {"answer is 5", nullptr, FailureReason::no_tag_pair},
        {"[answer_start] 5", nullptr, FailureReason::no_tag_pair},
        {"5 [answer_end]", nullptr, FailureReason::no_tag_pair},
        {"[answer_start] forty two [answer_end]", nullptr, FailureReason::no_literal},
    };
    int n = 0;
    for (const Case& c : cases) {
        const ParsedAnswer a = parse_response(c.raw);
        if (c.text) {
            o.require(a.compliant && a.value_text && *a.value_text == c.text, std::string("mismatch on ") + c.raw);
        } else {
            o.require(!a.compliant && a.failure_reason == c.reason, std::string("wrong failure on ") + c.raw);
        }
        ++n;
    }
    // fuzz: never throws, always classifies, compliant text is exactly six decimals
    std::mt19937_64 rng(77);
    const std::string alphabet = "0123456789.-+eE, abcxyzNaInf[]_\n\t";
    const std::vector<std::string> pieces{"[answer_start]", "[answer_end]", "FINAL:", "nan", "inf", "1e308", "-0.0"};
    const std::regex six(R"(-?\d+\.\d{6})");
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        const int len = static_cast<int>(rng() % 60);
        for (int k = 0; k < len; ++k) {
            if (rng() % 6 == 0) s += pieces[rng() % pieces.size()];
            else s.push_back(alphabet[rng() % alphabet.size()]);
        }
        try {
            const ParsedAnswer a = parse_response(s);
            const bool classified = a.compliant ? (a.value && a.value_text && !a.failure_reason &&
                                                   std::regex_match(*a.value_text, six) && std::isfinite(*a.value))
                                                : (!a.value && !a.value_text && a.failure_reason.has_value());
            o.require(classified, "fuzz input not classified");
        } catch (...) {
            o.require(false, "fuzz input threw");
        }
    }
    if (o.pass) o.detail = std::to_string(n) + " examples byte-exact, 10000 fuzz inputs classified";
    return o;
}

// 7 ---------------------------------------------------------------------------
Outcome preset_cardinalities() {
    Outcome o;
    const FamilyCatalog& cat = FamilyCatalog::builtin();
    const std::map<std::string, std::size_t> want{{"SMOKE", 6}, {"MVP", 9}, {"MVP_PLUS", 27}, {"FULL", 45}};
    for (const auto& [name, n] : want) {
        for (FamilyId fam : kAllFamilies)
            for (double scale : {0.5, 1.0, 2.0}) {
                const auto plans = expand_preset(preset_by_name(name), cat, {fam}, {0, 1, 2}, {scale});
                o.require(plans.size() == n, name + ": wrong plans per family");
            }
        const auto all = expand_preset(preset_by_name(name), cat, {kAllFamilies.begin(), kAllFamilies.end()},
                                       {0, 1, 2}, {1.0, 2.0});
        std::ostringstream csv;
        const std::size_t rows = export_dataset(all, cat, csv);
        o.require(rows == all.size() * 64, name + ": rows != plans x 64");
        std::istringstream back(csv.str());
        o.require(import_dataset(back).size() == rows,
                  name + ": exported file does not hold plans x 64 rows");
    }
    if (o.pass) o.detail = "SMOKE 6, MVP 9, MVP_PLUS 27, FULL 45; rows = plans x 64";
    return o;
}

// 8 ---------------------------------------------------------------------------
Outcome scoring_bounds() {
    Outcome o;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dev(0, 2), r2(0.05, 1), pen(0, 0.9), step(1e-3, 0.5);
    auto agg = [&] {
        FamilyAggregate a;
        a.g_dev = dev(rng);
        a.p_dev = dev(rng);
        a.r2_med = r2(rng);
        a.rms_med = pen(rng);
        a.acf1_medabs = pen(rng);
        a.h2h1_excess_med = pen(rng);
        return a;
    };
    for (int i = 0; i < 1000; ++i) {
        const FamilyAggregate a = agg();
        const double core = mb_core(a), plus = mb_plus(a, core);
        o.require(core >= 0 && core <= 1 && plus >= 0 && plus <= 1, "score outside [0, 1]");
        o.require(plus <= core, "mb_plus > mb_core");
        const double d = step(rng);
        std::vector<std::function<void(FamilyAggregate&)>> worse{
            [&](FamilyAggregate& b) { b.g_dev += d; },
            [&](FamilyAggregate& b) { b.p_dev += d; },
            [&](FamilyAggregate& b) { b.r2_med *= 1 - std::min(d, 0.9); },
            [&](FamilyAggregate& b) { b.rms_med += d; },
            [&](FamilyAggregate& b) { b.acf1_medabs = std::min(0.999, b.acf1_medabs + d); },
            [&](FamilyAggregate& b) { b.h2h1_excess_med += d; },
        };
        for (std::size_t k = 0; k < worse.size(); ++k) {
            FamilyAggregate b = a;
            worse[k](b);
            const double c2 = mb_core(b), p2 = mb_plus(b, c2);
            if (k < 2) o.require(c2 < core && p2 < plus, "not strictly decreasing in a deviation");
            else o.require(c2 == core && p2 < plus, "not strictly decreasing in a penalty");
        }
    }
    if (o.pass) o.detail = "1000 random aggregates";
    return o;
}

// 9 ---------------------------------------------------------------------------
Outcome rate_limiter_windows() {
    Outcome o;
    const RateLimits lim;
    o.require(lim.requests_per_window == 600 && lim.tokens_per_window == 20000 && lim.window == std::chrono::minutes(1),
              "defaults are not 600 rpm / 20,000 tpm");
    std::size_t total = 0;
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        ManualClock clock;
        SlidingWindowLimiter limiter(lim, clock);
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::int64_t> tok(1, 1500);
        std::uniform_int_distribution<int> gap(0, 200);
        std::vector<std::pair<Clock::time_point, std::int64_t>> log;
        for (int i = 0; i < 4000; ++i) {
            clock.advance(std::chrono::milliseconds(gap(rng)));
            const std::int64_t t = seed % 2 ? tok(rng) : 1;  // even seeds bind on requests
            limiter.acquire(t);
            log.emplace_back(clock.now(), t);
        }
        // every window (x - 60 s, x] ending at an admission
        std::size_t lo = 0;
        std::int64_t tokens = 0;
        for (std::size_t hi = 0; hi < log.size(); ++hi) {
            tokens += log[hi].second;
            while (log[lo].first <= log[hi].first - lim.window) tokens -= log[lo++].second;
            o.require(hi - lo + 1 <= 600, "more than 600 requests in a window");
            o.require(tokens <= 20000, "more than 20,000 tokens in a window");
        }
        total += log.size();
    }
    if (o.pass) o.detail = std::to_string(total) + " simulated requests, no window over budget";
    return o;
}

// 10 --------------------------------------------------------------------------
Outcome resume_identity() {
    Outcome o;
    for (const char* responder : {"oracle", "synthetic:gain=0.8,noise=0.05,seed=9"}) {
        const std::string tag = responder[0] == 'o' ? "oracle" : "noisy";
        const fs::path full = workdir() / ("resume_full_" + tag), part = workdir() / ("resume_part_" + tag);
        RunOptions a = run_options("MVP", full, responder);
        o.require(run_cmd(a) == kExitOk, tag + ": uninterrupted run failed");

        RunOptions b = run_options("MVP", part, responder);
        b.stop_after = 13;
        run_cmd(b);
        // kill mid-write: tear the last record
        std::string text = slurp(part / "results.jsonl");
        text.resize(text.size() - 40);
        std::ofstream(part / "results.jsonl", std::ios::binary | std::ios::trunc) << text;
        b.stop_after.reset();
        b.resume = true;
        b.jobs = 3;
        o.require(run_cmd(b) == kExitOk, tag + ": resumed run failed");
        o.require(strip_latency(slurp(full / "results.jsonl")) == strip_latency(slurp(part / "results.jsonl")),
                  tag + ": resumed results differ");
    }
    if (o.pass) o.detail = "oracle and seeded noisy synthetic, MVP, cut after 13 sweeps";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
        {"oracle calibration", oracle_calibration},
        {"known-gain recovery", known_gain},
        {"known-lag recovery", known_lag},
        {"harmonic fit vs DFT oracle", harmonic_fit_oracle},
        {"nonlinearity proxy", nonlinearity_proxy},
        {"parser exactness and fuzz", parser_exactness},
        {"preset cardinalities", preset_cardinalities},
        {"scoring bounds and monotonicity", scoring_bounds},
        {"rate-limiter windows", rate_limiter_windows},
        {"deterministic resume", resume_identity},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %2zu %s: %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, r.detail.c_str());
        std::fflush(stdout);
        if (!r.pass) ++failed;
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    fs::remove_all(workdir());
    return failed == 0 ? 0 : 1;
}
