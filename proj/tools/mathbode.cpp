// mathbode: generate datasets, run responders over sweep presets, score runs.

#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mathbode/commands.hpp"
#include "mathbode/errors.hpp"

using namespace mathbode;

namespace {

void add_plan_flags(CLI::App& cmd, PlanOptions& o, std::string& tag_style) {
    cmd.add_option("--preset", o.preset, "SMOKE, MVP, MVP_PLUS or FULL")->capture_default_str();
    cmd.add_option("--grid", o.grid, "custom frequency/phase grid file (overrides --preset)")->check(CLI::ExistingFile);
    cmd.add_option("--families", o.families, "family names (default: all)")->delimiter(',');
    cmd.add_option("--variants", o.variants, "question variants 0..2 (default: all)")->delimiter(',');
    cmd.add_option("--scales", o.scales, "amplitude scales")->delimiter(',')->capture_default_str();
    cmd.add_option("--family-config", o.family_config, "family constants file (default: built-in)")
        ->check(CLI::ExistingFile);
    cmd.add_option("--tag-style", tag_style, "answer format: tags or final")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frequency-response evaluation of models on parametric math problems"};
    app.require_subcommand(1);

    GenerateOptions gen;
    std::string gen_tags = "tags";
    auto* generate = app.add_subcommand("generate", "expand a preset and write dataset.csv");
    add_plan_flags(*generate, gen.plans, gen_tags);
    generate->add_option("--out", gen.out, "output directory")->capture_default_str();

    RunOptions run;
    std::string run_tags = "tags";
    auto* runcmd = app.add_subcommand("run", "answer every sweep with a responder; writes results.jsonl");
    add_plan_flags(*runcmd, run.plans, run_tags);
    runcmd->add_option("--out", run.out, "output directory")->capture_default_str();
    runcmd->add_option("--responder", run.responder, "oracle | synthetic[:gain=,delay=,sat=,noise=,seed=] | remote[:model]")
        ->capture_default_str();
    runcmd->add_option("--dataset", run.dataset, "run over an existing dataset.csv")->check(CLI::ExistingFile);
    runcmd->add_option("--seed", run.seed, "synthetic noise seed")->capture_default_str();
    runcmd->add_option("--jobs", run.jobs, "concurrent sweeps")->capture_default_str();
    runcmd->add_flag("--resume", run.resume, "skip sweeps already completed in --out");
    runcmd->add_option("--min-compliance", run.min_compliance, "exit 3 below this per-family compliance")
        ->capture_default_str();
    runcmd->add_option("--endpoint", run.remote.endpoint, "chat-completions URL");
    runcmd->add_option("--model", run.remote.model, "remote model name");
    runcmd->add_option("--api-key-env", run.remote.api_key_env, "environment variable holding the API key")
        ->capture_default_str();
    runcmd->add_option("--rpm", run.remote.rpm_limit, "requests per minute")->capture_default_str();
    runcmd->add_option("--tpm", run.remote.tpm_limit, "estimated tokens per minute")->capture_default_str();
    runcmd->add_option("--timeout", run.remote.timeout_s, "request timeout, seconds")->capture_default_str();
    runcmd->add_option("--max-retries", run.remote.max_retries, "retries on transport errors, 429 and 5xx")
        ->capture_default_str();
    runcmd->add_option("--temperature", run.remote.temperature, "decoding temperature (needs --unsafe-decoding)")
        ->capture_default_str();
    runcmd->add_option("--max-tokens", run.remote.max_tokens, "completion budget (needs --unsafe-decoding)")
        ->capture_default_str();
    runcmd->add_flag("--unsafe-decoding", run.remote.unsafe_decoding, "allow non-default decoding settings");
    runcmd->add_option("--stop-after", run.stop_after, "stop after N sweeps")->group("");

    ScoreOptions score;
    auto* scorecmd = app.add_subcommand("score", "fit and score results; writes <out>/report/");
    scorecmd->add_option("--results", score.results, "results files (default: <out>/results.jsonl)");
    scorecmd->add_option("--out", score.out, "output directory")->capture_default_str();
    scorecmd->add_flag("--lenient", score.lenient, "skip malformed result lines");
    scorecmd->add_option("--run-id", score.run_id, "only records of this run");
    scorecmd->add_option("--family-config", score.family_config, "family constants file (default: built-in)")
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*generate) {
            gen.plans.tag_style = tag_style_from_string(gen_tags);
            return cmd_generate(gen, std::cout, std::cerr);
        }
        if (*runcmd) {
            run.plans.tag_style = tag_style_from_string(run_tags);
            return cmd_run(run, std::cout, std::cerr);
        }
        return cmd_score(score, std::cout, std::cerr);
    } catch (const NoValidSweeps& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNoScore;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
