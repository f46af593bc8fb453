#include <csignal>
#include <fstream>
#include <iostream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "iasr/batch.hpp"
#include "iasr/config.hpp"
#include "iasr/metrics.hpp"
#include "iasr/service.hpp"

namespace {

iasr::service::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw iasr::InvalidArgument("cannot write " + out);
    f << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interactive ASR toolkit: scoring, semantic judging, closed-loop simulation and a session service"};
    app.require_subcommand(1);
    std::string config_flag;
    app.add_option("--config", config_flag, "configuration file (default: $IASR_CONFIG)");
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");

    // serve
    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    std::string host;
    int port = -1;
    std::string data_dir;
    serve->add_option("--host", host, "bind address (overrides config)");
    serve->add_option("--port", port, "port, 0 for any (overrides config)");
    serve->add_option("--data-dir", data_dir, "event log, spool and job output directory");

    // metrics
    auto* metrics = app.add_subcommand("metrics", "token error rates of hypotheses against a manifest");
    std::string manifest;
    std::string hyp;
    std::string metric = "wer";
    std::string out;
    metrics->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
    metrics->add_option("--hyp", hyp, "hypotheses JSONL")->required()->check(CLI::ExistingFile);
    metrics->add_option("--metric", metric, "wer, cer, mer or ner")->check(CLI::IsMember({"wer", "cer", "mer", "ner"}));
    metrics->add_option("--out", out, "write the JSON summary here instead of stdout");

    // judge
    auto* judge = app.add_subcommand("judge", "sentence-level semantic error rate with the LLM judge");
    int k = 0;
    std::string audit;
    judge->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
    judge->add_option("--hyp", hyp, "hypotheses JSONL")->required()->check(CLI::ExistingFile);
    judge->add_option("--k", k, "voting rounds (1, 3, 5 or 7)")->check(CLI::IsMember({1, 3, 5, 7}));
    judge->add_option("--audit", audit, "per-sample audit JSONL");
    judge->add_option("--out", out, "write the JSON summary here instead of stdout");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "closed-loop simulation with a simulated user");
    std::string out_dir;
    int rounds = 0;
    int judge_k = 0;
    std::int64_t seed = 0;
    bool seed_set = false;
    simulate->add_option("--manifest", manifest, "manifest JSONL")->required()->check(CLI::ExistingFile);
    simulate->add_option("--out", out_dir, "output directory for traces and reports")->required();
    simulate->add_option("--rounds", rounds, "feedback rounds T");
    simulate->add_option("--judge-k", judge_k, "judge voting rounds");
    auto* seed_opt = simulate->add_option("--seed", seed, "seed");

    // correlate
    auto* correlate = app.add_subcommand("correlate", "Pearson correlation between two score lists");
    std::string scores_a;
    std::string scores_b;
    correlate->add_option("--scores-a", scores_a, "JSON array or one number per line")->required()->check(CLI::ExistingFile);
    correlate->add_option("--scores-b", scores_b, "JSON array or one number per line")->required()->check(CLI::ExistingFile);

    // prompts
    auto* prompts_cmd = app.add_subcommand("prompts", "write the built-in prompt templates to a directory");
    std::string prompts_dir;
    prompts_cmd->add_option("dir", prompts_dir, "target directory")->required();

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
    seed_set = seed_opt->count() > 0;

    try {
        const std::optional<std::string> flag = config_flag.empty() ? std::nullopt : std::optional(config_flag);

        if (*serve) {
            auto cfg = iasr::load_config_or_default(flag);
            if (!host.empty()) cfg.service.host = host;
            if (port >= 0) cfg.service.port = port;
            if (!data_dir.empty()) cfg.service.data_dir = data_dir;
            auto runtime = std::make_shared<const iasr::Runtime>(cfg);
            iasr::service::Server server(runtime, cfg.service);
            const int bound = server.bind(cfg.service.host, cfg.service.port);
            spdlog::info("listening on http://{}:{}", cfg.service.host, bound);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.run();
            g_server = nullptr;
            return 0;
        }

        if (*metrics) {
            const auto m = iasr::dataset::load_manifest(manifest);
            const auto h = iasr::dataset::load_hypotheses(hyp);
            emit(iasr::batch::score_metrics(m, h, metric), out);
            return 0;
        }

        if (*judge) {
            iasr::Runtime runtime(iasr::load_config_or_default(flag));
            const auto j = runtime.make_judge(k > 0 ? std::optional(k) : std::nullopt);
            const auto m = iasr::dataset::load_manifest(manifest);
            const auto h = iasr::dataset::load_hypotheses(hyp);
            emit(iasr::batch::score_s2er(*j, m, h, audit.empty() ? std::nullopt : std::optional<std::filesystem::path>(audit)),
                 out);
            return 0;
        }

        if (*simulate) {
            iasr::Runtime runtime(iasr::load_config_or_default(flag));
            auto cfg = runtime.config().simulation;
            if (rounds > 0) cfg.max_rounds = rounds;
            if (judge_k > 0) cfg.judge_k = judge_k;
            if (seed_set) cfg.seed = seed;
            cfg.validate();
            const auto m = iasr::dataset::load_manifest(manifest);
            auto system = runtime.make_system();
            const auto report =
                iasr::batch::simulate(m, *system, cfg, runtime.simulation_backends(cfg.judge_k), out_dir);
            std::cout << report.dump(2) << '\n';
            return 0;
        }

        if (*correlate) {
            const auto a = iasr::batch::read_scores(scores_a);
            const auto b = iasr::batch::read_scores(scores_b);
            const double r = iasr::metrics::pearson({a}, {b});
            std::cout << nlohmann::json{{"n", a.size()}, {"pearson", r}}.dump(2) << '\n';
            return 0;
        }

        if (*prompts_cmd) {
            iasr::prompts::PromptTemplates::defaults().save_dir(prompts_dir);
            return 0;
        }
    } catch (const iasr::dataset::DatasetError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
