#include "iasr/config.hpp"

#include <cstdlib>
#include <fstream>

namespace iasr {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

gateway::BackendConfig backend(const nlohmann::json& j, gateway::Role role, const std::filesystem::path& base) {
    auto cfg = gateway::backend_config_from_json(j, role);
    for (const char* key : {"fixtures", "spool_dir"}) {
        if (cfg.options.contains(key) && cfg.options.at(key).is_string()) {
            cfg.options[key] = resolve(base, cfg.options.at(key).get<std::string>()).string();
        }
    }
    return cfg;
}

}  // namespace

AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw InvalidArgument("configuration must be a JSON object");
    AppConfig cfg;
    using gateway::Role;
    if (j.contains("llm")) cfg.llm = backend(j.at("llm"), Role::llm, base_dir);
    if (j.contains("asr")) cfg.asr = backend(j.at("asr"), Role::asr, base_dir);
    if (j.contains("tts")) cfg.tts = backend(j.at("tts"), Role::tts, base_dir);
    if (j.contains("judge_llm")) cfg.judge_llm = backend(j.at("judge_llm"), Role::llm, base_dir);
    if (j.contains("simulator_llm")) cfg.simulator_llm = backend(j.at("simulator_llm"), Role::llm, base_dir);
    if (j.contains("templates_dir")) cfg.templates_dir = resolve(base_dir, j.at("templates_dir").get<std::string>());
    cfg.history_window = j.value("history_window", cfg.history_window);

    if (j.contains("judge")) {
        const auto& jj = j.at("judge");
        cfg.judge.k = jj.value("k", cfg.judge.k);
        cfg.judge.seed = jj.value("seed", cfg.judge.seed);
        cfg.judge.parallelism = jj.value("parallelism", cfg.judge.parallelism);
        cfg.judge.concurrent_pair = jj.value("concurrent_pair", cfg.judge.concurrent_pair);
        if (!judge::valid_k(cfg.judge.k)) throw InvalidArgument("judge.k must be odd and within [1, 7]");
    }
    if (j.contains("simulation")) {
        const auto& js = j.at("simulation");
        cfg.simulation = simulation::simulation_config_from_json(js);
        cfg.simulator_mode = js.value("simulator", cfg.simulator_mode);
        cfg.system = js.value("system", cfg.system);
        cfg.system_url = js.value("system_url", cfg.system_url);
        if (js.contains("corruption")) {
            const auto& jc = js.at("corruption");
            CorruptionConfig c;
            c.table = jc.value("table", c.table);
            c.seed = jc.value("seed", c.seed);
            c.rate = jc.value("rate", c.rate);
            cfg.corruption = std::move(c);
        }
    }
    if (cfg.simulator_mode != "rules" && cfg.simulator_mode != "llm") {
        throw InvalidArgument("simulation.simulator must be 'rules' or 'llm'");
    }
    if (cfg.system != "agentic" && cfg.system != "asr-baseline" && cfg.system != "http") {
        throw InvalidArgument("simulation.system must be 'agentic', 'asr-baseline' or 'http'");
    }
    if (cfg.system == "http" && cfg.system_url.empty()) {
        throw InvalidArgument("simulation.system_url is required for the http system");
    }

    if (j.contains("service")) {
        const auto& jv = j.at("service");
        cfg.service.host = jv.value("host", cfg.service.host);
        cfg.service.port = jv.value("port", cfg.service.port);
        cfg.service.max_upload_bytes = jv.value("max_upload_bytes", cfg.service.max_upload_bytes);
        cfg.service.job_workers = jv.value("job_workers", cfg.service.job_workers);
        if (jv.contains("data_dir")) cfg.service.data_dir = resolve(base_dir, jv.at("data_dir").get<std::string>());
        if (cfg.service.job_workers < 1) throw InvalidArgument("service.job_workers must be at least 1");
    }
    return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config " + path.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InvalidArgument("config " + path.string() + " is not valid JSON");
    return config_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return std::filesystem::path(*flag);
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
    return std::nullopt;
}

AppConfig load_config_or_default(const std::optional<std::string>& flag) {
    const auto path = resolve_config_path(flag);
    return path ? load_config(*path) : AppConfig{};
}

nlohmann::json to_json(const AppConfig& cfg) {
    nlohmann::json j = {{"llm", gateway::to_json(cfg.llm)},
                        {"asr", gateway::to_json(cfg.asr)},
                        {"tts", gateway::to_json(cfg.tts)},
                        {"history_window", cfg.history_window},
                        {"judge", {{"k", cfg.judge.k}, {"seed", cfg.judge.seed}, {"parallelism", cfg.judge.parallelism}}}};
    if (cfg.judge_llm) j["judge_llm"] = gateway::to_json(*cfg.judge_llm);
    if (cfg.simulator_llm) j["simulator_llm"] = gateway::to_json(*cfg.simulator_llm);
    if (cfg.templates_dir) j["templates_dir"] = cfg.templates_dir->string();
    auto sim = simulation::to_json(cfg.simulation);
    sim["simulator"] = cfg.simulator_mode;
    sim["system"] = cfg.system;
    if (!cfg.system_url.empty()) sim["system_url"] = cfg.system_url;
    j["simulation"] = sim;
    j["service"] = {{"host", cfg.service.host},
                    {"port", cfg.service.port},
                    {"max_upload_bytes", cfg.service.max_upload_bytes},
                    {"job_workers", cfg.service.job_workers}};
    if (cfg.service.data_dir) j["service"]["data_dir"] = cfg.service.data_dir->string();
    return j;
}

Runtime::Runtime(AppConfig cfg, RuntimeOverrides overrides) : cfg_(std::move(cfg)) {
    templates_ = cfg_.templates_dir ? prompts::PromptTemplates::load_dir(*cfg_.templates_dir)
                                    : prompts::PromptTemplates::defaults();
    llm_ = overrides.llm ? overrides.llm : gateway::make_llm(cfg_.llm);
    judge_llm_ = overrides.judge_llm ? overrides.judge_llm : cfg_.judge_llm ? gateway::make_llm(*cfg_.judge_llm) : llm_;
    if (overrides.simulator_llm) {
        simulator_llm_ = overrides.simulator_llm;
    } else if (cfg_.simulator_mode == "llm") {
        simulator_llm_ = cfg_.simulator_llm ? gateway::make_llm(*cfg_.simulator_llm) : llm_;
    }
    asr_ = overrides.asr ? overrides.asr : gateway::make_asr(cfg_.asr);
    tts_ = overrides.tts ? overrides.tts : gateway::make_tts(cfg_.tts);
    pipeline::PipelineOptions popts;
    popts.history_window = cfg_.history_window;
    pipeline_ = std::make_shared<pipeline::AgentPipeline>(pipeline::Backends{asr_, llm_}, templates_, popts);
}

std::shared_ptr<judge::Judge> Runtime::make_judge(std::optional<int> k) const {
    auto opts = cfg_.judge;
    if (k) opts.k = *k;
    return std::make_shared<judge::Judge>(judge_llm_, templates_.judge, opts);
}

std::unique_ptr<simulation::SystemUnderTest> Runtime::make_system() const {
    if (cfg_.system == "asr-baseline") return std::make_unique<simulation::AsrBaselineSystem>(asr_);
    if (cfg_.system == "http") return std::make_unique<simulation::HttpSystem>(cfg_.system_url);
    return std::make_unique<simulation::AgenticSystem>(pipeline_);
}

simulation::SimulationBackends Runtime::simulation_backends(std::optional<int> judge_k) const {
    simulation::SimulationBackends b;
    b.judge = make_judge(judge_k.value_or(cfg_.simulation.judge_k));
    b.simulator_llm = simulator_llm_;
    b.tts = tts_;
    b.simulate_template = templates_.simulate;
    if (cfg_.corruption) {
        b.initial_corruption =
            std::make_shared<gateway::CorruptAsr>(cfg_.corruption->table, cfg_.corruption->seed, cfg_.corruption->rate);
    }
    return b;
}

}  // namespace iasr
