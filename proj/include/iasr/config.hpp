#pragma once

// Application configuration (one JSON file) and the runtime objects built
// from it.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "iasr/gateway.hpp"
#include "iasr/judge.hpp"
#include "iasr/pipeline.hpp"
#include "iasr/prompts.hpp"
#include "iasr/simulation.hpp"
#include "json.hpp"

namespace iasr {

/// Environment variable consulted when no --config flag is given.
inline constexpr const char* kConfigEnvVar = "IASR_CONFIG";

struct CorruptionConfig {
    std::map<std::string, std::string> table;
    std::uint64_t seed = 0;
    double rate = 1.0;
};

struct ServiceSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t max_upload_bytes = 10 * 1024 * 1024;
    /// Event log, audio spool and job results live here. Unset means an
    /// in-memory store and a temporary directory for job output.
    std::optional<std::filesystem::path> data_dir;
    std::size_t job_workers = 2;
};

inline gateway::BackendConfig backend_defaults(gateway::Role role, std::string endpoint) {
    gateway::BackendConfig cfg;
    cfg.role = role;
    cfg.endpoint = std::move(endpoint);
    return cfg;
}

struct AppConfig {
    gateway::BackendConfig llm = backend_defaults(gateway::Role::llm, "mock:rules");
    gateway::BackendConfig asr = backend_defaults(gateway::Role::asr, "mock:identity");
    gateway::BackendConfig tts = backend_defaults(gateway::Role::tts, "mock:passthrough");
    std::optional<gateway::BackendConfig> judge_llm;      // defaults to llm
    std::optional<gateway::BackendConfig> simulator_llm;  // defaults to llm
    std::optional<std::filesystem::path> templates_dir;
    std::size_t history_window = 5;

    judge::JudgeOptions judge;
    simulation::SimulationConfig simulation;
    std::string simulator_mode = "rules";  // "rules" or "llm"
    std::string system = "agentic";        // "agentic", "asr-baseline" or "http"
    std::string system_url;                // for system == "http"
    std::optional<CorruptionConfig> corruption;

    ServiceSettings service;
};

/// Relative paths (templates_dir, data_dir, fixture files, spool dirs) are
/// resolved against `base_dir`.
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
AppConfig load_config(const std::filesystem::path& path);
/// The --config value when given, else $IASR_CONFIG, else nullopt.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& flag);
/// load_config on the resolved path, or the all-mock defaults when none.
AppConfig load_config_or_default(const std::optional<std::string>& flag);
/// Never contains secrets; backend auth appears only as env var names.
nlohmann::json to_json(const AppConfig& cfg);

/// Clients that replace the ones the configuration would build.
struct RuntimeOverrides {
    std::shared_ptr<gateway::LlmClient> llm;
    std::shared_ptr<gateway::LlmClient> judge_llm;
    std::shared_ptr<gateway::LlmClient> simulator_llm;
    std::shared_ptr<gateway::AsrClient> asr;
    std::shared_ptr<gateway::TtsClient> tts;
};

/// Live clients and derived objects for one configuration.
class Runtime {
public:
    explicit Runtime(AppConfig cfg, RuntimeOverrides overrides = {});

    const AppConfig& config() const { return cfg_; }
    const prompts::PromptTemplates& templates() const { return templates_; }
    std::shared_ptr<gateway::LlmClient> llm() const { return llm_; }
    std::shared_ptr<gateway::AsrClient> asr() const { return asr_; }
    std::shared_ptr<gateway::TtsClient> tts() const { return tts_; }
    std::shared_ptr<const pipeline::AgentPipeline> pipeline() const { return pipeline_; }
    std::shared_ptr<judge::Judge> make_judge(std::optional<int> k = std::nullopt) const;
    std::unique_ptr<simulation::SystemUnderTest> make_system() const;
    simulation::SimulationBackends simulation_backends(std::optional<int> judge_k = std::nullopt) const;

private:
    AppConfig cfg_;
    prompts::PromptTemplates templates_;
    std::shared_ptr<gateway::LlmClient> llm_;
    std::shared_ptr<gateway::LlmClient> judge_llm_;
    std::shared_ptr<gateway::LlmClient> simulator_llm_;
    std::shared_ptr<gateway::AsrClient> asr_;
    std::shared_ptr<gateway::TtsClient> tts_;
    std::shared_ptr<const pipeline::AgentPipeline> pipeline_;
};

}  // namespace iasr
