#pragma once

// Closed-loop evaluation. A system under test is driven for up to T feedback
// rounds per sample: each round's state is judged against the reference, and
// while it is judged wrong a simulated user produces a spoken correction that
// becomes the next round's input.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iasr/dataset.hpp"
#include "iasr/gateway.hpp"
#include "iasr/judge.hpp"
#include "iasr/pipeline.hpp"
#include "iasr/prompts.hpp"
#include "json.hpp"

namespace iasr::simulation {

struct SimulationConfig {
    int max_rounds = 10;  // T; rounds are numbered 0..T
    int judge_k = 3;
    /// Any of "wer", "cer", "mer", "ner", "s2er". S2ER is always reported.
    std::vector<std::string> metrics = {"wer", "s2er"};
    std::size_t parallel_samples = 4;
    std::int64_t seed = 0;

    void validate() const;
};

SimulationConfig simulation_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimulationConfig& cfg);

struct RoundRecord {
    int round = 0;
    std::string state_text;  // system transcript after this round
    bool verdict = false;    // judge label for this round
    std::vector<judge::RoundBits> judge_rounds;
    /// Feedback spoken after this round; empty on the stopping round and on
    /// round T.
    std::optional<std::string> user_instruction;
    std::map<std::string, double> token_metrics;

    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct SimulationTrace {
    std::string sample_id;
    std::vector<RoundRecord> rounds;
    std::optional<int> stop_round;
    std::vector<int> propagated_labels;  // length T + 1
    bool valid = true;
    std::optional<std::string> error;

    /// stop_round, propagated_labels and the number of rounds agree with the
    /// per-round verdicts for a budget of `max_rounds`.
    bool consistent(int max_rounds) const;

    friend bool operator==(const SimulationTrace&, const SimulationTrace&) = default;
};

/// labels[t] = 1 iff some verdict at round <= t is positive; length T + 1.
/// Rounds beyond verdicts.size() carry the last value forward.
std::vector<int> propagate_labels(const std::vector<bool>& verdicts, int max_rounds);

struct TrajectoryReport {
    int max_rounds = 0;
    std::size_t n = 0;  // valid traces aggregated
    std::vector<double> per_round_s2er;
    std::map<std::string, std::vector<double>> per_round_token_metrics;
    std::vector<std::string> invalid_ids;

    bool non_increasing() const;
};

/// Averages valid traces. Token metrics of a stopped sample are carried
/// forward from its last recorded round.
TrajectoryReport aggregate(std::span<const SimulationTrace> traces, int max_rounds,
                           const std::vector<std::string>& metrics);

// ---------------------------------------------------------------------------
// Systems under test

class SystemSession {
public:
    virtual ~SystemSession() = default;
    /// Feeds one round's input and returns the system's transcription state.
    virtual std::string submit(const gateway::AudioRef& input) = 0;
};

class SystemUnderTest {
public:
    virtual ~SystemUnderTest() = default;
    virtual std::unique_ptr<SystemSession> open() = 0;
    virtual std::string name() const = 0;
};

/// The bundled agent pipeline with session-state updates.
class AgenticSystem final : public SystemUnderTest {
public:
    explicit AgenticSystem(std::shared_ptr<const pipeline::AgentPipeline> pipeline);
    std::unique_ptr<SystemSession> open() override;
    std::string name() const override { return "agentic"; }

private:
    std::shared_ptr<const pipeline::AgentPipeline> pipeline_;
};

/// Single-pass ASR: every round's state is simply the transcript of that
/// round's input.
class AsrBaselineSystem final : public SystemUnderTest {
public:
    explicit AsrBaselineSystem(std::shared_ptr<gateway::AsrClient> asr);
    std::unique_ptr<SystemSession> open() override;
    std::string name() const override { return "asr-baseline"; }

private:
    std::shared_ptr<gateway::AsrClient> asr_;
};

/// A running iasr service (or anything speaking its session API).
class HttpSystem final : public SystemUnderTest {
public:
    explicit HttpSystem(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(60));
    std::unique_ptr<SystemSession> open() override;
    std::string name() const override { return "http"; }

private:
    std::string base_url_;
    std::chrono::milliseconds timeout_;
};

// ---------------------------------------------------------------------------
// Harness

struct UserFeedback {
    std::string instruction;
    gateway::AudioRef audio;
};

/// With an LLM the simulate prompt is rendered from (current, reference);
/// without one the rule-based instruction is used. A null TTS yields a text
/// passthrough. Throws InvalidArgument when the rule-based simulator is
/// asked about texts that already agree.
UserFeedback simulate_user(std::string_view current, std::string_view reference,
                           const std::shared_ptr<gateway::LlmClient>& llm,
                           const std::shared_ptr<gateway::TtsClient>& tts,
                           const prompts::PromptTemplate& tmpl = prompts::PromptTemplates::defaults().simulate,
                           std::optional<std::int64_t> seed = std::nullopt);

struct SimulationBackends {
    std::shared_ptr<judge::Judge> judge;
    std::shared_ptr<gateway::LlmClient> simulator_llm;  // null: rule-based
    std::shared_ptr<gateway::TtsClient> tts;            // null: text passthrough
    prompts::PromptTemplate simulate_template = prompts::PromptTemplates::defaults().simulate;
    /// Applied to the round-0 text input only, standing in for first-pass
    /// recognition errors.
    std::shared_ptr<gateway::CorruptAsr> initial_corruption;
};

/// Round-0 input: the entry's audio when present, else input_text (or the
/// reference), passed through initial_corruption.
gateway::AudioRef initial_input(const dataset::ManifestEntry& entry, const SimulationBackends& backends);

std::map<std::string, double> token_metrics(const dataset::ManifestEntry& entry, std::string_view state,
                                            const std::vector<std::string>& metrics);

SimulationTrace run_sample(const dataset::ManifestEntry& entry, SystemUnderTest& system,
                           const SimulationConfig& cfg, const SimulationBackends& backends);

struct CorpusRun {
    std::vector<SimulationTrace> traces;  // manifest order
    TrajectoryReport report;
};

/// Runs samples concurrently (at most cfg.parallel_samples at once).
/// `on_trace` is called once per finished sample, from worker threads.
CorpusRun run_corpus(std::span<const dataset::ManifestEntry> manifest, SystemUnderTest& system,
                     const SimulationConfig& cfg, const SimulationBackends& backends,
                     const std::function<void(const SimulationTrace&)>& on_trace = {});

nlohmann::json to_json(const SimulationTrace& trace);
SimulationTrace trace_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrajectoryReport& report);
/// Long format: a "round,metric,value" header, then one row per point.
void write_report_csv(std::ostream& out, const TrajectoryReport& report);

}  // namespace iasr::simulation
