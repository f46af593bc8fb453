#include "iasr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "iasr/instructions.hpp"
#include "iasr/metrics.hpp"
#include "iasr/parallel.hpp"

namespace iasr::simulation {

namespace {

const std::set<std::string> kKnownMetrics = {"wer", "cer", "mer", "ner", "s2er"};

// Seeds for one sample are laid out as base + 16 * round + slot, where the
// judge uses slots 0..6 (one per voting round) and the simulator slot 8.
constexpr std::int64_t kRoundStride = 16;
constexpr std::int64_t kSimulatorSlot = 8;

}  // namespace

void SimulationConfig::validate() const {
    if (max_rounds < 1) throw InvalidArgument("max_rounds must be at least 1");
    if (!judge::valid_k(judge_k)) throw InvalidArgument("judge_k must be odd and within [1, 7]");
    if (parallel_samples < 1) throw InvalidArgument("parallel_samples must be at least 1");
    for (const auto& m : metrics) {
        if (!kKnownMetrics.count(m)) throw InvalidArgument("unknown metric '" + m + "'");
    }
}

SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
    SimulationConfig cfg;
    cfg.max_rounds = j.value("max_rounds", cfg.max_rounds);
    cfg.judge_k = j.value("judge_k", cfg.judge_k);
    cfg.metrics = j.value("metrics", cfg.metrics);
    cfg.parallel_samples = j.value("parallel_samples", cfg.parallel_samples);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

nlohmann::json to_json(const SimulationConfig& cfg) {
    return {{"max_rounds", cfg.max_rounds},
            {"judge_k", cfg.judge_k},
            {"metrics", cfg.metrics},
            {"parallel_samples", cfg.parallel_samples},
            {"seed", cfg.seed}};
}

std::vector<int> propagate_labels(const std::vector<bool>& verdicts, int max_rounds) {
    std::vector<int> labels(static_cast<std::size_t>(max_rounds) + 1, 0);
    int current = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (t < verdicts.size() && verdicts[t]) current = 1;
        labels[t] = current;
    }
    return labels;
}

bool SimulationTrace::consistent(int max_rounds) const {
    std::vector<bool> verdicts;
    std::optional<int> first;
    for (std::size_t t = 0; t < rounds.size(); ++t) {
        if (rounds[t].round != static_cast<int>(t)) return false;
        verdicts.push_back(rounds[t].verdict);
        if (rounds[t].verdict && !first) first = static_cast<int>(t);
    }
    if (first != stop_round) return false;
    if (propagated_labels != propagate_labels(verdicts, max_rounds)) return false;
    if (!valid) return true;
    const auto expected = stop_round ? static_cast<std::size_t>(*stop_round) + 1
                                     : static_cast<std::size_t>(max_rounds) + 1;
    return rounds.size() == expected;
}

bool TrajectoryReport::non_increasing() const {
    for (std::size_t t = 1; t < per_round_s2er.size(); ++t) {
        if (per_round_s2er[t] > per_round_s2er[t - 1]) return false;
    }
    return true;
}

TrajectoryReport aggregate(std::span<const SimulationTrace> traces, int max_rounds,
                           const std::vector<std::string>& metrics) {
    TrajectoryReport report;
    report.max_rounds = max_rounds;
    const auto width = static_cast<std::size_t>(max_rounds) + 1;
    std::vector<double> failures(width, 0.0);
    std::map<std::string, std::vector<double>> sums;
    std::map<std::string, std::vector<std::size_t>> counts;

    for (const auto& trace : traces) {
        if (!trace.valid || trace.rounds.empty()) {
            report.invalid_ids.push_back(trace.sample_id);
            continue;
        }
        ++report.n;
        for (std::size_t t = 0; t < width; ++t) failures[t] += 1.0 - trace.propagated_labels.at(t);
        for (const auto& m : metrics) {
            if (m == "s2er") continue;
            auto& sum = sums[m];
            auto& count = counts[m];
            sum.resize(width, 0.0);
            count.resize(width, 0);
            for (std::size_t t = 0; t < width; ++t) {
                const auto& round = trace.rounds[std::min(t, trace.rounds.size() - 1)];
                if (auto it = round.token_metrics.find(m); it != round.token_metrics.end()) {
                    sum[t] += it->second;
                    ++count[t];
                }
            }
        }
    }
    if (report.n == 0) return report;
    for (auto& f : failures) f /= static_cast<double>(report.n);
    report.per_round_s2er = std::move(failures);
    for (const auto& [m, sum] : sums) {
        const auto& count = counts[m];
        if (count.front() == 0) continue;
        std::vector<double> mean(width);
        for (std::size_t t = 0; t < width; ++t) mean[t] = sum[t] / static_cast<double>(count[t]);
        report.per_round_token_metrics[m] = std::move(mean);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Systems under test

namespace {

class AgenticSession final : public SystemSession {
public:
    explicit AgenticSession(std::shared_ptr<const pipeline::AgentPipeline> p) : pipeline_(std::move(p)) {}

    std::string submit(const gateway::AudioRef& input) override {
        state_ = session::apply_update(state_, pipeline_->run_turn(state_, input));
        return state_.current_text();
    }

private:
    std::shared_ptr<const pipeline::AgentPipeline> pipeline_;
    session::TranscriptionState state_;
};

class BaselineSession final : public SystemSession {
public:
    explicit BaselineSession(std::shared_ptr<gateway::AsrClient> asr) : asr_(std::move(asr)) {}
    std::string submit(const gateway::AudioRef& input) override { return asr_->transcribe(input); }

private:
    std::shared_ptr<gateway::AsrClient> asr_;
};

}  // namespace

AgenticSystem::AgenticSystem(std::shared_ptr<const pipeline::AgentPipeline> pipeline)
    : pipeline_(std::move(pipeline)) {
    if (!pipeline_) throw InvalidArgument("agentic system needs a pipeline");
}

std::unique_ptr<SystemSession> AgenticSystem::open() { return std::make_unique<AgenticSession>(pipeline_); }

AsrBaselineSystem::AsrBaselineSystem(std::shared_ptr<gateway::AsrClient> asr) : asr_(std::move(asr)) {
    if (!asr_) throw InvalidArgument("baseline system needs an ASR backend");
}

std::unique_ptr<SystemSession> AsrBaselineSystem::open() { return std::make_unique<BaselineSession>(asr_); }

// ---------------------------------------------------------------------------
// Harness

UserFeedback simulate_user(std::string_view current, std::string_view reference,
                           const std::shared_ptr<gateway::LlmClient>& llm,
                           const std::shared_ptr<gateway::TtsClient>& tts, const prompts::PromptTemplate& tmpl,
                           std::optional<std::int64_t> seed) {
    std::string instruction;
    if (llm) {
        const auto request = prompts::make_request(
            "simulate", tmpl, {{"current", std::string(current)}, {"reference", std::string(reference)}}, false,
            seed);
        instruction = trim(llm->complete(request));
        if (instruction.empty()) throw gateway::BackendError("user simulator returned an empty instruction");
    } else {
        // nothing to point at when only the surface form differs; the user repeats the sentence
        instruction = rule_based_feedback(current, reference).value_or(trim(reference));
        if (instruction.empty()) throw InvalidArgument("user simulator needs a non-empty reference");
    }
    auto audio = tts ? tts->synthesize(instruction, std::nullopt) : gateway::AudioRef::text(instruction);
    return {std::move(instruction), std::move(audio)};
}

gateway::AudioRef initial_input(const dataset::ManifestEntry& entry, const SimulationBackends& backends) {
    if (entry.audio) return gateway::AudioRef::file(*entry.audio);
    std::string text = entry.input_text.value_or(entry.text);
    if (backends.initial_corruption) text = backends.initial_corruption->corrupt(text);
    return gateway::AudioRef::text(std::move(text));
}

std::map<std::string, double> token_metrics(const dataset::ManifestEntry& entry, std::string_view state,
                                            const std::vector<std::string>& metrics) {
    std::map<std::string, double> out;
    for (const auto& m : metrics) {
        if (m == "s2er") continue;
        if (m == "ner") {
            if (entry.entities) {
                out[m] = metrics::entity_error_rate(entry.text, state, *entry.entities, entry.entity_scheme());
            }
            continue;
        }
        out[m] = metrics::error_rate(entry.text, state, metrics::parse_metric(m));
    }
    return out;
}

SimulationTrace run_sample(const dataset::ManifestEntry& entry, SystemUnderTest& system,
                           const SimulationConfig& cfg, const SimulationBackends& backends) {
    if (!backends.judge) throw InvalidArgument("simulation needs a judge");
    SimulationTrace trace;
    trace.sample_id = entry.id;
    const auto base_seed = judge::sample_seed(cfg.seed, entry.id);
    std::vector<bool> verdicts;

    try {
        auto sess = system.open();
        auto input = initial_input(entry, backends);
        for (int t = 0; t <= cfg.max_rounds; ++t) {
            RoundRecord rec;
            rec.round = t;
            rec.state_text = sess->submit(input);
            const auto verdict =
                backends.judge->judge(rec.state_text, entry.text, cfg.judge_k, base_seed + kRoundStride * t);
            rec.verdict = verdict.label;
            rec.judge_rounds = verdict.rounds;
            rec.token_metrics = token_metrics(entry, rec.state_text, cfg.metrics);
            verdicts.push_back(rec.verdict);
            if (rec.verdict) {
                trace.stop_round = t;
                trace.rounds.push_back(std::move(rec));
                break;
            }
            if (t < cfg.max_rounds) {
                auto feedback = simulate_user(rec.state_text, entry.text, backends.simulator_llm, backends.tts,
                                              backends.simulate_template,
                                              base_seed + kRoundStride * t + kSimulatorSlot);
                rec.user_instruction = std::move(feedback.instruction);
                input = std::move(feedback.audio);
            }
            trace.rounds.push_back(std::move(rec));
        }
    } catch (const std::exception& e) {
        spdlog::warn("sample {} aborted after {} rounds: {}", entry.id, trace.rounds.size(), e.what());
        trace.valid = false;
        trace.error = e.what();
        verdicts.resize(trace.rounds.size());
    }
    trace.propagated_labels = propagate_labels(verdicts, cfg.max_rounds);
    return trace;
}

CorpusRun run_corpus(std::span<const dataset::ManifestEntry> manifest, SystemUnderTest& system,
                     const SimulationConfig& cfg, const SimulationBackends& backends,
                     const std::function<void(const SimulationTrace&)>& on_trace) {
    cfg.validate();
    if (manifest.empty()) throw InvalidArgument("simulation needs at least one sample");
    CorpusRun run;
    run.traces.resize(manifest.size());
    parallel_for(manifest.size(), cfg.parallel_samples, [&](std::size_t i) {
        run.traces[i] = run_sample(manifest[i], system, cfg, backends);
        if (on_trace) on_trace(run.traces[i]);
    });
    run.report = aggregate(run.traces, cfg.max_rounds, cfg.metrics);
    if (!run.report.invalid_ids.empty()) {
        spdlog::warn("{} of {} traces invalid and excluded", run.report.invalid_ids.size(), manifest.size());
    }
    return run;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const SimulationTrace& trace) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : trace.rounds) {
        nlohmann::json bits = nlohmann::json::array();
        for (const auto& b : r.judge_rounds) bits.push_back({b.forward ? 1 : 0, b.backward ? 1 : 0});
        nlohmann::json jr = {{"round", r.round},
                             {"state_text", r.state_text},
                             {"verdict", r.verdict ? 1 : 0},
                             {"judge_rounds", bits},
                             {"token_metrics", r.token_metrics}};
        jr["user_instruction"] = r.user_instruction ? nlohmann::json(*r.user_instruction) : nlohmann::json();
        rounds.push_back(std::move(jr));
    }
    nlohmann::json j = {{"sample_id", trace.sample_id},
                        {"rounds", rounds},
                        {"propagated_labels", trace.propagated_labels},
                        {"valid", trace.valid}};
    j["stop_round"] = trace.stop_round ? nlohmann::json(*trace.stop_round) : nlohmann::json();
    if (trace.error) j["error"] = *trace.error;
    return j;
}

SimulationTrace trace_from_json(const nlohmann::json& j) {
    SimulationTrace trace;
    trace.sample_id = j.at("sample_id").get<std::string>();
    for (const auto& jr : j.at("rounds")) {
        RoundRecord r;
        r.round = jr.at("round").get<int>();
        r.state_text = jr.at("state_text").get<std::string>();
        r.verdict = jr.at("verdict").get<int>() != 0;
        for (const auto& b : jr.value("judge_rounds", nlohmann::json::array())) {
            r.judge_rounds.push_back({b.at(0).get<int>() != 0, b.at(1).get<int>() != 0});
        }
        if (jr.contains("user_instruction") && !jr.at("user_instruction").is_null()) {
            r.user_instruction = jr.at("user_instruction").get<std::string>();
        }
        r.token_metrics = jr.value("token_metrics", std::map<std::string, double>{});
        trace.rounds.push_back(std::move(r));
    }
    if (j.contains("stop_round") && !j.at("stop_round").is_null()) trace.stop_round = j.at("stop_round").get<int>();
    trace.propagated_labels = j.at("propagated_labels").get<std::vector<int>>();
    trace.valid = j.value("valid", true);
    if (j.contains("error")) trace.error = j.at("error").get<std::string>();
    return trace;
}

nlohmann::json to_json(const TrajectoryReport& report) {
    return {{"max_rounds", report.max_rounds},
            {"n", report.n},
            {"per_round_s2er", report.per_round_s2er},
            {"per_round_token_metrics", report.per_round_token_metrics},
            {"invalid_ids", report.invalid_ids}};
}

void write_report_csv(std::ostream& out, const TrajectoryReport& report) {
    out << "round,metric,value\n";
    auto rows = [&](const std::string& name, const std::vector<double>& values) {
        for (std::size_t t = 0; t < values.size(); ++t) out << t << ',' << name << ',' << values[t] << '\n';
    };
    rows("s2er", report.per_round_s2er);
    for (const auto& [name, values] : report.per_round_token_metrics) rows(name, values);
}

}  // namespace iasr::simulation
