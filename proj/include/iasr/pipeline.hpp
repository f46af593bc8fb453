#pragma once

// Per-turn refinement: ASR front-end, semantic correction, intent routing and
// Locate–Reason–Modify editing. run_turn turns (state, input) into a
// TurnRecord that session::apply_update accepts.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "iasr/edit.hpp"
#include "iasr/gateway.hpp"
#include "iasr/prompts.hpp"
#include "iasr/session.hpp"

namespace iasr::pipeline {

/// A stage could not produce a usable result. run_turn degrades such turns
/// to confirmations carrying an error note.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what, std::string raw_output = {})
        : Error(what), stage_(std::move(stage)), raw_output_(std::move(raw_output)) {}
    const std::string& stage() const { return stage_; }
    const std::string& raw_output() const { return raw_output_; }

private:
    std::string stage_;
    std::string raw_output_;
};

class RoutingError : public StageError {
public:
    RoutingError(const std::string& what, std::string raw) : StageError("route", what, std::move(raw)) {}
};

class LocateError : public StageError {
public:
    LocateError(const std::string& what, std::string raw = {}) : StageError("locate", what, std::move(raw)) {}
};

struct Backends {
    std::shared_ptr<gateway::AsrClient> asr;
    std::shared_ptr<gateway::LlmClient> llm;
};

struct PipelineOptions {
    /// Number of earlier states rendered into prompts besides the current one.
    std::size_t history_window = 5;
    std::optional<std::int64_t> seed;
};

/// Scalar range [start, end) of the leftmost exact occurrence of `quote` in
/// `text`, else of the leftmost case-insensitive one (simple case folding).
std::optional<std::pair<std::size_t, std::size_t>> resolve_span(std::string_view text, std::string_view quote);

class AgentPipeline {
public:
    explicit AgentPipeline(Backends backends, prompts::PromptTemplates templates = prompts::PromptTemplates::defaults(),
                           PipelineOptions options = {});

    /// H_t -> H_t'. Empty output is re-asked once, then the hypothesis is
    /// returned unchanged.
    std::string semantic_correction(std::string_view hypothesis, const session::TranscriptionState& state) const;

    /// new_input without any LLM call at turn 0; otherwise parses
    /// {"intent": ...}, re-asking once before throwing RoutingError.
    session::IntentLabel route_intent(std::string_view instruction, const session::TranscriptionState& state) const;

    /// Scalar offsets of the span the instruction targets. Throws LocateError.
    std::pair<std::size_t, std::size_t> locate(std::string_view instruction,
                                               const session::TranscriptionState& state) const;

    /// Replacement text for `span_text` (trimmed; may be empty) and the
    /// model's rationale when it gives one.
    std::pair<std::string, std::string> reason(std::string_view instruction, std::string_view span_text,
                                               const session::TranscriptionState& state,
                                               std::string_view hypothesis = {}) const;

    /// Whole turn. Stage failures degrade to a state-preserving record with
    /// an error note; only gateway::TransportError propagates.
    session::TurnRecord run_turn(const session::TranscriptionState& state, const gateway::AudioRef& input) const;

    const Backends& backends() const { return backends_; }

private:
    std::string ask(std::string_view task, const std::map<std::string, std::string>& values, bool structured) const;
    std::map<std::string, std::string> context(const session::TranscriptionState& state) const;

    Backends backends_;
    prompts::PromptTemplates templates_;
    PipelineOptions options_;
};

}  // namespace iasr::pipeline
