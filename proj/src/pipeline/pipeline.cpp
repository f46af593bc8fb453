#include "iasr/pipeline.hpp"

#include <unicode/uchar.h>

#include <spdlog/spdlog.h>

#include "iasr/instructions.hpp"
#include "iasr/utf8.hpp"

namespace iasr::pipeline {

using gateway::AudioRef;
using session::IntentLabel;
using session::TranscriptionState;
using session::TurnRecord;

std::optional<std::pair<std::size_t, std::size_t>> resolve_span(std::string_view text, std::string_view quote) {
    if (quote.empty()) return std::nullopt;
    const auto hay = utf8::decode(text);
    const auto needle = utf8::decode(quote);
    if (needle.size() > hay.size()) return std::nullopt;

    auto search = [&](auto&& eq) -> std::optional<std::pair<std::size_t, std::size_t>> {
        for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
            std::size_t k = 0;
            while (k < needle.size() && eq(hay[i + k].value, needle[k].value)) ++k;
            if (k == needle.size()) return std::make_pair(i, i + needle.size());
        }
        return std::nullopt;
    };
    if (auto exact = search([](char32_t a, char32_t b) { return a == b; })) return exact;
    return search([](char32_t a, char32_t b) {
        return u_foldCase(static_cast<UChar32>(a), U_FOLD_CASE_DEFAULT) ==
               u_foldCase(static_cast<UChar32>(b), U_FOLD_CASE_DEFAULT);
    });
}

AgentPipeline::AgentPipeline(Backends backends, prompts::PromptTemplates templates, PipelineOptions options)
    : backends_(std::move(backends)), templates_(std::move(templates)), options_(options) {
    if (!backends_.asr || !backends_.llm) throw InvalidArgument("agent pipeline needs an ASR and an LLM backend");
}

std::map<std::string, std::string> AgentPipeline::context(const TranscriptionState& state) const {
    // the newest state is the current text, which has its own slot
    auto recent = state.recent_states(options_.history_window + 1);
    if (!recent.empty()) recent.pop_back();
    std::string history;
    if (recent.empty()) history = "(none)";
    for (std::size_t i = 0; i < recent.size(); ++i) {
        if (i > 0) history += "\n";
        history += std::to_string(i + 1) + ". " + recent[i];
    }
    return {{"history", history}, {"current", state.current_text().empty() ? "(empty)" : state.current_text()}};
}

std::string AgentPipeline::ask(std::string_view task, const std::map<std::string, std::string>& values,
                               bool structured) const {
    const auto req = prompts::make_request(task, templates_.get(task), values, structured, options_.seed);
    return backends_.llm->complete(req);
}

namespace {

// Calls `ask` up to twice until `pick` extracts a value from the JSON answer.
template <typename T, typename Ask, typename Pick>
std::pair<std::optional<T>, std::string> ask_structured(Ask&& ask, Pick&& pick) {
    std::string raw;
    for (int attempt = 0; attempt < 2; ++attempt) {
        raw = ask();
        if (auto obj = extract_json_object(raw)) {
            if (auto value = pick(*obj)) return {std::move(value), raw};
        }
        if (attempt == 0) spdlog::debug("unparseable structured answer, asking again: {}", raw);
    }
    return {std::nullopt, raw};
}

std::optional<std::string> string_field(const nlohmann::json& obj, const char* key) {
    if (!obj.contains(key) || !obj.at(key).is_string()) return std::nullopt;
    return obj.at(key).get<std::string>();
}

}  // namespace

std::string AgentPipeline::semantic_correction(std::string_view hypothesis, const TranscriptionState& state) const {
    if (trim(hypothesis).empty()) throw InvalidArgument("semantic correction needs a non-empty hypothesis");
    auto values = context(state);
    values["hypothesis"] = std::string(hypothesis);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto raw = ask("refine", values, false);
        std::string text = trim(raw);
        if (auto obj = extract_json_object(raw)) {
            if (auto instr = string_field(*obj, "instruction")) text = trim(*instr);
        }
        if (!text.empty()) return text;
    }
    spdlog::warn("semantic correction returned nothing twice; keeping the raw hypothesis");
    return std::string(hypothesis);
}

IntentLabel AgentPipeline::route_intent(std::string_view instruction, const TranscriptionState& state) const {
    if (state.turn_index() == 0) return IntentLabel::new_input;
    auto values = context(state);
    values["instruction"] = std::string(instruction);
    auto [label, raw] = ask_structured<IntentLabel>([&] { return ask("route", values, true); },
                                                    [](const nlohmann::json& obj) -> std::optional<IntentLabel> {
                                                        auto s = string_field(obj, "intent");
                                                        return s ? session::parse_intent(*s) : std::nullopt;
                                                    });
    if (!label) throw RoutingError("intent router gave no usable label", raw);
    return *label;
}

std::pair<std::size_t, std::size_t> AgentPipeline::locate(std::string_view instruction,
                                                          const TranscriptionState& state) const {
    auto values = context(state);
    values["instruction"] = std::string(instruction);
    auto [target, raw] = ask_structured<std::string>([&] { return ask("locate", values, true); },
                                                     [](const nlohmann::json& obj) { return string_field(obj, "target"); });
    if (!target) throw LocateError("locator gave no target quote", raw);
    auto span = resolve_span(state.current_text(), *target);
    if (!span) throw LocateError("target '" + *target + "' does not occur in the current text", raw);
    return *span;
}

std::pair<std::string, std::string> AgentPipeline::reason(std::string_view instruction, std::string_view span_text,
                                                          const TranscriptionState& state,
                                                          std::string_view hypothesis) const {
    auto values = context(state);
    values["instruction"] = std::string(instruction);
    values["span"] = std::string(span_text);
    values["hypothesis"] = std::string(hypothesis.empty() ? instruction : hypothesis);
    std::string rationale;
    auto [replacement, raw] = ask_structured<std::string>([&] { return ask("reason", values, true); },
                                                          [&](const nlohmann::json& obj) {
                                                              if (auto r = string_field(obj, "rationale")) rationale = *r;
                                                              return string_field(obj, "replacement");
                                                          });
    if (!replacement) throw StageError("reason", "reasoner gave no replacement", raw);
    return {trim(*replacement), rationale};
}

TurnRecord AgentPipeline::run_turn(const TranscriptionState& state, const AudioRef& input) const {
    TurnRecord record;
    record.input_ref = gateway::describe(input);

    auto degrade = [&](const std::string& stage, const std::string& message) {
        spdlog::warn("turn {} degraded at {}: {}", state.turn_index(), stage, message);
        record.intent = IntentLabel::confirmation;
        record.edit.reset();
        record.resulting_state = state.current_text();
        record.error_note = stage + ": " + message;
        return record;
    };

    try {
        record.raw_hypothesis = backends_.asr->transcribe(input);
    } catch (const gateway::TransportError&) {
        throw;
    } catch (const Error& e) {
        return degrade("transcribe", e.what());
    }
    if (trim(record.raw_hypothesis).empty()) return degrade("transcribe", "empty hypothesis");

    try {
        record.corrected_instruction = semantic_correction(record.raw_hypothesis, state);
        record.intent = route_intent(record.corrected_instruction, state);

        if (record.intent == IntentLabel::correction && state.current_text().empty()) {
            record.intent = IntentLabel::new_input;
            record.error_note = "route: correction requested on an empty transcript; treated as new input";
        }

        switch (record.intent) {
            case IntentLabel::confirmation:
                record.resulting_state = state.current_text();
                break;
            case IntentLabel::new_input:
                record.resulting_state = record.corrected_instruction;
                break;
            case IntentLabel::correction: {
                const auto [start, end] = locate(record.corrected_instruction, state);
                const auto& text = state.current_text();
                const auto b = utf8::byte_offset(text, start);
                const auto e = utf8::byte_offset(text, end);
                auto [replacement, rationale] =
                    reason(record.corrected_instruction, text.substr(b, e - b), state, record.raw_hypothesis);
                EditInstruction edit{start, end, rationale.empty() ? record.corrected_instruction : rationale,
                                     std::move(replacement)};
                record.resulting_state = modify(text, edit);
                record.edit = std::move(edit);
                break;
            }
        }
    } catch (const gateway::TransportError&) {
        throw;
    } catch (const StageError& e) {
        return degrade(e.stage(), e.what());
    } catch (const Error& e) {
        return degrade("pipeline", e.what());
    }
    return record;
}

}  // namespace iasr::pipeline
