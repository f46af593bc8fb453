#include "iasr/session.hpp"

namespace iasr::session {

nlohmann::json to_json(const EditInstruction& edit) {
    return {{"start", edit.start}, {"end", edit.end}, {"rationale", edit.rationale}, {"replacement", edit.replacement}};
}

EditInstruction edit_from_json(const nlohmann::json& j) {
    return {j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>(), j.value("rationale", std::string{}),
            j.at("replacement").get<std::string>()};
}

nlohmann::json to_json(const TurnRecord& r) {
    nlohmann::json j = {{"input_ref", r.input_ref},
                        {"raw_hypothesis", r.raw_hypothesis},
                        {"corrected_instruction", r.corrected_instruction},
                        {"intent", to_string(r.intent)},
                        {"resulting_state", r.resulting_state}};
    j["edit"] = r.edit ? to_json(*r.edit) : nlohmann::json();
    if (r.error_note) j["error_note"] = *r.error_note;
    return j;
}

TurnRecord turn_record_from_json(const nlohmann::json& j) {
    TurnRecord r;
    r.input_ref = j.value("input_ref", std::string{});
    r.raw_hypothesis = j.value("raw_hypothesis", std::string{});
    r.corrected_instruction = j.value("corrected_instruction", std::string{});
    const auto intent = parse_intent(j.at("intent").get<std::string>());
    if (!intent) throw UpdateError("unknown intent '" + j.at("intent").get<std::string>() + "'");
    r.intent = *intent;
    if (j.contains("edit") && !j.at("edit").is_null()) r.edit = edit_from_json(j.at("edit"));
    r.resulting_state = j.at("resulting_state").get<std::string>();
    if (j.contains("error_note") && !j.at("error_note").is_null()) r.error_note = j.at("error_note").get<std::string>();
    return r;
}

nlohmann::json state_summary(const TranscriptionState& state) {
    return {{"text", state.current_text()}, {"turn", state.turn_index()}};
}

}  // namespace iasr::session
