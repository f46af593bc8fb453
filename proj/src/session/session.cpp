#include "iasr/session.hpp"

#include <algorithm>
#include <cctype>

namespace iasr::session {

std::string_view to_string(IntentLabel intent) {
    switch (intent) {
        case IntentLabel::confirmation: return "confirmation";
        case IntentLabel::new_input: return "new_input";
        case IntentLabel::correction: return "correction";
    }
    return "confirmation";
}

std::optional<IntentLabel> parse_intent(std::string_view text) {
    std::string s;
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isspace(uc) || c == '-' || c == '_') {
            if (!s.empty() && s.back() != '_') s.push_back('_');
        } else {
            s.push_back(static_cast<char>(std::tolower(uc)));
        }
    }
    while (!s.empty() && s.back() == '_') s.pop_back();
    if (s == "confirmation") return IntentLabel::confirmation;
    if (s == "new_input") return IntentLabel::new_input;
    if (s == "correction") return IntentLabel::correction;
    return std::nullopt;
}

std::vector<std::string> TranscriptionState::recent_states(std::size_t n) const {
    const std::size_t take = std::min(n, history_.size());
    std::vector<std::string> out;
    out.reserve(take);
    for (std::size_t i = history_.size() - take; i < history_.size(); ++i) {
        out.push_back(history_[i].resulting_state);
    }
    return out;
}

TranscriptionState new_session() { return TranscriptionState{}; }

void validate(const TranscriptionState& state, const TurnRecord& record) {
    const std::string& previous = state.current_text();
    switch (record.intent) {
        case IntentLabel::confirmation:
            if (record.resulting_state != previous) {
                throw UpdateError("confirmation turn changed the state from '" + previous + "' to '" +
                                  record.resulting_state + "'");
            }
            break;
        case IntentLabel::new_input:
            if (record.resulting_state != record.corrected_instruction) {
                throw UpdateError("new_input turn must adopt the corrected instruction '" +
                                  record.corrected_instruction + "', got '" + record.resulting_state + "'");
            }
            break;
        case IntentLabel::correction: {
            if (!record.edit) throw UpdateError("correction turn carries no edit");
            std::string expected;
            try {
                expected = modify(previous, *record.edit);
            } catch (const EditError& e) {
                throw UpdateError(std::string("correction edit does not fit the current state: ") + e.what());
            }
            if (record.resulting_state != expected) {
                throw UpdateError("correction turn result '" + record.resulting_state +
                                  "' differs from applying its edit ('" + expected + "')");
            }
            break;
        }
    }
}

TranscriptionState apply_update(const TranscriptionState& state, TurnRecord record) {
    validate(state, record);
    TranscriptionState next = state;
    next.current_text_ = record.resulting_state;
    next.history_.push_back(std::move(record));
    return next;
}

TranscriptionState replay(const std::vector<TurnRecord>& records) {
    TranscriptionState state = new_session();
    for (const auto& r : records) state = apply_update(state, r);
    return state;
}

}  // namespace iasr::session
