#include "iasr/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace iasr::prompts {

namespace {

bool slot_char(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }

// Calls fn(begin, end, name) for every slot occurrence.
template <typename Fn>
void scan_slots(std::string_view text, Fn&& fn) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        std::size_t j = i + 1;
        while (j < text.size() && slot_char(text[j])) ++j;
        if (j > i + 1 && j < text.size() && text[j] == '}') {
            fn(i, j + 1, std::string(text.substr(i + 1, j - i - 1)));
            i = j;
        }
    }
}

constexpr std::string_view kRefineSystem =
    "You clean up the output of a speech recognizer in a dictation assistant. The user is either "
    "dictating text, accepting the current transcript, or telling the assistant how to fix it. "
    "Recognition errors also affect these spoken commands.";
constexpr std::string_view kRefineUser =
    "Current transcript:\n{current}\n\nEarlier transcripts (oldest first):\n{history}\n\n"
    "Recognized utterance:\n{hypothesis}\n\n"
    "Rewrite the recognized utterance as one explicit, self-contained instruction or text that is "
    "consistent with the transcript above. If it is new dictation, return the dictated text. If it asks "
    "for a change, state the change precisely, e.g. Replace 'Morgan' with 'Megan'. "
    "Answer with the rewritten utterance only.";

constexpr std::string_view kRouteSystem =
    "You classify a user's turn in an interactive dictation session.";
constexpr std::string_view kRouteUser =
    "Current transcript:\n{current}\n\nEarlier transcripts (oldest first):\n{history}\n\n"
    "User turn:\n{instruction}\n\n"
    "Classify the turn as exactly one of:\n"
    "- confirmation: the user accepts the current transcript as it is\n"
    "- new_input: the turn is new content that replaces the transcript\n"
    "- correction: the turn asks to change part of the current transcript\n"
    "Answer with a JSON object only: {\"intent\": \"confirmation\" | \"new_input\" | \"correction\"}";

constexpr std::string_view kLocateSystem =
    "You find the part of a transcript that a correction request refers to.";
constexpr std::string_view kLocateUser =
    "Transcript:\n{current}\n\nCorrection request:\n{instruction}\n\n"
    "Quote the exact characters of the transcript that must change. Copy them verbatim from the "
    "transcript, keep the quote as short as possible while still unambiguous.\n"
    "Answer with a JSON object only: {\"target\": \"<verbatim text from the transcript>\"}";

constexpr std::string_view kReasonSystem =
    "You decide how a span of a transcript should be rewritten to satisfy a correction request.";
constexpr std::string_view kReasonUser =
    "Transcript:\n{current}\n\nSpan to edit:\n{span}\n\nCorrection request:\n{instruction}\n\n"
    "Recognized utterance before cleanup:\n{hypothesis}\n\n"
    "Give the text that should replace the span. Use an empty string to delete it.\n"
    "Answer with a JSON object only: {\"replacement\": \"<new text>\", \"rationale\": \"<one short sentence>\"}";

constexpr std::string_view kJudgeSystem =
    "You judge whether two transcripts of the same utterance carry the same meaning.";
constexpr std::string_view kJudgeUser =
    "Transcript A:\n{first}\n\nTranscript B:\n{second}\n\n"
    "They are equivalent when a listener acting on either one would do the same thing: the request or "
    "statement, and every word that carries meaning, agree. Names, proper nouns, numbers and other "
    "entities must match; a single wrong entity makes them not equivalent. Ignore hesitations, filler "
    "words, repetitions, casing and punctuation.\n"
    "Answer with a JSON object only: {\"equivalent\": true} or {\"equivalent\": false}";

constexpr std::string_view kSimulateSystem =
    "You play a user who dictated a sentence and now sees the assistant's transcript.";
constexpr std::string_view kSimulateUser =
    "What you said:\n{reference}\n\nWhat the assistant wrote:\n{current}\n\n"
    "Find the most important difference in meaning and tell the assistant, in one short spoken "
    "sentence, how to fix it. Mention only one fix. Answer with the sentence only.";

}  // namespace

std::vector<std::string> slot_names(std::string_view text) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    scan_slots(text, [&](std::size_t, std::size_t, std::string name) {
        if (seen.insert(name).second) out.push_back(std::move(name));
    });
    return out;
}

std::vector<std::string> PromptTemplate::slots() const {
    auto out = slot_names(system);
    for (auto& s : slot_names(user)) {
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
    }
    return out;
}

std::string render(std::string_view text, const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t last = 0;
    scan_slots(text, [&](std::size_t begin, std::size_t end, const std::string& name) {
        auto it = values.find(name);
        if (it == values.end()) throw TemplateError("template slot {" + name + "} has no value");
        out.append(text.substr(last, begin - last));
        out.append(it->second);
        last = end;
    });
    out.append(text.substr(last));
    return out;
}

PromptTemplate parse_template_file(std::string_view contents) {
    std::string_view rest = contents;
    std::string system;
    while (!rest.empty()) {
        const auto nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line == "---") {
            std::string user(rest);
            while (!user.empty() && (user.back() == '\n' || user.back() == '\r')) user.pop_back();
            while (!system.empty() && system.back() == '\n') system.pop_back();
            return {system, user};
        }
        system.append(line);
        system.push_back('\n');
    }
    throw TemplateError("prompt template file lacks the '---' separator line");
}

std::string format_template_file(const PromptTemplate& tmpl) { return tmpl.system + "\n---\n" + tmpl.user + "\n"; }

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.refine = {std::string(kRefineSystem), std::string(kRefineUser)};
    t.route = {std::string(kRouteSystem), std::string(kRouteUser)};
    t.locate = {std::string(kLocateSystem), std::string(kLocateUser)};
    t.reason = {std::string(kReasonSystem), std::string(kReasonUser)};
    t.judge = {std::string(kJudgeSystem), std::string(kJudgeUser)};
    t.simulate = {std::string(kSimulateSystem), std::string(kSimulateUser)};
    return t;
}

namespace {

constexpr std::string_view kTasks[] = {"refine", "route", "locate", "reason", "judge", "simulate"};

PromptTemplate PromptTemplates::*member_for(std::string_view task) {
    if (task == "refine") return &PromptTemplates::refine;
    if (task == "route") return &PromptTemplates::route;
    if (task == "locate") return &PromptTemplates::locate;
    if (task == "reason") return &PromptTemplates::reason;
    if (task == "judge") return &PromptTemplates::judge;
    if (task == "simulate") return &PromptTemplates::simulate;
    throw TemplateError("unknown prompt task: " + std::string(task));
}

}  // namespace

const PromptTemplate& PromptTemplates::get(std::string_view task) const { return this->*member_for(task); }

PromptTemplates PromptTemplates::load_dir(const std::filesystem::path& dir) {
    PromptTemplates t = defaults();
    if (!std::filesystem::is_directory(dir)) throw TemplateError("prompt directory not found: " + dir.string());
    for (auto task : kTasks) {
        const auto path = dir / (std::string(task) + ".txt");
        if (!std::filesystem::exists(path)) continue;
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        t.*member_for(task) = parse_template_file(ss.str());
    }
    return t;
}

void PromptTemplates::save_dir(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (auto task : kTasks) {
        std::ofstream out(dir / (std::string(task) + ".txt"), std::ios::binary);
        out << format_template_file(get(task));
    }
}

gateway::ChatRequest make_request(std::string_view task, const PromptTemplate& tmpl,
                                  const std::map<std::string, std::string>& values, bool structured,
                                  std::optional<std::int64_t> seed) {
    gateway::ChatRequest req;
    req.task = std::string(task);
    req.system_prompt = render(tmpl.system, values);
    req.user_content = render(tmpl.user, values);
    req.expects_structured = structured;
    req.seed = seed;
    req.fields = values;
    return req;
}

}  // namespace iasr::prompts
