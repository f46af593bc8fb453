#include "doctest.h"

#include <atomic>

#include "iasr/instructions.hpp"
#include "iasr/pipeline.hpp"
#include "iasr/utf8.hpp"
#include "support.hpp"

using namespace iasr;
using namespace iasr::pipeline;
using gateway::AudioRef;
using session::IntentLabel;
using session::TranscriptionState;
using testsupport::Gen;

namespace {

using Script = std::function<std::string(const gateway::ChatRequest&)>;

AgentPipeline scripted(Script script, std::shared_ptr<gateway::AsrClient> asr = nullptr) {
    if (!asr) asr = std::make_shared<gateway::IdentityAsr>();
    return AgentPipeline({asr, std::make_shared<gateway::FunctionLlm>(std::move(script))});
}

TranscriptionState with_text(const std::string& text) {
    session::TurnRecord r;
    r.input_ref = "text:" + text;
    r.raw_hypothesis = r.corrected_instruction = r.resulting_state = text;
    r.intent = IntentLabel::new_input;
    return session::apply_update(session::new_session(), r);
}

// The rendered request a pipeline stage sends for `values`.
gateway::ChatRequest request_for(const std::string& task, const std::map<std::string, std::string>& values) {
    const auto t = prompts::PromptTemplates::defaults();
    return prompts::make_request(task, t.get(task), values, task != "refine");
}

}  // namespace

TEST_CASE("resolve_span: leftmost exact, then case-insensitive") {
    CHECK(resolve_span("call morgan tomorrow", "morgan") == std::make_pair<std::size_t, std::size_t>(5, 11));
    CHECK(resolve_span("call morgan tomorrow", "Morgan") == std::make_pair<std::size_t, std::size_t>(5, 11));
    CHECK(resolve_span("call morgan tomorrow", "call morgan tomorrow") ==
          std::make_pair<std::size_t, std::size_t>(0, 20));
    CHECK(resolve_span("Ab ab", "ab") == std::make_pair<std::size_t, std::size_t>(3, 5));
    CHECK(resolve_span("Ab xx", "ab") == std::make_pair<std::size_t, std::size_t>(0, 2));
    CHECK(resolve_span("去见王小明", "小明") == std::make_pair<std::size_t, std::size_t>(3, 5));
    CHECK_FALSE(resolve_span("call morgan", "megan").has_value());
    CHECK_FALSE(resolve_span("call morgan", "").has_value());
}

TEST_CASE("semantic correction from a registered fixture") {
    auto llm = std::make_shared<gateway::FixtureLlm>();
    const auto state = with_text("call morgan");
    llm->add(request_for("refine",
                         {{"hypothesis", "no no its megan with an e"}, {"history", "(none)"}, {"current", "call morgan"}}),
             "Replace 'Morgan' with 'Megan'");
    llm->add(request_for("refine",
                         {{"hypothesis", "Replace 'Morgan' with 'Megan'"}, {"history", "(none)"}, {"current", "call morgan"}}),
             "Replace 'Morgan' with 'Megan'");
    AgentPipeline p({std::make_shared<gateway::IdentityAsr>(), llm});
    CHECK(p.semantic_correction("no no its megan with an e", state) == "Replace 'Morgan' with 'Megan'");
    CHECK(p.semantic_correction("Replace 'Morgan' with 'Megan'", state) == "Replace 'Morgan' with 'Megan'");
}

TEST_CASE("semantic correction falls back to the hypothesis after two empty answers") {
    std::atomic<int> calls{0};
    auto p = scripted([&](const gateway::ChatRequest&) {
        ++calls;
        return std::string("   ");
    });
    CHECK(p.semantic_correction("call megan", session::new_session()) == "call megan");
    CHECK(calls == 2);
}

TEST_CASE("route: turn zero needs no model call") {
    std::atomic<int> calls{0};
    auto p = scripted([&](const gateway::ChatRequest&) {
        ++calls;
        return std::string(R"({"intent": "correction"})");
    });
    CHECK(p.route_intent("anything at all", session::new_session()) == IntentLabel::new_input);
    CHECK(calls == 0);
    CHECK(p.route_intent("fix it", with_text("x")) == IntentLabel::correction);
}

TEST_CASE("route: an unusable label is re-asked once, then a routing error") {
    std::atomic<int> calls{0};
    auto p = scripted([&](const gateway::ChatRequest&) {
        ++calls;
        return std::string("maybe");
    });
    try {
        p.route_intent("hmm", with_text("x"));
        FAIL("expected RoutingError");
    } catch (const RoutingError& e) {
        CHECK(e.raw_output() == "maybe");
    }
    CHECK(calls == 2);

    int n = 0;
    auto second_try = scripted([&](const gateway::ChatRequest&) {
        return std::string(++n == 1 ? "???" : "```json\n{\"intent\": \"confirmation\"}\n```");
    });
    CHECK(second_try.route_intent("yes", with_text("x")) == IntentLabel::confirmation);
}

TEST_CASE("locate and reason") {
    const auto state = with_text("call morgan tomorrow");
    auto p = scripted([](const gateway::ChatRequest& r) -> std::string {
        if (r.task == "locate") return R"({"target": "morgan"})";
        if (r.task == "reason") return R"({"replacement": " Megan ", "rationale": "misheard name"})";
        return "";
    });
    CHECK(p.locate("Replace 'Morgan' with 'Megan'", state) == std::make_pair<std::size_t, std::size_t>(5, 11));
    const auto [replacement, why] = p.reason("Replace 'Morgan' with 'Megan'", "morgan", state);
    CHECK(replacement == "Megan");
    CHECK(why == "misheard name");

    auto deleter = scripted([](const gateway::ChatRequest&) { return std::string(R"({"replacement": ""})"); });
    CHECK(deleter.reason("delete the last word", "tomorrow", state).first.empty());

    auto absent = scripted([](const gateway::ChatRequest&) { return std::string(R"({"target": "megan"})"); });
    CHECK_THROWS_AS(absent.locate("x", state), LocateError);
}

TEST_CASE("reason sees both the raw hypothesis and the refined instruction") {
    std::map<std::string, std::string> seen;
    auto p = scripted([&](const gateway::ChatRequest& r) {
        seen = r.fields;
        return std::string(R"({"replacement": "megan"})");
    });
    p.reason("Replace 'Morgan' with 'Megan'", "morgan", with_text("call morgan"), "no its megan");
    CHECK(seen.at("instruction") == "Replace 'Morgan' with 'Megan'");
    CHECK(seen.at("hypothesis") == "no its megan");
    CHECK(seen.at("span") == "morgan");
}

TEST_CASE("two-turn name repair with fixture backends") {
    auto asr = std::make_shared<gateway::CorruptAsr>(std::map<std::string, std::string>{{"megan", "morgan"}});
    auto llm = std::make_shared<gateway::FixtureLlm>();
    // turn 1: the recognizer mishears the name
    llm->add(request_for("refine", {{"hypothesis", "call morgan"}, {"history", "(none)"}, {"current", "(empty)"}}),
             "call morgan");
    // turn 2: the spoken fix passes through the same recognizer
    const std::map<std::string, std::string> ctx = {{"history", "(none)"}, {"current", "call morgan"}};
    auto with = [&](std::map<std::string, std::string> extra) {
        extra.insert(ctx.begin(), ctx.end());
        return extra;
    };
    const std::string instr = "Replace 'Morgan' with 'Megan'";
    llm->add(request_for("refine", with({{"hypothesis", "no no its morgan with an e"}})), instr);
    llm->add(request_for("route", with({{"instruction", instr}})), R"({"intent": "correction"})");
    llm->add(request_for("locate", with({{"instruction", instr}})), R"({"target": "Morgan"})");
    llm->add(request_for("reason", with({{"instruction", instr}, {"span", "morgan"}, {"hypothesis", "no no its morgan with an e"}})),
             R"({"replacement": "Megan", "rationale": "the user spelled the name"})");

    AgentPipeline p({asr, llm});
    auto s = session::new_session();
    const auto r1 = p.run_turn(s, AudioRef::text("call megan"));
    CHECK(r1.intent == IntentLabel::new_input);
    s = session::apply_update(s, r1);
    CHECK(s.current_text() == "call morgan");

    const auto r2 = p.run_turn(s, AudioRef::text("no no its megan with an e"));
    CHECK_FALSE(r2.error_note.has_value());
    CHECK(r2.intent == IntentLabel::correction);
    REQUIRE(r2.edit.has_value());
    CHECK(r2.edit->start == 5);
    CHECK(r2.edit->end == 11);
    s = session::apply_update(s, r2);
    CHECK(s.current_text() == "call Megan");
    CHECK(s.turn_index() == 2);
}

TEST_CASE("confirmation turn keeps the state") {
    auto p = scripted([](const gateway::ChatRequest& r) -> std::string {
        if (r.task == "refine") return r.fields.at("hypothesis");
        return R"({"intent": "confirmation"})";
    });
    const auto s = with_text("book a table");
    const auto r = p.run_turn(s, AudioRef::text("yes that's right"));
    CHECK(r.intent == IntentLabel::confirmation);
    CHECK(r.resulting_state == "book a table");
    CHECK(session::apply_update(s, r).current_text() == "book a table");
}

TEST_CASE("failed stages degrade to a state-preserving turn with a note") {
    const auto s = with_text("call morgan");
    auto locate_fails = scripted([](const gateway::ChatRequest& r) -> std::string {
        if (r.task == "refine") return r.fields.at("hypothesis");
        if (r.task == "route") return R"({"intent": "correction"})";
        return R"({"target": "nowhere"})";
    });
    const auto r = locate_fails.run_turn(s, AudioRef::text("fix the name"));
    CHECK(r.intent == IntentLabel::confirmation);
    CHECK(r.resulting_state == "call morgan");
    REQUIRE(r.error_note.has_value());
    CHECK(r.error_note->rfind("locate", 0) == 0);
    CHECK_NOTHROW(session::apply_update(s, r));

    auto backend_broken = scripted([](const gateway::ChatRequest&) -> std::string {
        throw gateway::BackendError("HTTP 400", 1, 400);
    });
    const auto r2 = backend_broken.run_turn(s, AudioRef::text("hello"));
    CHECK(r2.resulting_state == "call morgan");
    CHECK(r2.error_note.has_value());

    auto unreachable = scripted([](const gateway::ChatRequest&) -> std::string {
        throw gateway::TransportError("down", 3);
    });
    CHECK_THROWS_AS(unreachable.run_turn(s, AudioRef::text("hello")), gateway::TransportError);

    const auto r3 = scripted([](const gateway::ChatRequest&) { return std::string("x"); })
                        .run_turn(s, AudioRef::file("/nonexistent/audio.wav"));
    CHECK(r3.resulting_state == "call morgan");
    CHECK(r3.error_note->rfind("transcribe", 0) == 0);
}

TEST_CASE("a correction on an empty transcript becomes new input") {
    auto p = scripted([](const gateway::ChatRequest& r) -> std::string {
        if (r.task == "refine") return r.fields.at("hypothesis");
        return R"({"intent": "correction"})";
    });
    // turn 1 with an empty resulting state so routing is consulted
    session::TurnRecord blank;
    blank.input_ref = "text:";
    blank.intent = IntentLabel::new_input;
    const auto s = session::apply_update(session::new_session(), blank);
    const auto r = p.run_turn(s, AudioRef::text("replace 'a' with 'b'"));
    CHECK(r.intent == IntentLabel::new_input);
    CHECK(r.resulting_state == "replace 'a' with 'b'");
    CHECK(r.error_note.has_value());
}

TEST_CASE("identity mocks are a fixpoint for new input then confirmation") {
    AgentPipeline p({std::make_shared<gateway::IdentityAsr>(), std::make_shared<gateway::RulesLlm>()});
    Gen g(61);
    for (int i = 0; i < 100; ++i) {
        std::string s = g.messy_text();
        if (trim(s).empty()) s = "hello";
        if (is_affirmation(s) || parse_replace_instruction(s)) continue;
        auto state = session::new_session();
        state = session::apply_update(state, p.run_turn(state, AudioRef::text(s)));
        state = session::apply_update(state, p.run_turn(state, AudioRef::text("yes")));
        CHECK(state.current_text() == trim(s));
        CHECK(state.turn_index() == 2);
    }
}

TEST_CASE("randomized backends never yield an invalid turn") {
    Gen g(62);
    const std::vector<std::string> words = {"call", "megan", "morgan", "Megan", "at", "noon", "去", "见", "王"};
    for (int trial = 0; trial < 60; ++trial) {
        auto rng = std::make_shared<Gen>(1000 + trial);
        auto p = scripted([rng, &words](const gateway::ChatRequest& r) -> std::string {
            auto& gen = *rng;
            switch (gen.between(0, 5)) {
                case 0: return "";
                case 1: return "garbage {";
                default: break;
            }
            if (r.task == "refine") return gen.coin(0.8) ? r.fields.at("hypothesis") : gen.pick(words);
            if (r.task == "route") {
                static const std::vector<std::string> labels = {"confirmation", "new_input", "correction", "nope"};
                return nlohmann::json{{"intent", gen.pick(labels)}}.dump();
            }
            if (r.task == "locate") return nlohmann::json{{"target", gen.pick(words)}}.dump();
            if (r.task == "reason") return nlohmann::json{{"replacement", gen.coin() ? gen.pick(words) : ""}}.dump();
            return "";
        });
        auto s = session::new_session();
        for (int t = 0; t < 15; ++t) {
            std::string utterance;
            for (int w = g.between(1, 4); w > 0; --w) utterance += (utterance.empty() ? "" : " ") + g.pick(words);
            const auto record = p.run_turn(s, AudioRef::text(utterance));
            REQUIRE_NOTHROW(s = session::apply_update(s, record));
            if (record.intent == IntentLabel::correction) {
                REQUIRE(record.edit.has_value());
                const auto& prev = s.history().size() >= 2 ? s.history()[s.history().size() - 2].resulting_state
                                                           : std::string();
                CHECK(record.resulting_state == modify(prev, *record.edit));
            }
        }
    }
}

TEST_CASE("prompt templates: slots, rendering and file format") {
    CHECK(prompts::slot_names("Fix {current} using {instruction}; keep {\"json\": 1} and {current}") ==
          std::vector<std::string>{"current", "instruction"});
    CHECK(prompts::render("{a}-{b}", {{"a", "1"}, {"b", "{a}"}}) == "1-{a}");
    CHECK_THROWS_AS(prompts::render("{a} {missing}", {{"a", "1"}}), prompts::TemplateError);

    const auto defaults = prompts::PromptTemplates::defaults();
    for (const char* task : {"refine", "route", "locate", "reason", "judge", "simulate"}) {
        const auto& t = defaults.get(task);
        const auto parsed = prompts::parse_template_file(prompts::format_template_file(t));
        CHECK(parsed.system == t.system);
        CHECK(parsed.user == t.user);
    }
    auto slots = defaults.refine.slots();
    std::sort(slots.begin(), slots.end());
    CHECK(slots == std::vector<std::string>{"current", "history", "hypothesis"});
}

TEST_CASE("shipped prompt files match the built-in templates") {
    const auto shipped = prompts::PromptTemplates::load_dir(std::filesystem::path(IASR_SOURCE_DIR) / "prompts");
    const auto defaults = prompts::PromptTemplates::defaults();
    for (const char* task : {"refine", "route", "locate", "reason", "judge", "simulate"}) {
        INFO(task);
        CHECK(std::filesystem::exists(std::filesystem::path(IASR_SOURCE_DIR) / "prompts" / (std::string(task) + ".txt")));
        CHECK(shipped.get(task).system == defaults.get(task).system);
        CHECK(shipped.get(task).user == defaults.get(task).user);
    }
}

TEST_CASE("template overrides from a directory") {
    testsupport::TempDir dir;
    auto t = prompts::PromptTemplates::defaults();
    t.route.system = "Custom router.";
    t.save_dir(dir.path());
    CHECK(prompts::PromptTemplates::load_dir(dir.path()).route.system == "Custom router.");
}

TEST_CASE("JSON extraction from model output") {
    CHECK(extract_json_object(R"({"a": 1})")->at("a") == 1);
    CHECK(extract_json_object("Sure! Here it is:\n```json\n{\"target\": \"x\"}\n```\nanything else?")->at("target") ==
          "x");
    CHECK(extract_json_object("prefix {\"k\": \"v}\"} suffix")->at("k") == "v}");
    CHECK_FALSE(extract_json_object("no json here").has_value());
    CHECK_FALSE(extract_json_object("{broken").has_value());
}

TEST_CASE("replace instructions round-trip") {
    const auto s = format_replace_instruction("a widow", "the window");
    CHECK(s == "replace 'a widow' with 'the window'");
    CHECK(parse_replace_instruction(s) == std::make_pair(std::string("a widow"), std::string("the window")));
    CHECK(parse_replace_instruction("  Replace 'Morgan' with 'Megan'. ") ==
          std::make_pair(std::string("Morgan"), std::string("Megan")));
    CHECK_FALSE(parse_replace_instruction("call megan").has_value());
    CHECK(is_affirmation("Yes"));
    CHECK(is_affirmation("that's right"));
    CHECK_FALSE(is_affirmation("call megan"));
}
