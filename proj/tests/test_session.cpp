#include "doctest.h"

#include "iasr/edit.hpp"
#include "iasr/session.hpp"
#include "iasr/utf8.hpp"
#include "support.hpp"

using namespace iasr;
using namespace iasr::session;
using testsupport::Gen;

namespace {

TurnRecord new_input(const std::string& text) {
    TurnRecord r;
    r.input_ref = "text:" + text;
    r.raw_hypothesis = text;
    r.corrected_instruction = text;
    r.intent = IntentLabel::new_input;
    r.resulting_state = text;
    return r;
}

TurnRecord confirmation(const TranscriptionState& s) {
    TurnRecord r;
    r.input_ref = "text:yes";
    r.raw_hypothesis = "yes";
    r.corrected_instruction = "yes";
    r.intent = IntentLabel::confirmation;
    r.resulting_state = s.current_text();
    return r;
}

TurnRecord correction(const TranscriptionState& s, EditInstruction edit) {
    TurnRecord r;
    r.input_ref = "text:fix";
    r.raw_hypothesis = "fix it";
    r.corrected_instruction = "fix it";
    r.intent = IntentLabel::correction;
    r.resulting_state = modify(s.current_text(), edit);
    r.edit = std::move(edit);
    return r;
}

}  // namespace

TEST_CASE("new_session starts empty and sessions are independent") {
    auto a = new_session();
    const auto b = new_session();
    CHECK(a.current_text().empty());
    CHECK(a.turn_index() == 0);
    CHECK(a.history().empty());
    a = apply_update(a, new_input("hello"));
    CHECK(a.current_text() == "hello");
    CHECK(a.turn_index() == 1);
    CHECK(b.turn_index() == 0);
    CHECK(b.current_text().empty());
}

TEST_CASE("update rule per intent") {
    auto s = apply_update(new_session(), new_input("book a table"));
    CHECK(apply_update(s, confirmation(s)).current_text() == "book a table");

    CHECK(apply_update(new_session(), new_input("call megan")).current_text() == "call megan");

    auto m = apply_update(new_session(), new_input("call morgan"));
    const auto fixed = apply_update(m, correction(m, {5, 11, "name misheard", "megan"}));
    CHECK(fixed.current_text() == "call megan");
    CHECK(fixed.history().back().edit->replacement == "megan");
}

TEST_CASE("records violating the update rule are rejected") {
    const auto s = apply_update(new_session(), new_input("call morgan"));

    auto bad_confirm = confirmation(s);
    bad_confirm.resulting_state = "call megan";
    CHECK_THROWS_AS(apply_update(s, bad_confirm), UpdateError);

    auto bad_new = new_input("x");
    bad_new.resulting_state = "y";
    CHECK_THROWS_AS(apply_update(s, bad_new), UpdateError);

    auto no_edit = correction(s, {5, 11, "", "megan"});
    no_edit.edit.reset();
    CHECK_THROWS_AS(apply_update(s, no_edit), UpdateError);

    auto wrong_result = correction(s, {5, 11, "", "megan"});
    wrong_result.resulting_state = "call meg";
    CHECK_THROWS_AS(apply_update(s, wrong_result), UpdateError);

    auto out_of_range = correction(s, {0, 0, "", ""});
    out_of_range.edit = EditInstruction{5, 40, "", "megan"};
    CHECK_THROWS(apply_update(s, out_of_range));
}

TEST_CASE("modify: splice arithmetic and whitespace seams") {
    CHECK(modify("call morgan tomorrow", {5, 11, "", "megan"}) == "call megan tomorrow");
    CHECK(modify("call morgan tomorrow", {11, 20, "", ""}) == "call morgan");
    CHECK(modify("a x b", {2, 3, "", ""}) == "a b");
    CHECK(modify("去见王小明", {3, 4, "", "晓"}) == "去见王晓明");
    CHECK_THROWS_AS(modify("abc", {2, 1, "", ""}), EditError);
    CHECK_THROWS_AS(modify("abc", {1, 4, "", ""}), EditError);
}

TEST_CASE("modify: an empty edit is the identity") {
    Gen g(41);
    for (int i = 0; i < 500; ++i) {
        const auto s = g.messy_text();
        const auto len = utf8::length(s);
        const std::size_t k = g.index(len + 1);
        CHECK(modify(s, {k, k, "", ""}) == s);
    }
}

TEST_CASE("modify is pure") {
    const std::string text = "call morgan tomorrow";
    const EditInstruction e{5, 11, "r", "megan"};
    CHECK(modify(text, e) == modify(text, e));
    CHECK(text == "call morgan tomorrow");
}

TEST_CASE("state invariants hold along random valid histories and replay reproduces them") {
    Gen g(42);
    const std::vector<std::string> words = {"call", "megan", "morgan", "at", "noon", "book", "a", "table"};
    for (int trial = 0; trial < 200; ++trial) {
        auto s = new_session();
        std::vector<TurnRecord> records;
        const int turns = g.between(1, 12);
        for (int t = 0; t < turns; ++t) {
            TurnRecord r;
            const int kind = s.current_text().empty() ? 0 : g.between(0, 2);
            if (kind == 0) {
                std::string text;
                for (int w = g.between(1, 5); w > 0; --w) text += (text.empty() ? "" : " ") + g.pick(words);
                r = new_input(text);
            } else if (kind == 1) {
                r = confirmation(s);
            } else {
                const auto len = utf8::length(s.current_text());
                std::size_t a = g.index(len + 1), b = g.index(len + 1);
                if (a > b) std::swap(a, b);
                r = correction(s, {a, b, "", g.coin() ? g.pick(words) : ""});
            }
            records.push_back(r);
            s = apply_update(s, r);
            CHECK(s.turn_index() == s.history().size());
            CHECK(s.current_text() == s.history().back().resulting_state);
        }
        CHECK(replay(records) == s);
        // the JSON form of each record replays to the same state
        std::vector<TurnRecord> decoded;
        for (const auto& r : records) decoded.push_back(turn_record_from_json(to_json(r)));
        CHECK(replay(decoded) == s);
    }
}

TEST_CASE("recent_states returns the last states oldest first") {
    auto s = new_session();
    for (const char* t : {"one", "two", "three"}) s = apply_update(s, new_input(t));
    CHECK(s.recent_states(2) == std::vector<std::string>{"two", "three"});
    CHECK(s.recent_states(10).size() == 3);
}

TEST_CASE("intent labels parse leniently and round-trip") {
    CHECK(parse_intent("Correction") == IntentLabel::correction);
    CHECK(parse_intent("new input") == IntentLabel::new_input);
    CHECK(parse_intent("new-input") == IntentLabel::new_input);
    CHECK(parse_intent("CONFIRMATION") == IntentLabel::confirmation);
    CHECK_FALSE(parse_intent("maybe").has_value());
    for (auto i : {IntentLabel::confirmation, IntentLabel::new_input, IntentLabel::correction}) {
        CHECK(parse_intent(to_string(i)) == i);
    }
}

TEST_CASE("state summary") {
    const auto s = apply_update(new_session(), new_input("hello"));
    CHECK(state_summary(s) == nlohmann::json{{"text", "hello"}, {"turn", 1}});
    CHECK(state_summary(new_session()) == nlohmann::json{{"text", ""}, {"turn", 0}});
}
