#include "iasr/instructions.hpp"

#include <algorithm>
#include <array>
#include <regex>
#include <vector>

#include "iasr/metrics.hpp"

namespace iasr {

std::string trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

std::string format_replace_instruction(std::string_view from, std::string_view to) {
    return "replace '" + std::string(from) + "' with '" + std::string(to) + "'";
}

std::optional<std::pair<std::string, std::string>> parse_replace_instruction(std::string_view text) {
    static const std::regex kPattern(R"(^\s*replace\s+'([\s\S]*)'\s+with\s+'([\s\S]*)'\s*\.?\s*$)",
                                     std::regex::icase);
    std::smatch m;
    const std::string s(text);
    if (!std::regex_match(s, m, kPattern)) return std::nullopt;
    return std::make_pair(m[1].str(), m[2].str());
}

bool is_affirmation(std::string_view text) {
    static constexpr std::array<std::string_view, 12> kPhrases = {
        "yes", "ok", "okay", "confirm", "confirmed", "correct", "right", "that's right", "that is right",
        "yes that's right", "yes that's correct", "looks good"};
    const auto norm = metrics::join(metrics::normalize(text, metrics::Scheme::word));
    for (auto p : kPhrases) {
        if (norm == p) return true;
    }
    return false;
}

std::optional<nlohmann::json> extract_json_object(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

}  // namespace iasr

namespace iasr {

std::optional<std::string> rule_based_feedback(std::string_view current, std::string_view reference) {
    using metrics::Scheme;
    const auto cur = metrics::tokenize(current, Scheme::mixed);
    const auto ref = metrics::tokenize(reference, Scheme::mixed);
    std::vector<std::string> cur_tokens;
    std::vector<std::string> ref_tokens;
    for (const auto& t : cur) cur_tokens.push_back(t.text);
    for (const auto& t : ref) ref_tokens.push_back(t.text);
    if (cur_tokens == ref_tokens) return std::nullopt;
    if (cur_tokens.empty()) return trim(reference);

    const auto steps = metrics::align(ref_tokens, cur_tokens).steps;
    const std::size_t n = steps.size();
    std::size_t lo = 0;
    while (lo < n && steps[lo].op == metrics::EditOp::match) ++lo;
    std::size_t hi = lo;
    while (hi < n && steps[hi].op != metrics::EditOp::match) ++hi;

    // Byte range covered by the steps [lo, hi) on one side.
    auto byte_range = [&](bool current_side) -> std::optional<std::pair<std::size_t, std::size_t>> {
        std::optional<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& idx = current_side ? steps[i].hyp_index : steps[i].ref_index;
            if (!idx) continue;
            const auto& tok = current_side ? cur[*idx] : ref[*idx];
            if (!out) out.emplace(tok.begin, tok.end);
            out->first = std::min(out->first, tok.begin);
            out->second = std::max(out->second, tok.end);
        }
        return out;
    };

    std::string from;
    for (;;) {
        if (const auto c = byte_range(true)) {
            from = std::string(current.substr(c->first, c->second - c->first));
            if (current.find(from) == c->first) break;
        }
        if (lo > 0) {
            --lo;
        } else if (hi < n) {
            ++hi;
        } else {
            break;
        }
    }
    std::string to;
    if (const auto r = byte_range(false)) to = std::string(reference.substr(r->first, r->second - r->first));
    return format_replace_instruction(from, to);
}

}  // namespace iasr
