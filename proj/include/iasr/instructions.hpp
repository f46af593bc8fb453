#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "json.hpp"

namespace iasr {

/// "replace '<from>' with '<to>'"; the phrasing the rule-based user
/// simulator speaks and the rule-based backend understands.
std::string format_replace_instruction(std::string_view from, std::string_view to);

/// Parses the phrasing above (case-insensitive keywords, surrounding
/// whitespace and a trailing period tolerated).
std::optional<std::pair<std::string, std::string>> parse_replace_instruction(std::string_view text);

/// The rule-based user simulator: aligns the two texts (mixed scheme) and
/// asks for the first differing span of `current` to be replaced by the
/// corresponding span of `reference`, widened with neighbouring tokens until
/// the quoted span is the leftmost occurrence of itself in `current`. An
/// empty `current` yields the reference verbatim. nullopt when the texts
/// already normalize to the same tokens.
std::optional<std::string> rule_based_feedback(std::string_view current, std::string_view reference);

/// Short acceptances such as "yes", "ok", "that's right", "confirm".
bool is_affirmation(std::string_view text);

/// Finds the first JSON object embedded in LLM output (bare, fenced in
/// ``` blocks, or surrounded by prose). nullopt when none parses.
std::optional<nlohmann::json> extract_json_object(std::string_view text);

std::string trim(std::string_view s);

}  // namespace iasr
