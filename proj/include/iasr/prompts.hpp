#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iasr/error.hpp"
#include "iasr/gateway.hpp"

namespace iasr::prompts {

class TemplateError : public Error {
public:
    using Error::Error;
};

/// A system prompt plus a user-message template. Slots are written
/// `{name}` with name in [A-Za-z_]; any other brace is literal text.
struct PromptTemplate {
    std::string system;
    std::string user;

    std::vector<std::string> slots() const;
};

/// Every prompt the system sends. On disk each lives in `<task>.txt`: the
/// system prompt, a line containing only `---`, then the user template.
struct PromptTemplates {
    PromptTemplate refine;    // {hypothesis} {history} {current}
    PromptTemplate route;     // {instruction} {history} {current}
    PromptTemplate locate;    // {instruction} {current}
    PromptTemplate reason;    // {instruction} {hypothesis} {span} {current}
    PromptTemplate judge;     // {first} {second}
    PromptTemplate simulate;  // {current} {reference}

    static PromptTemplates defaults();
    /// Starts from defaults() and replaces every template whose file exists
    /// in `dir`.
    static PromptTemplates load_dir(const std::filesystem::path& dir);
    void save_dir(const std::filesystem::path& dir) const;

    const PromptTemplate& get(std::string_view task) const;
};

std::vector<std::string> slot_names(std::string_view text);

/// Substitutes every slot; throws TemplateError naming the first slot that
/// has no value.
std::string render(std::string_view text, const std::map<std::string, std::string>& values);

PromptTemplate parse_template_file(std::string_view contents);
std::string format_template_file(const PromptTemplate& tmpl);

/// Renders `tmpl` into a request tagged with `task` and its slot values.
gateway::ChatRequest make_request(std::string_view task, const PromptTemplate& tmpl,
                                  const std::map<std::string, std::string>& values, bool structured,
                                  std::optional<std::int64_t> seed = std::nullopt);

}  // namespace iasr::prompts
