#include <unicode/uchar.h>
#include <unicode/uscript.h>

#include "iasr/metrics.hpp"
#include "iasr/utf8.hpp"

namespace iasr::metrics {

namespace {

enum class Kind { space, punct, cjk, other };

Kind classify(char32_t cp) {
    const auto c = static_cast<UChar32>(cp);
    if (u_isUWhiteSpace(c)) return Kind::space;
    if ((U_GET_GC_MASK(c) & U_GC_P_MASK) != 0) return Kind::punct;
    if (is_cjk(cp)) return Kind::cjk;
    return Kind::other;
}

// Connectors survive when they join two word characters. Typographic forms
// are folded to their ASCII spelling so "let’s" and "let's" agree.
std::optional<char32_t> connector_form(char32_t cp) {
    switch (cp) {
        case U'\'':
        case U'’':
            return U'\'';
        case U'-':
        case U'‐':
        case U'‑':
            return U'-';
        default:
            return std::nullopt;
    }
}

char32_t fold_latin(char32_t cp) {
    const auto c = static_cast<UChar32>(cp);
    UErrorCode status = U_ZERO_ERROR;
    if (uscript_getScript(c, &status) == USCRIPT_LATIN && U_SUCCESS(status)) {
        return static_cast<char32_t>(u_tolower(c));
    }
    return cp;
}

}  // namespace

bool is_cjk(char32_t cp) {
    UErrorCode status = U_ZERO_ERROR;
    const UScriptCode script = uscript_getScript(static_cast<UChar32>(cp), &status);
    if (U_FAILURE(status)) return false;
    switch (script) {
        case USCRIPT_HAN:
        case USCRIPT_HIRAGANA:
        case USCRIPT_KATAKANA:
        case USCRIPT_HANGUL:
        case USCRIPT_BOPOMOFO:
            return true;
        default:
            return false;
    }
}

std::vector<SourceToken> tokenize(std::string_view text, Scheme scheme) {
    const auto scalars = utf8::decode(text);
    std::vector<Kind> kinds(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) kinds[i] = classify(scalars[i].value);

    // A scalar that may sit inside a word token.
    auto wordish = [&](std::size_t i) {
        if (kinds[i] == Kind::other) return true;
        return kinds[i] == Kind::cjk && scheme == Scheme::word;
    };

    std::vector<SourceToken> out;
    std::optional<SourceToken> current;
    auto flush = [&] {
        if (current) out.push_back(std::move(*current));
        current.reset();
    };
    auto extend = [&](const utf8::Scalar& s, char32_t cp) {
        if (!current) current = SourceToken{{}, s.begin, s.end};
        utf8::append(current->text, cp);
        current->end = s.end;
    };

    for (std::size_t i = 0; i < scalars.size(); ++i) {
        const auto& s = scalars[i];
        switch (kinds[i]) {
            case Kind::space:
                flush();
                break;
            case Kind::punct: {
                if (scheme == Scheme::character) break;
                const auto form = connector_form(s.value);
                if (form && current && i > 0 && i + 1 < scalars.size() && wordish(i - 1) &&
                    wordish(i + 1)) {
                    extend(s, *form);
                }
                // other punctuation is dropped without splitting the token
                break;
            }
            case Kind::cjk:
                if (scheme == Scheme::word) {
                    extend(s, s.value);
                } else {
                    flush();
                    extend(s, s.value);
                    flush();
                }
                break;
            case Kind::other:
                extend(s, fold_latin(s.value));
                if (scheme == Scheme::character) flush();
                break;
        }
    }
    flush();
    return out;
}

NormalizedTokens normalize(std::string_view text, Scheme scheme) {
    NormalizedTokens result;
    result.scheme = scheme;
    result.source_text = std::string(text);
    for (auto& tok : tokenize(text, scheme)) result.tokens.push_back(std::move(tok.text));
    return result;
}

std::string join(const NormalizedTokens& tokens) {
    const std::string_view sep = tokens.scheme == Scheme::character ? "" : " ";
    std::string out;
    for (std::size_t i = 0; i < tokens.tokens.size(); ++i) {
        if (i > 0) out += sep;
        out += tokens.tokens[i];
    }
    return out;
}

}  // namespace iasr::metrics
