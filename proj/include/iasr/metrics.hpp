#pragma once

// Token-level ASR scoring: normalization, Levenshtein alignment, WER/CER/MER,
// entity-restricted error rate and Pearson correlation. Everything here is a
// pure function over its arguments.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iasr/error.hpp"

namespace iasr::metrics {

class MetricsError : public Error {
public:
    using Error::Error;
};

/// How normalized text is cut into tokens.
///  - word:      whitespace-delimited words
///  - character: one token per Unicode scalar value (whitespace dropped)
///  - mixed:     CJK scalars stand alone, maximal non-CJK runs form words
enum class Scheme { word, character, mixed };

enum class Metric { wer, cer, mer };

std::string_view to_string(Scheme scheme);
std::string_view to_string(Metric metric);
Scheme parse_scheme(std::string_view name);
Metric parse_metric(std::string_view name);
Scheme scheme_for(Metric metric);

/// True for scalars scored as standalone tokens under the mixed scheme
/// (Han, Hiragana, Katakana, Hangul, Bopomofo).
bool is_cjk(char32_t cp);

/// A normalized token plus the byte range it was taken from.
struct SourceToken {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct NormalizedTokens {
    std::vector<std::string> tokens;
    Scheme scheme = Scheme::word;
    std::string source_text;
};

/// Lowercases Latin script, removes punctuation (general category P*),
/// collapses whitespace and tokenizes. Apostrophes and hyphens between two
/// word characters are kept ("let's", "qwen3-asr") except under the
/// character scheme, where every punctuation scalar is removed.
NormalizedTokens normalize(std::string_view text, Scheme scheme);

/// Same tokenization as normalize(), keeping source byte ranges.
std::vector<SourceToken> tokenize(std::string_view text, Scheme scheme);

/// Inverse-ish of normalize: tokens joined by a space (no separator for the
/// character scheme). normalize(join(normalize(x))) == normalize(x).
std::string join(const NormalizedTokens& tokens);

enum class EditOp { match, substitution, deletion, insertion };

std::string_view to_string(EditOp op);

struct AlignmentStep {
    EditOp op = EditOp::match;
    std::optional<std::size_t> ref_index;
    std::optional<std::size_t> hyp_index;

    friend bool operator==(const AlignmentStep&, const AlignmentStep&) = default;
};

struct AlignmentResult {
    std::size_t substitutions = 0;
    std::size_t deletions = 0;
    std::size_t insertions = 0;
    std::size_t matches = 0;
    std::size_t ref_len = 0;
    std::vector<AlignmentStep> steps;

    std::size_t edits() const { return substitutions + deletions + insertions; }

    /// (S + D + I) / ref_len. An empty reference yields 0 for an empty
    /// hypothesis and I otherwise (i.e. the insertions over a denominator of 1).
    double error_rate() const;

    friend bool operator==(const AlignmentResult&, const AlignmentResult&) = default;
};

/// Minimum-edit alignment with unit costs. The backtrace prefers
/// match > substitution > deletion > insertion so results are reproducible.
AlignmentResult align(std::span<const std::string> ref, std::span<const std::string> hyp);

/// Throws MetricsError when the schemes differ.
AlignmentResult align(const NormalizedTokens& ref, const NormalizedTokens& hyp);

double error_rate(std::string_view ref, std::string_view hyp, Metric metric);

struct EntitySpan {
    std::size_t start = 0;  // inclusive token index
    std::size_t end = 0;    // exclusive
    std::string label;

    friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

/// Throws MetricsError on an empty list, an empty or out-of-range span, or
/// overlapping spans.
void validate_spans(std::span<const EntitySpan> spans, std::size_t ref_len);

/// Token-level entity error rate. Substitutions and deletions of reference
/// tokens inside a span count, as do insertions whose alignment position
/// falls strictly between two tokens of the same span. The denominator is
/// the number of reference tokens covered by spans.
double entity_error_rate(std::string_view ref, std::string_view hyp,
                         std::span<const EntitySpan> spans, Scheme scheme);

struct ScoreVector {
    std::vector<double> values;
};

/// Sample Pearson correlation. Requires equal lengths >= 2, finite values
/// and nonzero variance in both vectors.
double pearson(const ScoreVector& x, const ScoreVector& y);

}  // namespace iasr::metrics
