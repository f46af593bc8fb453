#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "iasr/metrics.hpp"

namespace iasr::metrics {

std::string_view to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::word: return "word";
        case Scheme::character: return "char";
        case Scheme::mixed: return "mixed";
    }
    return "word";
}

std::string_view to_string(Metric metric) {
    switch (metric) {
        case Metric::wer: return "wer";
        case Metric::cer: return "cer";
        case Metric::mer: return "mer";
    }
    return "wer";
}

std::string_view to_string(EditOp op) {
    switch (op) {
        case EditOp::match: return "match";
        case EditOp::substitution: return "sub";
        case EditOp::deletion: return "del";
        case EditOp::insertion: return "ins";
    }
    return "match";
}

Scheme parse_scheme(std::string_view name) {
    if (name == "word") return Scheme::word;
    if (name == "char" || name == "character") return Scheme::character;
    if (name == "mixed") return Scheme::mixed;
    throw MetricsError("unknown tokenization scheme: " + std::string(name));
}

Metric parse_metric(std::string_view name) {
    if (name == "wer") return Metric::wer;
    if (name == "cer") return Metric::cer;
    if (name == "mer") return Metric::mer;
    throw MetricsError("unknown metric: " + std::string(name));
}

Scheme scheme_for(Metric metric) {
    switch (metric) {
        case Metric::wer: return Scheme::word;
        case Metric::cer: return Scheme::character;
        case Metric::mer: return Scheme::mixed;
    }
    return Scheme::word;
}

double AlignmentResult::error_rate() const {
    if (ref_len == 0) return static_cast<double>(insertions);
    return static_cast<double>(edits()) / static_cast<double>(ref_len);
}

AlignmentResult align(std::span<const std::string> ref, std::span<const std::string> hyp) {
    const std::size_t n = ref.size();
    const std::size_t m = hyp.size();
    const std::size_t width = m + 1;
    std::vector<std::uint32_t> cost((n + 1) * width);
    auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return cost[i * width + j]; };

    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<std::uint32_t>(i);
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<std::uint32_t>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::uint32_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
        }
    }

    AlignmentResult result;
    result.ref_len = n;
    std::size_t i = n;
    std::size_t j = m;
    while (i > 0 || j > 0) {
        const std::uint32_t here = at(i, j);
        if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && here == at(i - 1, j - 1)) {
            result.steps.push_back({EditOp::match, i - 1, j - 1});
            ++result.matches;
            --i;
            --j;
        } else if (i > 0 && j > 0 && ref[i - 1] != hyp[j - 1] && here == at(i - 1, j - 1) + 1) {
            result.steps.push_back({EditOp::substitution, i - 1, j - 1});
            ++result.substitutions;
            --i;
            --j;
        } else if (i > 0 && here == at(i - 1, j) + 1) {
            result.steps.push_back({EditOp::deletion, i - 1, std::nullopt});
            ++result.deletions;
            --i;
        } else {
            result.steps.push_back({EditOp::insertion, std::nullopt, j - 1});
            ++result.insertions;
            --j;
        }
    }
    std::reverse(result.steps.begin(), result.steps.end());
    return result;
}

AlignmentResult align(const NormalizedTokens& ref, const NormalizedTokens& hyp) {
    if (ref.scheme != hyp.scheme) {
        throw MetricsError("cannot align " + std::string(to_string(ref.scheme)) + " tokens against " +
                           std::string(to_string(hyp.scheme)) + " tokens");
    }
    return align(std::span<const std::string>(ref.tokens), std::span<const std::string>(hyp.tokens));
}

double error_rate(std::string_view ref, std::string_view hyp, Metric metric) {
    const Scheme scheme = scheme_for(metric);
    return align(normalize(ref, scheme), normalize(hyp, scheme)).error_rate();
}

void validate_spans(std::span<const EntitySpan> spans, std::size_t ref_len) {
    if (spans.empty()) throw MetricsError("entity error rate is undefined without entity spans");
    std::vector<EntitySpan> sorted(spans.begin(), spans.end());
    for (const auto& s : sorted) {
        if (s.start >= s.end || s.end > ref_len) {
            throw MetricsError("entity span (" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                               ") is out of range for " + std::to_string(ref_len) + " reference tokens");
        }
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
    for (std::size_t k = 1; k < sorted.size(); ++k) {
        if (sorted[k].start < sorted[k - 1].end) {
            throw MetricsError("entity spans (" + std::to_string(sorted[k - 1].start) + ", " +
                               std::to_string(sorted[k - 1].end) + ") and (" + std::to_string(sorted[k].start) +
                               ", " + std::to_string(sorted[k].end) + ") overlap");
        }
    }
}

double entity_error_rate(std::string_view ref, std::string_view hyp, std::span<const EntitySpan> spans,
                         Scheme scheme) {
    const auto r = normalize(ref, scheme);
    const auto h = normalize(hyp, scheme);
    validate_spans(spans, r.tokens.size());

    auto inside = [&](std::size_t idx) {
        return std::any_of(spans.begin(), spans.end(),
                           [&](const EntitySpan& s) { return s.start <= idx && idx < s.end; });
    };
    auto strictly_inside = [&](std::size_t cursor) {
        return std::any_of(spans.begin(), spans.end(),
                           [&](const EntitySpan& s) { return s.start < cursor && cursor < s.end; });
    };

    const auto alignment = align(r, h);
    std::size_t errors = 0;
    std::size_t cursor = 0;  // reference tokens consumed so far
    for (const auto& step : alignment.steps) {
        switch (step.op) {
            case EditOp::match:
                ++cursor;
                break;
            case EditOp::substitution:
            case EditOp::deletion:
                if (inside(*step.ref_index)) ++errors;
                ++cursor;
                break;
            case EditOp::insertion:
                if (strictly_inside(cursor)) ++errors;
                break;
        }
    }
    const std::size_t covered = std::accumulate(
        spans.begin(), spans.end(), std::size_t{0},
        [](std::size_t acc, const EntitySpan& s) { return acc + (s.end - s.start); });
    return static_cast<double>(errors) / static_cast<double>(covered);
}

double pearson(const ScoreVector& x, const ScoreVector& y) {
    const auto& a = x.values;
    const auto& b = y.values;
    if (a.size() != b.size()) throw MetricsError("pearson: vectors differ in length");
    if (a.size() < 2) throw MetricsError("pearson: at least two observations are required");
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(a.begin(), a.end(), finite) || !std::all_of(b.begin(), b.end(), finite)) {
        throw MetricsError("pearson: non-finite score");
    }
    const double n = static_cast<double>(a.size());
    const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw MetricsError("pearson: zero variance");
    const double r = sab / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

}  // namespace iasr::metrics
