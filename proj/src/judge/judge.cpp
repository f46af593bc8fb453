#include "iasr/judge.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "iasr/instructions.hpp"
#include "iasr/metrics.hpp"
#include "iasr/parallel.hpp"

namespace iasr::judge {

namespace {

constexpr std::string_view kShortCircuit = "<decided without backend>";

bool empty_after_normalization(std::string_view s) {
    return metrics::normalize(s, metrics::Scheme::mixed).tokens.empty();
}

}  // namespace

bool vote(std::span<const RoundBits> rounds) {
    std::size_t positive = 0;
    for (const auto& r : rounds) positive += (r.forward && r.backward) ? 1 : 0;
    return positive >= (rounds.size() + 1) / 2 && !rounds.empty();
}

bool JudgeVerdict::consistent() const {
    return rounds.size() == static_cast<std::size_t>(k) && label == vote(rounds);
}

double s2er(std::span<const int> labels) {
    if (labels.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double failures = std::accumulate(labels.begin(), labels.end(), 0.0,
                                            [](double acc, int z) { return acc + (1 - z); });
    return failures / static_cast<double>(labels.size());
}

bool valid_k(int k) { return k >= 1 && k <= 7 && k % 2 == 1; }

std::int64_t sample_seed(std::int64_t base, std::string_view sample_id) {
    const auto digest = gateway::fnv1a_hex(sample_id);
    return base + static_cast<std::int64_t>(std::stoull(digest.substr(0, 8), nullptr, 16));
}

Judge::Judge(std::shared_ptr<gateway::LlmClient> llm, prompts::PromptTemplate judge_template, JudgeOptions options)
    : llm_(std::move(llm)), template_(std::move(judge_template)), options_(options) {
    if (!llm_) throw InvalidArgument("judge needs an LLM backend");
    if (!valid_k(options_.k)) throw InvalidArgument("judge k must be odd and within [1, 7]");
}

bool Judge::judge_once(std::string_view hypothesis, std::string_view reference, Order order,
                       std::optional<std::int64_t> seed, std::string* raw) const {
    if (hypothesis == reference) {
        if (raw) *raw = kShortCircuit;
        return true;
    }
    const bool hyp_empty = empty_after_normalization(hypothesis);
    const bool ref_empty = empty_after_normalization(reference);
    if (hyp_empty || ref_empty) {
        if (raw) *raw = kShortCircuit;
        return hyp_empty && ref_empty;
    }

    const bool forward = order == Order::forward;
    const std::map<std::string, std::string> values = {
        {"first", std::string(forward ? hypothesis : reference)},
        {"second", std::string(forward ? reference : hypothesis)}};
    const auto request = prompts::make_request("judge", template_, values, true, seed);
    std::string answer;
    for (int attempt = 0; attempt < 2; ++attempt) {
        answer = llm_->complete(request);
        if (auto obj = extract_json_object(answer); obj && obj->contains("equivalent") &&
                                                    obj->at("equivalent").is_boolean()) {
            if (raw) *raw = answer;
            return obj->at("equivalent").get<bool>();
        }
    }
    spdlog::warn("judge answer unparseable after re-ask, counting as not equivalent: {}", answer);
    if (raw) *raw = answer;
    return false;
}

JudgeVerdict Judge::judge(std::string_view hypothesis, std::string_view reference) const {
    return judge(hypothesis, reference, options_.k, options_.seed);
}

JudgeVerdict Judge::judge(std::string_view hypothesis, std::string_view reference, int k,
                          std::int64_t seed_base) const {
    if (!valid_k(k)) throw InvalidArgument("judge k must be odd and within [1, 7]");
    JudgeVerdict verdict;
    verdict.k = k;
    for (int r = 0; r < k; ++r) {
        const std::int64_t seed = seed_base + r;
        std::string raw_f;
        std::string raw_b;
        RoundBits bits;
        if (options_.concurrent_pair) {
            auto backward = std::async(std::launch::async, [&] {
                return judge_once(hypothesis, reference, Order::backward, seed, &raw_b);
            });
            bits.forward = judge_once(hypothesis, reference, Order::forward, seed, &raw_f);
            bits.backward = backward.get();
        } else {
            bits.forward = judge_once(hypothesis, reference, Order::forward, seed, &raw_f);
            bits.backward = judge_once(hypothesis, reference, Order::backward, seed, &raw_b);
        }
        verdict.rounds.push_back(bits);
        verdict.raw_outputs.push_back(std::move(raw_f));
        verdict.raw_outputs.push_back(std::move(raw_b));
    }
    verdict.label = vote(verdict.rounds);
    return verdict;
}

CorpusScore Judge::corpus_s2er(std::span<const SamplePair> pairs,
                               const std::function<void(const SampleVerdict&)>& on_sample) const {
    if (pairs.empty()) throw InvalidArgument("corpus_s2er needs at least one pair");
    CorpusScore score;
    score.samples.resize(pairs.size());
    parallel_for(pairs.size(), options_.parallelism, [&](std::size_t i) {
        const auto& p = pairs[i];
        auto& out = score.samples[i];
        out.id = p.id;
        try {
            out.verdict = judge(p.hypothesis, p.reference, options_.k, sample_seed(options_.seed, p.id));
        } catch (const Error& e) {
            out.error = e.what();
        }
        if (on_sample) on_sample(out);
    });
    for (const auto& s : score.samples) {
        if (s.verdict) {
            score.labels.push_back(s.verdict->label ? 1 : 0);
        } else {
            spdlog::warn("sample {} could not be judged and is excluded: {}", s.id, *s.error);
            score.failed_ids.push_back(s.id);
        }
    }
    score.n = score.labels.size();
    score.s2er = s2er(score.labels);
    return score;
}

nlohmann::json audit_record(const std::string& id, const JudgeVerdict& verdict) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : verdict.rounds) rounds.push_back({r.forward ? 1 : 0, r.backward ? 1 : 0});
    std::string joined;
    for (const auto& raw : verdict.raw_outputs) {
        joined += raw;
        joined.push_back('\x1e');
    }
    return {{"id", id},
            {"k", verdict.k},
            {"rounds", rounds},
            {"label", verdict.label ? 1 : 0},
            {"raw_outputs_digest", gateway::fnv1a_hex(joined)}};
}

}  // namespace iasr::judge
