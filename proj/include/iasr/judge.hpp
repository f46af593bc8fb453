#pragma once

// Sentence-level semantic error rate. Each sample is judged for binary
// semantic equivalence by asking an LLM judge in both argument orders for k
// rounds; a round is positive only when both orders agree, and the label is
// the majority over rounds. S2ER is the mean of (1 - label).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iasr/gateway.hpp"
#include "iasr/prompts.hpp"
#include "json.hpp"

namespace iasr::judge {

enum class Order { forward, backward };  // forward: hypothesis first

struct RoundBits {
    bool forward = false;
    bool backward = false;

    friend bool operator==(const RoundBits&, const RoundBits&) = default;
};

/// Majority over rounds of (forward AND backward); needs ceil(k/2) positives.
bool vote(std::span<const RoundBits> rounds);

struct JudgeVerdict {
    std::vector<RoundBits> rounds;
    int k = 3;
    bool label = false;
    std::vector<std::string> raw_outputs;  // forward, backward per round

    /// label == vote(rounds) and rounds.size() == k.
    bool consistent() const;
};

struct SamplePair {
    std::string id;
    std::string hypothesis;
    std::string reference;
};

struct SampleVerdict {
    std::string id;
    std::optional<JudgeVerdict> verdict;
    std::optional<std::string> error;  // set when the sample failed to judge
};

struct CorpusScore {
    std::size_t n = 0;          // judged samples
    std::vector<int> labels;    // one per judged sample, input order
    double s2er = 0.0;          // NaN when nothing could be judged
    std::vector<SampleVerdict> samples;  // every input sample, input order
    std::vector<std::string> failed_ids;
};

/// (1/n) * sum(1 - label).
double s2er(std::span<const int> labels);

struct JudgeOptions {
    int k = 3;
    std::int64_t seed = 0;
    std::size_t parallelism = 4;  // samples judged concurrently
    bool concurrent_pair = true;  // run the two orders of a round concurrently
};

/// True for odd k in [1, 7].
bool valid_k(int k);

class Judge {
public:
    explicit Judge(std::shared_ptr<gateway::LlmClient> llm,
                   prompts::PromptTemplate judge_template = prompts::PromptTemplates::defaults().judge,
                   JudgeOptions options = {});

    /// One directional query. Exact matches return true and empty inputs
    /// (after normalization) are decided without calling the backend. An
    /// unparseable answer is re-asked once and then counts as false.
    bool judge_once(std::string_view hypothesis, std::string_view reference, Order order,
                    std::optional<std::int64_t> seed = std::nullopt, std::string* raw = nullptr) const;

    JudgeVerdict judge(std::string_view hypothesis, std::string_view reference) const;
    JudgeVerdict judge(std::string_view hypothesis, std::string_view reference, int k,
                       std::int64_t seed_base) const;

    /// Judges every pair with bounded parallelism. Samples whose backend
    /// fails are reported in failed_ids and excluded from the denominator.
    /// `on_sample` runs on worker threads as each sample finishes.
    CorpusScore corpus_s2er(std::span<const SamplePair> pairs,
                            const std::function<void(const SampleVerdict&)>& on_sample = {}) const;

    const JudgeOptions& options() const { return options_; }

private:
    std::shared_ptr<gateway::LlmClient> llm_;
    prompts::PromptTemplate template_;
    JudgeOptions options_;
};

/// {"id", "k", "rounds": [[f, b], ...], "label", "raw_outputs_digest"}.
nlohmann::json audit_record(const std::string& id, const JudgeVerdict& verdict);

/// Per-sample seed base so repeated runs are reproducible.
std::int64_t sample_seed(std::int64_t base, std::string_view sample_id);

}  // namespace iasr::judge
