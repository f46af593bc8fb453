#include "iasr/batch.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include "iasr/metrics.hpp"

namespace iasr::batch {

nlohmann::json score_metrics(const std::vector<dataset::ManifestEntry>& manifest,
                             const std::vector<dataset::HypothesisEntry>& hypotheses, const std::string& metric,
                             const Progress& progress) {
    const bool entity = metric == "ner";
    const auto kind = entity ? metrics::Metric::wer : metrics::parse_metric(metric);
    const auto joined = dataset::join_pairs(manifest, hypotheses);

    double errors = 0.0;
    double denominator = 0.0;
    double sum_rates = 0.0;
    nlohmann::json samples = nlohmann::json::array();
    std::size_t done = 0;
    for (const auto& pair : joined.pairs) {
        const auto& entry = *pair.entry;
        if (entity) {
            if (entry.entities) {
                const double rate =
                    metrics::entity_error_rate(pair.reference, pair.hypothesis, *entry.entities, entry.entity_scheme());
                double covered = 0.0;
                for (const auto& s : *entry.entities) covered += static_cast<double>(s.end - s.start);
                errors += rate * covered;
                denominator += covered;
                sum_rates += rate;
                samples.push_back({{"id", entry.id}, {"value", rate}, {"entity_tokens", covered}});
            }
        } else {
            const auto scheme = metrics::scheme_for(kind);
            const auto result = metrics::align(metrics::normalize(pair.reference, scheme),
                                               metrics::normalize(pair.hypothesis, scheme));
            const double rate = result.error_rate();
            errors += static_cast<double>(result.edits());
            denominator += static_cast<double>(result.ref_len);
            sum_rates += rate;
            samples.push_back({{"id", entry.id},
                               {"value", rate},
                               {"substitutions", result.substitutions},
                               {"deletions", result.deletions},
                               {"insertions", result.insertions},
                               {"ref_len", result.ref_len}});
        }
        if (progress) progress(++done, joined.pairs.size());
    }
    const auto n = samples.size();
    nlohmann::json out = {{"metric", metric}, {"n", n}, {"missing_ids", joined.missing_ids}, {"samples", samples}};
    out["corpus"] = denominator > 0 ? nlohmann::json(errors / denominator) : nlohmann::json();
    out["mean"] = n > 0 ? nlohmann::json(sum_rates / static_cast<double>(n)) : nlohmann::json();
    return out;
}

nlohmann::json score_s2er(const judge::Judge& judge, const std::vector<dataset::ManifestEntry>& manifest,
                          const std::vector<dataset::HypothesisEntry>& hypotheses,
                          const std::optional<std::filesystem::path>& audit_path, const Progress& progress) {
    const auto joined = dataset::join_pairs(manifest, hypotheses);
    if (joined.pairs.empty()) throw InvalidArgument("no hypothesis matches a manifest entry");
    std::vector<judge::SamplePair> pairs;
    for (const auto& p : joined.pairs) pairs.push_back({p.entry->id, p.hypothesis, p.reference});

    std::optional<dataset::JsonlWriter> audit;
    if (audit_path) audit.emplace(*audit_path);
    std::atomic<std::size_t> done{0};
    const auto score = judge.corpus_s2er(pairs, [&](const judge::SampleVerdict& s) {
        if (audit && s.verdict) audit->write(judge::audit_record(s.id, *s.verdict));
        if (progress) progress(++done, pairs.size());
    });
    if (audit) audit->flush();

    nlohmann::json labels = nlohmann::json::object();
    for (const auto& s : score.samples) {
        if (s.verdict) labels[s.id] = s.verdict->label ? 1 : 0;
    }
    nlohmann::json out = {{"k", judge.options().k},
                          {"n", score.n},
                          {"labels", labels},
                          {"failed_ids", score.failed_ids},
                          {"missing_ids", joined.missing_ids}};
    out["s2er"] = score.n > 0 ? nlohmann::json(score.s2er) : nlohmann::json();
    return out;
}

nlohmann::json simulate(std::span<const dataset::ManifestEntry> manifest, simulation::SystemUnderTest& system,
                        const simulation::SimulationConfig& cfg, const simulation::SimulationBackends& backends,
                        const std::filesystem::path& out_dir, const Progress& progress) {
    std::filesystem::create_directories(out_dir);
    std::atomic<std::size_t> done{0};
    const auto run = simulation::run_corpus(manifest, system, cfg, backends, [&](const simulation::SimulationTrace&) {
        if (progress) progress(++done, manifest.size());
    });
    {
        // manifest order, so identical inputs give identical files
        dataset::JsonlWriter traces(out_dir / "traces.jsonl");
        for (const auto& t : run.traces) traces.write(simulation::to_json(t));
    }
    const auto report = simulation::to_json(run.report);
    std::ofstream(out_dir / "report.json") << report.dump(2) << '\n';
    std::ofstream csv(out_dir / "report.csv");
    simulation::write_report_csv(csv, run.report);
    return report;
}

std::vector<double> read_scores(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto text = ss.str();
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.is_array()) return j.get<std::vector<double>>();

    std::vector<double> out;
    std::istringstream lines(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(line, &used));
            if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw InvalidArgument(path.string() + " line " + std::to_string(number) + ": not a number");
        }
    }
    return out;
}

}  // namespace iasr::batch
