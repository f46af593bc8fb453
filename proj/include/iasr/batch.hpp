#pragma once

// Corpus-level operations shared by the CLI and the job runner. Each returns
// a JSON summary and writes its detailed records where asked.

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iasr/dataset.hpp"
#include "iasr/judge.hpp"
#include "iasr/simulation.hpp"
#include "json.hpp"

namespace iasr::batch {

/// (completed, total); called from worker threads.
using Progress = std::function<void(std::size_t, std::size_t)>;

/// metric is one of wer, cer, mer (corpus rate = total edits over total
/// reference tokens) or ner (entity error pooled over span tokens; entries
/// without entities are skipped).
nlohmann::json score_metrics(const std::vector<dataset::ManifestEntry>& manifest,
                             const std::vector<dataset::HypothesisEntry>& hypotheses, const std::string& metric,
                             const Progress& progress = {});

/// S2ER over the joined pairs. With `audit_path`, one audit record per judged
/// sample is written there as JSONL.
nlohmann::json score_s2er(const judge::Judge& judge, const std::vector<dataset::ManifestEntry>& manifest,
                          const std::vector<dataset::HypothesisEntry>& hypotheses,
                          const std::optional<std::filesystem::path>& audit_path = std::nullopt,
                          const Progress& progress = {});

/// Runs the simulation and writes traces.jsonl, report.json and report.csv
/// into `out_dir`. Returns the report.
nlohmann::json simulate(std::span<const dataset::ManifestEntry> manifest, simulation::SystemUnderTest& system,
                        const simulation::SimulationConfig& cfg, const simulation::SimulationBackends& backends,
                        const std::filesystem::path& out_dir, const Progress& progress = {});

/// Reads a score file: a JSON array of numbers, or one number per line.
std::vector<double> read_scores(const std::filesystem::path& path);

}  // namespace iasr::batch
