#pragma once

// JSONL manifests and hypothesis files, the id join between them, and the
// line-oriented writers used for verdicts and traces.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iasr/error.hpp"
#include "iasr/metrics.hpp"
#include "json.hpp"

namespace iasr::dataset {

/// Carries the 1-based line number when the problem is tied to one line.
class DatasetError : public Error {
public:
    DatasetError(const std::string& what, std::size_t line = 0) : Error(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct ManifestEntry {
    std::string id;
    std::optional<std::string> audio;
    std::string text;  // reference transcription
    std::string lang;
    std::optional<std::vector<metrics::EntitySpan>> entities;
    std::optional<metrics::Metric> metric_hint;
    /// Text fed as the round-0 input when no audio is given. Defaults to the
    /// reference itself.
    std::optional<std::string> input_text;

    /// Scheme that entity spans index into (metric_hint's, word by default).
    metrics::Scheme entity_scheme() const;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct HypothesisEntry {
    std::string id;
    std::string hypothesis;

    friend bool operator==(const HypothesisEntry&, const HypothesisEntry&) = default;
};

struct LoadReport {
    std::vector<std::string> warnings;
};

nlohmann::json to_json(const ManifestEntry& entry);
/// Throws DatasetError (line 0) on schema violations.
ManifestEntry manifest_entry_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr);

std::vector<ManifestEntry> parse_manifest(std::istream& in, LoadReport* report = nullptr);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path, LoadReport* report = nullptr);
void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries);

std::vector<HypothesisEntry> parse_hypotheses(std::istream& in);
std::vector<HypothesisEntry> load_hypotheses(const std::filesystem::path& path);

struct JoinedPair {
    std::string hypothesis;
    std::string reference;
    const ManifestEntry* entry = nullptr;
};

struct JoinResult {
    std::vector<JoinedPair> pairs;         // manifest order
    std::vector<std::string> missing_ids;  // manifest entries with no hypothesis
};

/// Inner join on id in manifest order. Hypotheses whose id is not in the
/// manifest raise DatasetError listing every orphan id.
JoinResult join_pairs(const std::vector<ManifestEntry>& manifest, const std::vector<HypothesisEntry>& hypotheses);

/// Appends one JSON document per line; safe to share between threads.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path, bool append = false);
    void write(const nlohmann::json& record);
    void flush();

private:
    std::mutex mu_;
    std::ofstream out_;
};

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace iasr::dataset
