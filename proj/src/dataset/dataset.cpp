#include "iasr/dataset.hpp"

#include <map>
#include <set>

#include <spdlog/spdlog.h>

namespace iasr::dataset {

namespace {

const std::set<std::string> kKnownFields = {"id",      "audio",       "text",      "lang",
                                            "entities", "metric_hint", "input_text"};

std::string required_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) {
        throw DatasetError(std::string("field '") + key + "' must be a string");
    }
    return j.at(key).get<std::string>();
}

std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_string()) throw DatasetError(std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

// Calls fn(line_number, json) for every non-blank line.
template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw DatasetError("line " + std::to_string(number) + ": not a JSON object", number);
        }
        try {
            fn(number, j);
        } catch (const DatasetError& e) {
            if (e.line() != 0) throw;
            throw DatasetError("line " + std::to_string(number) + ": " + e.what(), number);
        } catch (const metrics::MetricsError& e) {
            throw DatasetError("line " + std::to_string(number) + ": " + e.what(), number);
        }
    }
}

std::ifstream open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    return in;
}

}  // namespace

metrics::Scheme ManifestEntry::entity_scheme() const {
    return metric_hint ? metrics::scheme_for(*metric_hint) : metrics::Scheme::word;
}

nlohmann::json to_json(const ManifestEntry& e) {
    nlohmann::json j = {{"id", e.id}, {"text", e.text}, {"lang", e.lang}};
    if (e.audio) j["audio"] = *e.audio;
    if (e.entities) {
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& s : *e.entities) spans.push_back({{"start", s.start}, {"end", s.end}, {"label", s.label}});
        j["entities"] = spans;
    }
    if (e.metric_hint) j["metric_hint"] = metrics::to_string(*e.metric_hint);
    if (e.input_text) j["input_text"] = *e.input_text;
    return j;
}

ManifestEntry manifest_entry_from_json(const nlohmann::json& j, std::vector<std::string>* warnings) {
    ManifestEntry e;
    e.id = required_string(j, "id");
    if (e.id.empty()) throw DatasetError("field 'id' is empty");
    e.text = required_string(j, "text");
    if (e.text.empty()) throw DatasetError("field 'text' is empty");
    e.lang = optional_string(j, "lang").value_or("");
    e.audio = optional_string(j, "audio");
    e.input_text = optional_string(j, "input_text");
    if (auto hint = optional_string(j, "metric_hint")) e.metric_hint = metrics::parse_metric(*hint);
    if (j.contains("entities") && !j.at("entities").is_null()) {
        const auto& arr = j.at("entities");
        if (!arr.is_array()) throw DatasetError("field 'entities' must be an array");
        std::vector<metrics::EntitySpan> spans;
        for (const auto& s : arr) {
            if (!s.is_object() || !s.contains("start") || !s.contains("end") || !s.at("start").is_number_unsigned() ||
                !s.at("end").is_number_unsigned()) {
                throw DatasetError("entity spans need unsigned integer 'start' and 'end'");
            }
            spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                             s.value("label", std::string{})});
        }
        const auto ref_len = metrics::normalize(e.text, e.entity_scheme()).tokens.size();
        metrics::validate_spans(spans, ref_len);
        e.entities = std::move(spans);
    }
    if (warnings) {
        for (const auto& [key, _] : j.items()) {
            if (!kKnownFields.count(key)) warnings->push_back("entry '" + e.id + "': unknown field '" + key + "' ignored");
        }
    }
    return e;
}

std::vector<ManifestEntry> parse_manifest(std::istream& in, LoadReport* report) {
    std::vector<ManifestEntry> entries;
    std::map<std::string, std::size_t> seen;
    for_each_line(in, [&](std::size_t line, const nlohmann::json& j) {
        std::vector<std::string> warnings;
        auto entry = manifest_entry_from_json(j, &warnings);
        if (auto it = seen.find(entry.id); it != seen.end()) {
            throw DatasetError("line " + std::to_string(line) + ": duplicate id '" + entry.id + "' (first on line " +
                                   std::to_string(it->second) + ")",
                               line);
        }
        seen.emplace(entry.id, line);
        for (auto& w : warnings) {
            spdlog::warn("manifest line {}: {}", line, w);
            if (report) report->warnings.push_back("line " + std::to_string(line) + ": " + w);
        }
        entries.push_back(std::move(entry));
    });
    return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path, LoadReport* report) {
    auto in = open(path);
    return parse_manifest(in, report);
}

void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries) {
    for (const auto& e : entries) out << to_json(e).dump() << '\n';
}

std::vector<HypothesisEntry> parse_hypotheses(std::istream& in) {
    std::vector<HypothesisEntry> out;
    std::set<std::string> seen;
    for_each_line(in, [&](std::size_t line, const nlohmann::json& j) {
        HypothesisEntry h{required_string(j, "id"), required_string(j, "hypothesis")};
        if (!seen.insert(h.id).second) {
            throw DatasetError("line " + std::to_string(line) + ": duplicate hypothesis id '" + h.id + "'", line);
        }
        out.push_back(std::move(h));
    });
    return out;
}

std::vector<HypothesisEntry> load_hypotheses(const std::filesystem::path& path) {
    auto in = open(path);
    return parse_hypotheses(in);
}

JoinResult join_pairs(const std::vector<ManifestEntry>& manifest, const std::vector<HypothesisEntry>& hypotheses) {
    std::map<std::string, const HypothesisEntry*> by_id;
    for (const auto& h : hypotheses) by_id.emplace(h.id, &h);

    std::set<std::string> manifest_ids;
    for (const auto& e : manifest) manifest_ids.insert(e.id);
    std::vector<std::string> orphans;
    for (const auto& h : hypotheses) {
        if (!manifest_ids.count(h.id)) orphans.push_back(h.id);
    }
    if (!orphans.empty()) {
        std::string list;
        for (const auto& id : orphans) list += (list.empty() ? "" : ", ") + id;
        throw DatasetError("hypotheses without a manifest entry: " + list);
    }

    JoinResult result;
    for (const auto& e : manifest) {
        auto it = by_id.find(e.id);
        if (it == by_id.end()) {
            result.missing_ids.push_back(e.id);
        } else {
            result.pairs.push_back({it->second->hypothesis, e.text, &e});
        }
    }
    return result;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool append) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
    if (!out_) throw DatasetError("cannot open " + path.string() + " for writing");
}

void JsonlWriter::write(const nlohmann::json& record) {
    std::lock_guard lock(mu_);
    out_ << record.dump() << '\n';
    if (!out_) throw DatasetError("write failed");
}

void JsonlWriter::flush() {
    std::lock_guard lock(mu_);
    out_.flush();
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    auto in = open(path);
    std::vector<nlohmann::json> out;
    for_each_line(in, [&](std::size_t, const nlohmann::json& j) { out.push_back(j); });
    return out;
}

}  // namespace iasr::dataset
