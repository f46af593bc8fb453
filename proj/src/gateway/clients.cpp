#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "iasr/gateway.hpp"
#include "iasr/instructions.hpp"
#include "iasr/metrics.hpp"

namespace iasr::gateway {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::llm: return "llm";
        case Role::asr: return "asr";
        case Role::tts: return "tts";
    }
    return "llm";
}

Role parse_role(std::string_view name) {
    if (name == "llm") return Role::llm;
    if (name == "asr") return Role::asr;
    if (name == "tts") return Role::tts;
    throw InvalidArgument("unknown backend role: " + std::string(name));
}

bool BackendConfig::is_mock() const { return endpoint.rfind("mock:", 0) == 0; }

std::string BackendConfig::mock_variant() const { return is_mock() ? endpoint.substr(5) : std::string{}; }

void BackendConfig::validate() const {
    if (endpoint.empty()) throw InvalidArgument("backend endpoint is empty");
    if (timeout.count() <= 0) throw InvalidArgument("backend timeout must be positive");
    if (max_retries < 0 || max_retries > 5) throw InvalidArgument("max_retries must be within [0, 5]");
    if (temperature < 0.0) throw InvalidArgument("temperature must be >= 0");
    if (max_in_flight == 0) throw InvalidArgument("max_in_flight must be >= 1");
    if (is_mock() && !auth_env_var.empty()) throw InvalidArgument("mock endpoints take no auth");
    if (!is_mock() && endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
        throw InvalidArgument("endpoint must be http(s)://... or mock:<variant>, got " + endpoint);
    }
}

BackendConfig backend_config_from_json(const nlohmann::json& j, std::optional<Role> role) {
    BackendConfig cfg;
    if (role) cfg.role = *role;
    if (j.contains("role")) cfg.role = parse_role(j.at("role").get<std::string>());
    if (role && cfg.role != *role) {
        throw InvalidArgument("backend declared as " + std::string(to_string(cfg.role)) + " where " +
                              std::string(to_string(*role)) + " is expected");
    }
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    if (!j.contains("endpoint")) {
        cfg.endpoint = cfg.role == Role::llm ? "mock:rules" : cfg.role == Role::asr ? "mock:identity" : "mock:passthrough";
    }
    cfg.model_name = j.value("model", j.value("model_name", std::string{}));
    cfg.auth_env_var = j.value("auth_env_var", std::string{});
    cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", cfg.timeout.count()));
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    cfg.backoff_initial = std::chrono::milliseconds(j.value("backoff_ms", cfg.backoff_initial.count()));
    if (j.contains("options")) cfg.options = j.at("options");
    cfg.validate();
    return cfg;
}

nlohmann::json to_json(const BackendConfig& cfg) {
    return {{"role", to_string(cfg.role)},
            {"endpoint", cfg.endpoint},
            {"model", cfg.model_name},
            {"auth_env_var", cfg.auth_env_var},
            {"timeout_ms", cfg.timeout.count()},
            {"max_retries", cfg.max_retries},
            {"temperature", cfg.temperature},
            {"max_in_flight", cfg.max_in_flight}};
}

nlohmann::json to_json(const AudioRef& audio) {
    nlohmann::json j = {{"kind", audio.kind == AudioRef::Kind::file ? "file" : "text_passthrough"},
                        {"payload", audio.payload}};
    if (audio.speaker_prompt) j["speaker_prompt"] = *audio.speaker_prompt;
    return j;
}

std::string describe(const AudioRef& audio) {
    return (audio.kind == AudioRef::Kind::file ? "file:" : "text:") + audio.payload;
}

// ---------------------------------------------------------------------------

LlmClient::LlmClient(std::size_t max_in_flight)
    : in_flight_(static_cast<std::ptrdiff_t>(max_in_flight == 0 ? 1 : max_in_flight)) {}

std::string LlmClient::complete(const ChatRequest& request) {
    if (request.user_content.empty()) throw InvalidArgument("chat request has empty user content");
    calls_.fetch_add(1);
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{in_flight_};
    return do_complete(request);
}

std::shared_ptr<LlmClient> make_llm(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.role != Role::llm) throw InvalidArgument("make_llm needs an llm backend config");
    if (!cfg.is_mock()) return std::make_shared<HttpLlm>(cfg);
    const auto variant = cfg.mock_variant();
    if (variant == "rules") return std::make_shared<RulesLlm>();
    if (variant == "fixture") {
        auto llm = std::make_shared<FixtureLlm>();
        if (cfg.options.contains("fixtures")) {
            const auto& f = cfg.options.at("fixtures");
            if (f.is_string()) {
                llm->load_file(f.get<std::string>());
            } else {
                llm->load(f);
            }
        }
        return llm;
    }
    throw InvalidArgument("unknown llm mock variant: " + cfg.endpoint);
}

std::shared_ptr<AsrClient> make_asr(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.role != Role::asr) throw InvalidArgument("make_asr needs an asr backend config");
    if (!cfg.is_mock()) return std::make_shared<HttpAsr>(cfg);
    const auto variant = cfg.mock_variant();
    if (variant == "identity") return std::make_shared<IdentityAsr>();
    if (variant == "corrupt") {
        std::map<std::string, std::string> table;
        if (cfg.options.contains("table")) {
            for (const auto& [k, v] : cfg.options.at("table").items()) table[k] = v.get<std::string>();
        }
        return std::make_shared<CorruptAsr>(std::move(table), cfg.options.value("seed", std::uint64_t{0}),
                                            cfg.options.value("rate", 1.0));
    }
    throw InvalidArgument("unknown asr mock variant: " + cfg.endpoint);
}

std::shared_ptr<TtsClient> make_tts(const BackendConfig& cfg) {
    cfg.validate();
    if (cfg.role != Role::tts) throw InvalidArgument("make_tts needs a tts backend config");
    if (!cfg.is_mock()) return std::make_shared<HttpTts>(cfg);
    if (cfg.mock_variant() == "passthrough") return std::make_shared<PassthroughTts>();
    throw InvalidArgument("unknown tts mock variant: " + cfg.endpoint);
}

std::string llm_complete(const BackendConfig& cfg, const ChatRequest& request) {
    return make_llm(cfg)->complete(request);
}

std::string transcribe(const BackendConfig& cfg, const AudioRef& audio) { return make_asr(cfg)->transcribe(audio); }

AudioRef synthesize(const BackendConfig& cfg, std::string_view text, const std::optional<std::string>& speaker_prompt) {
    return make_tts(cfg)->synthesize(text, speaker_prompt);
}

// ---------------------------------------------------------------------------
// Mocks

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

std::string fixture_key(const ChatRequest& request) {
    return fnv1a_hex(request.system_prompt + '\x1f' + request.user_content);
}

void FixtureLlm::add(const std::string& key, std::vector<std::string> responses) {
    if (responses.empty()) throw InvalidArgument("fixture needs at least one response");
    std::lock_guard lock(mu_);
    responses_[key] = std::move(responses);
    served_[key] = 0;
}

void FixtureLlm::add(const ChatRequest& request, std::string response) {
    add(fixture_key(request), std::vector<std::string>{std::move(response)});
}

void FixtureLlm::load(const nlohmann::json& fixtures) {
    if (!fixtures.is_array()) throw InvalidArgument("fixtures must be a JSON array");
    for (const auto& f : fixtures) {
        std::string key;
        if (f.contains("key")) {
            key = f.at("key").get<std::string>();
        } else {
            ChatRequest r;
            r.system_prompt = f.value("system", std::string{});
            r.user_content = f.value("user", std::string{});
            key = fixture_key(r);
        }
        std::vector<std::string> responses;
        if (f.contains("responses")) {
            responses = f.at("responses").get<std::vector<std::string>>();
        } else {
            responses.push_back(f.at("response").get<std::string>());
        }
        add(key, std::move(responses));
    }
}

void FixtureLlm::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open fixture file " + path);
    load(nlohmann::json::parse(in));
}

std::string FixtureLlm::do_complete(const ChatRequest& request) {
    const auto key = fixture_key(request);
    std::lock_guard lock(mu_);
    auto it = responses_.find(key);
    if (it == responses_.end()) {
        throw BackendError("no fixture for request key " + key + " (task '" + request.task + "')");
    }
    auto& idx = served_[key];
    const auto& list = it->second;
    const auto& out = list[std::min(idx, list.size() - 1)];
    ++idx;
    return out;
}

namespace {

std::string field(const ChatRequest& r, const std::string& name) {
    auto it = r.fields.find(name);
    if (it == r.fields.end()) {
        throw BackendError("mock:rules: request for task '" + r.task + "' lacks field '" + name + "'");
    }
    return it->second;
}

}  // namespace

std::string RulesLlm::do_complete(const ChatRequest& request) {
    const auto& task = request.task;
    if (task == "refine") return field(request, "hypothesis");
    if (task == "route") {
        const auto instruction = field(request, "instruction");
        std::string intent = "new_input";
        if (parse_replace_instruction(instruction)) {
            intent = "correction";
        } else if (is_affirmation(instruction)) {
            intent = "confirmation";
        }
        return nlohmann::json{{"intent", intent}}.dump();
    }
    if (task == "locate" || task == "reason") {
        const auto parsed = parse_replace_instruction(field(request, "instruction"));
        if (!parsed) return task == "locate" ? R"({"target": null})" : R"({"replacement": null})";
        if (task == "locate") return nlohmann::json{{"target", parsed->first}}.dump();
        return nlohmann::json{{"replacement", parsed->second}, {"rationale", "user supplied replacement"}}.dump();
    }
    if (task == "judge") {
        using metrics::Scheme;
        const bool same = metrics::normalize(field(request, "first"), Scheme::mixed).tokens ==
                          metrics::normalize(field(request, "second"), Scheme::mixed).tokens;
        return nlohmann::json{{"equivalent", same}}.dump();
    }
    if (task == "simulate") {
        auto feedback = rule_based_feedback(field(request, "current"), field(request, "reference"));
        return feedback.value_or("yes");
    }
    throw BackendError("mock:rules cannot answer task '" + task + "'");
}

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read audio input " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string IdentityAsr::transcribe(const AudioRef& audio) {
    if (audio.kind == AudioRef::Kind::text_passthrough) return audio.payload;
    return trim(read_text_file(audio.payload));
}

CorruptAsr::CorruptAsr(std::map<std::string, std::string> table, std::uint64_t seed, double rate)
    : table_(std::move(table)), seed_(seed), rate_(rate) {
    if (rate_ < 0.0 || rate_ > 1.0) throw InvalidArgument("corruption rate must lie in [0, 1]");
}

std::string CorruptAsr::corrupt(std::string_view text) const {
    std::string out;
    std::size_t pos = 0;
    std::size_t index = 0;
    while (pos < text.size()) {
        const auto ws_end = text.find_first_not_of(' ', pos);
        if (ws_end == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, ws_end - pos));
        auto tok_end = text.find(' ', ws_end);
        if (tok_end == std::string_view::npos) tok_end = text.size();
        const auto token = text.substr(ws_end, tok_end - ws_end);
        const auto pieces = metrics::tokenize(token, metrics::Scheme::word);
        bool replaced = false;
        if (pieces.size() == 1) {
            auto it = table_.find(pieces.front().text);
            if (it != table_.end()) {
                const auto digest = fnv1a_hex(std::to_string(seed_) + '\x1f' + std::string(text) + '\x1f' +
                                              std::to_string(index));
                // FNV barely moves the high bits for keys differing in one
                // trailing byte, so finish with the splitmix64 mixer
                std::uint64_t z = std::stoull(digest, nullptr, 16) + 0x9e3779b97f4a7c15ULL;
                z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
                z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
                z ^= z >> 31;
                const double u = static_cast<double>(z >> 11) / static_cast<double>(1ULL << 53);
                if (u < rate_) {
                    out.append(token.substr(0, pieces.front().begin));
                    out.append(it->second);
                    out.append(token.substr(pieces.front().end));
                    replaced = true;
                }
            }
        }
        if (!replaced) out.append(token);
        ++index;
        pos = tok_end;
    }
    return out;
}

std::string CorruptAsr::transcribe(const AudioRef& audio) { return corrupt(IdentityAsr{}.transcribe(audio)); }

AudioRef PassthroughTts::synthesize(std::string_view text, const std::optional<std::string>& speaker_prompt) {
    if (text.empty()) throw InvalidArgument("cannot synthesize empty text");
    AudioRef ref = AudioRef::text(std::string(text));
    ref.speaker_prompt = speaker_prompt;
    return ref;
}

}  // namespace iasr::gateway
