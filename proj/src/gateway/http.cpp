#include "httplib.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "iasr/gateway.hpp"

namespace iasr::gateway {

Endpoint parse_endpoint(const std::string& uri) {
    const auto scheme_end = uri.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("endpoint is not a URI: " + uri);
    const auto path_start = uri.find('/', scheme_end + 3);
    Endpoint ep;
    if (path_start == std::string::npos) {
        ep.origin = uri;
    } else {
        ep.origin = uri.substr(0, path_start);
        ep.base_path = uri.substr(path_start);
        while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
    }
    return ep;
}

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttplibTransport(std::string origin, std::chrono::milliseconds timeout)
        : origin_(std::move(origin)), timeout_(timeout) {}

    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& headers) override {
        auto client = connect();
        auto res = client.Post(path, to_headers(headers), body, "application/json");
        return unwrap(res, path);
    }

    HttpResponse post_multipart(const std::string& path, const std::vector<MultipartField>& fields,
                                const std::map<std::string, std::string>& headers) override {
        httplib::MultipartFormDataItems items;
        for (const auto& f : fields) items.push_back({f.name, f.content, f.filename, f.content_type});
        auto client = connect();
        auto res = client.Post(path, to_headers(headers), items);
        return unwrap(res, path);
    }

private:
    // one client per request: httplib::Client is not safe for concurrent use
    httplib::Client connect() const {
        httplib::Client client(origin_);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        return client;
    }

    static httplib::Headers to_headers(const std::map<std::string, std::string>& headers) {
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        return h;
    }

    static HttpResponse unwrap(const httplib::Result& res, const std::string& path) {
        if (!res) throw TransportError("POST " + path + " failed: " + httplib::to_string(res.error()), 1);
        return {res->status, res->body};
    }

    std::string origin_;
    std::chrono::milliseconds timeout_;
};

bool retryable(int status) { return status == 429 || status >= 500; }

std::map<std::string, std::string> auth_headers(const BackendConfig& cfg) {
    std::map<std::string, std::string> h;
    if (!cfg.auth_env_var.empty()) {
        if (const char* token = std::getenv(cfg.auth_env_var.c_str()); token != nullptr && *token != '\0') {
            h["Authorization"] = std::string("Bearer ") + token;
        }
    }
    return h;
}

std::string snippet(const std::string& body) { return body.size() > 200 ? body.substr(0, 200) + "..." : body; }

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& origin, std::chrono::milliseconds timeout) {
    return std::make_unique<HttplibTransport>(origin, timeout);
}

HttpResponse with_retries(int max_retries, std::chrono::milliseconds backoff_initial,
                          const std::function<HttpResponse()>& attempt, int& attempts_out, std::string_view what) {
    auto delay = backoff_initial;
    std::string last_error;
    for (int n = 1;; ++n) {
        attempts_out = n;
        bool transport_failed = false;
        HttpResponse res;
        try {
            res = attempt();
        } catch (const TransportError& e) {
            transport_failed = true;
            last_error = e.what();
        }
        if (!transport_failed) {
            if (res.status >= 200 && res.status < 300) return res;
            if (!retryable(res.status) || n > max_retries) {
                throw BackendError(std::string(what) + " returned HTTP " + std::to_string(res.status) + " after " +
                                       std::to_string(n) + " attempt(s): " + snippet(res.body),
                                   n, res.status);
            }
            last_error = "HTTP " + std::to_string(res.status);
        } else if (n > max_retries) {
            throw TransportError(std::string(what) + " failed after " + std::to_string(n) +
                                     " attempt(s): " + last_error,
                                 n);
        }
        spdlog::warn("{} attempt {} failed ({}); retrying in {} ms", what, n, last_error, delay.count());
        std::this_thread::sleep_for(delay);
        delay *= 2;
    }
}

// ---------------------------------------------------------------------------

HttpLlm::HttpLlm(BackendConfig cfg, std::unique_ptr<HttpTransport> transport)
    : LlmClient(cfg.max_in_flight), cfg_(std::move(cfg)), endpoint_(parse_endpoint(cfg_.endpoint)),
      transport_(std::move(transport)) {}

HttpLlm::HttpLlm(BackendConfig cfg)
    : HttpLlm(cfg, make_http_transport(parse_endpoint(cfg.endpoint).origin, cfg.timeout)) {}

std::map<std::string, std::string> HttpLlm::headers() const { return auth_headers(cfg_); }

nlohmann::json HttpLlm::request_body(const ChatRequest& request) const {
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    messages.push_back({{"role", "user"}, {"content", request.user_content}});
    nlohmann::json body = {{"model", cfg_.model_name}, {"messages", messages}, {"temperature", cfg_.temperature}};
    if (request.seed) body["seed"] = *request.seed;
    return body;
}

std::string HttpLlm::do_complete(const ChatRequest& request) {
    const auto body = request_body(request).dump();
    const auto path = endpoint_.base_path + "/chat/completions";
    int attempts = 0;
    const HttpResponse res = with_retries(
        cfg_.max_retries, cfg_.backoff_initial,
        [&] {
            attempts_.fetch_add(1);
            return transport_->post_json(path, body, headers());
        },
        attempts, "chat completion");
    const auto parsed = nlohmann::json::parse(res.body, nullptr, false);
    if (parsed.is_discarded()) throw BackendError("chat completion response is not JSON", attempts, res.status);
    try {
        const auto& content = parsed.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw BackendError("chat completion content is not a string", attempts);
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("chat completion response lacks choices[0].message.content: ") + e.what(),
                           attempts, res.status);
    }
}

// ---------------------------------------------------------------------------

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read audio file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct SemaphoreGuard {
    explicit SemaphoreGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
    std::counting_semaphore<>& sem;
};

}  // namespace

HttpAsr::HttpAsr(BackendConfig cfg, std::unique_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)), endpoint_(parse_endpoint(cfg_.endpoint)), transport_(std::move(transport)),
      in_flight_(static_cast<std::ptrdiff_t>(cfg_.max_in_flight)) {}

HttpAsr::HttpAsr(BackendConfig cfg)
    : HttpAsr(cfg, make_http_transport(parse_endpoint(cfg.endpoint).origin, cfg.timeout)) {}

std::string HttpAsr::transcribe(const AudioRef& audio) {
    if (audio.kind != AudioRef::Kind::file) {
        throw InputError("live ASR needs an audio file; text passthrough input requires a mock ASR");
    }
    const auto bytes = slurp(audio.payload);
    const auto filename = std::filesystem::path(audio.payload).filename().string();
    std::vector<MultipartField> fields = {{"file", bytes, filename, "application/octet-stream"},
                                          {"model", cfg_.model_name, "", ""}};
    SemaphoreGuard guard(in_flight_);
    int attempts = 0;
    const auto res = with_retries(
        cfg_.max_retries, cfg_.backoff_initial,
        [&] { return transport_->post_multipart(endpoint_.base_path + "/transcribe", fields, auth_headers(cfg_)); },
        attempts, "transcription");
    const auto parsed = nlohmann::json::parse(res.body, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("text") || !parsed["text"].is_string()) {
        throw BackendError("transcription response lacks a string 'text' field", attempts, res.status);
    }
    return parsed["text"].get<std::string>();
}

HttpTts::HttpTts(BackendConfig cfg, std::unique_ptr<HttpTransport> transport)
    : cfg_(std::move(cfg)), endpoint_(parse_endpoint(cfg_.endpoint)), transport_(std::move(transport)),
      in_flight_(static_cast<std::ptrdiff_t>(cfg_.max_in_flight)) {}

HttpTts::HttpTts(BackendConfig cfg)
    : HttpTts(cfg, make_http_transport(parse_endpoint(cfg.endpoint).origin, cfg.timeout)) {}

AudioRef HttpTts::synthesize(std::string_view text, const std::optional<std::string>& speaker_prompt) {
    if (text.empty()) throw InvalidArgument("cannot synthesize empty text");
    std::vector<MultipartField> fields = {{"text", std::string(text), "", ""}, {"model", cfg_.model_name, "", ""}};
    if (speaker_prompt) {
        fields.push_back({"speaker_prompt", slurp(*speaker_prompt),
                          std::filesystem::path(*speaker_prompt).filename().string(), "application/octet-stream"});
    }
    SemaphoreGuard guard(in_flight_);
    int attempts = 0;
    const auto res = with_retries(
        cfg_.max_retries, cfg_.backoff_initial,
        [&] { return transport_->post_multipart(endpoint_.base_path + "/synthesize", fields, auth_headers(cfg_)); },
        attempts, "speech synthesis");
    if (res.body.empty()) throw BackendError("speech synthesis returned no audio", attempts, res.status);

    const std::filesystem::path dir =
        cfg_.options.value("spool_dir", (std::filesystem::temp_directory_path() / "iasr-tts").string());
    std::filesystem::create_directories(dir);
    const auto path = dir / ("tts-" + fnv1a_hex(std::string(text) + '\x1f' + res.body) + ".wav");
    std::ofstream out(path, std::ios::binary);
    out.write(res.body.data(), static_cast<std::streamsize>(res.body.size()));
    if (!out) throw BackendError("cannot write synthesized audio to " + path.string(), attempts);
    AudioRef ref = AudioRef::file(path.string());
    ref.speaker_prompt = speaker_prompt;
    return ref;
}

}  // namespace iasr::gateway
