#pragma once

// Clients for the three external model roles (chat LLM, ASR, TTS). Every role
// has a live HTTP implementation and deterministic mock variants selected by
// an endpoint of the form "mock:<variant>".

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "iasr/error.hpp"
#include "json.hpp"

namespace iasr::gateway {

/// Connection-level failure that survived every retry.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts) : Error(what), attempts_(attempts) {}
    int attempts() const { return attempts_; }

private:
    int attempts_;
};

/// The backend answered, but not usefully (non-2xx, malformed body, missing
/// fixture, unsupported request).
class BackendError : public Error {
public:
    BackendError(const std::string& what, int attempts = 1, int status = 0)
        : Error(what), attempts_(attempts), status_(status) {}
    int attempts() const { return attempts_; }
    int status() const { return status_; }

private:
    int attempts_;
    int status_;
};

/// The input itself cannot be used (unreadable audio, wrong audio kind).
class InputError : public Error {
public:
    using Error::Error;
};

enum class Role { llm, asr, tts };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

struct BackendConfig {
    Role role = Role::llm;
    std::string endpoint = "mock:rules";
    std::string model_name;
    std::string auth_env_var;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 2;
    double temperature = 0.0;
    std::size_t max_in_flight = 8;
    std::chrono::milliseconds backoff_initial{250};
    /// Variant-specific settings: "fixtures" (path) for mock:fixture,
    /// "table"/"seed"/"rate" for mock:corrupt, "spool_dir" for live TTS.
    nlohmann::json options = nlohmann::json::object();

    bool is_mock() const;
    /// "fixture" for "mock:fixture"; empty for live endpoints.
    std::string mock_variant() const;
    /// Throws InvalidArgument when an invariant does not hold.
    void validate() const;
};

BackendConfig backend_config_from_json(const nlohmann::json& j, std::optional<Role> role = std::nullopt);
/// Never includes auth material (only the env var name).
nlohmann::json to_json(const BackendConfig& cfg);

struct ChatRequest {
    std::string system_prompt;
    std::string user_content;
    bool expects_structured = false;
    std::optional<std::int64_t> seed;
    /// Which prompt produced this request ("refine", "route", "judge", ...)
    /// and the slot values it was rendered from. Live backends ignore both;
    /// rule-based mocks answer from them.
    std::string task;
    std::map<std::string, std::string> fields;
};

struct AudioRef {
    enum class Kind { file, text_passthrough };
    Kind kind = Kind::text_passthrough;
    std::string payload;  // path or literal text
    std::optional<std::string> speaker_prompt;

    static AudioRef text(std::string s) { return {Kind::text_passthrough, std::move(s), std::nullopt}; }
    static AudioRef file(std::string path) { return {Kind::file, std::move(path), std::nullopt}; }

    friend bool operator==(const AudioRef&, const AudioRef&) = default;
};

nlohmann::json to_json(const AudioRef& audio);
/// Human-readable identifier of an input, e.g. "text:call megan" or "file:/x.wav".
std::string describe(const AudioRef& audio);

// ---------------------------------------------------------------------------
// Clients

class LlmClient {
public:
    explicit LlmClient(std::size_t max_in_flight = 8);
    virtual ~LlmClient() = default;
    LlmClient(const LlmClient&) = delete;
    LlmClient& operator=(const LlmClient&) = delete;

    /// Returns the assistant text. Throws InvalidArgument for an empty
    /// user_content, TransportError/BackendError from the backend.
    std::string complete(const ChatRequest& request);

    std::size_t call_count() const { return calls_.load(); }

protected:
    virtual std::string do_complete(const ChatRequest& request) = 0;

private:
    std::counting_semaphore<> in_flight_;
    std::atomic<std::size_t> calls_{0};
};

class AsrClient {
public:
    virtual ~AsrClient() = default;
    virtual std::string transcribe(const AudioRef& audio) = 0;
};

class TtsClient {
public:
    virtual ~TtsClient() = default;
    /// Throws InvalidArgument on empty text.
    virtual AudioRef synthesize(std::string_view text, const std::optional<std::string>& speaker_prompt) = 0;
};

std::shared_ptr<LlmClient> make_llm(const BackendConfig& cfg);
std::shared_ptr<AsrClient> make_asr(const BackendConfig& cfg);
std::shared_ptr<TtsClient> make_tts(const BackendConfig& cfg);

/// One-shot helpers that build a client from `cfg` for a single call.
std::string llm_complete(const BackendConfig& cfg, const ChatRequest& request);
std::string transcribe(const BackendConfig& cfg, const AudioRef& audio);
AudioRef synthesize(const BackendConfig& cfg, std::string_view text,
                    const std::optional<std::string>& speaker_prompt = std::nullopt);

// ---------------------------------------------------------------------------
// Mocks

/// Stable 64-bit FNV-1a digest rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

/// Lookup key of a request for mock:fixture (system prompt and user content).
std::string fixture_key(const ChatRequest& request);

/// mock:fixture. Responses are registered per request key; a key with several
/// responses returns them in order and then keeps repeating the last one.
class FixtureLlm final : public LlmClient {
public:
    FixtureLlm() = default;
    void add(const std::string& key, std::vector<std::string> responses);
    void add(const ChatRequest& request, std::string response);
    /// JSON array of {"key"| "system"+"user", "response" | "responses"}.
    void load(const nlohmann::json& fixtures);
    void load_file(const std::string& path);

protected:
    std::string do_complete(const ChatRequest& request) override;

private:
    std::mutex mu_;
    std::map<std::string, std::vector<std::string>> responses_;
    std::map<std::string, std::size_t> served_;
};

/// mock:rules. Answers refine/route/locate/reason/judge requests from their
/// fields: refine echoes the hypothesis, route recognizes
/// "replace '<a>' with '<b>'" as a correction and short affirmations as a
/// confirmation, locate/reason read the quoted spans, judge compares the two
/// texts after mixed-scheme normalization.
class RulesLlm final : public LlmClient {
protected:
    std::string do_complete(const ChatRequest& request) override;
};

/// Builds an LLM client from a callback; used for scripted backends.
class FunctionLlm final : public LlmClient {
public:
    using Handler = std::function<std::string(const ChatRequest&)>;
    explicit FunctionLlm(Handler handler, std::size_t max_in_flight = 8)
        : LlmClient(max_in_flight), handler_(std::move(handler)) {}

protected:
    std::string do_complete(const ChatRequest& request) override { return handler_(request); }

private:
    Handler handler_;
};

/// mock:identity. Text passthrough comes back unchanged; a file is read and
/// its contents treated as the transcript.
class IdentityAsr final : public AsrClient {
public:
    std::string transcribe(const AudioRef& audio) override;
};

/// mock:corrupt. Applies a word substitution table (matched on the
/// lowercase, punctuation-trimmed form of each whitespace token) to what
/// IdentityAsr would return. With rate < 1 each matching occurrence is
/// corrupted by a deterministic draw keyed on (seed, text, position).
class CorruptAsr final : public AsrClient {
public:
    CorruptAsr(std::map<std::string, std::string> table, std::uint64_t seed = 0, double rate = 1.0);
    std::string transcribe(const AudioRef& audio) override;
    std::string corrupt(std::string_view text) const;

private:
    std::map<std::string, std::string> table_;
    std::uint64_t seed_;
    double rate_;
};

/// mock:passthrough. Returns the text itself as a text_passthrough AudioRef.
class PassthroughTts final : public TtsClient {
public:
    AudioRef synthesize(std::string_view text, const std::optional<std::string>& speaker_prompt) override;
};

// ---------------------------------------------------------------------------
// Live HTTP

struct HttpResponse {
    int status = 0;
    std::string body;
};

struct MultipartField {
    std::string name;
    std::string content;
    std::string filename;
    std::string content_type;
};

/// Minimal POST transport so retry and wire logic can be tested without
/// sockets. Implementations throw TransportError(…, 1) on connection failure.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                   const std::map<std::string, std::string>& headers) = 0;
    virtual HttpResponse post_multipart(const std::string& path, const std::vector<MultipartField>& fields,
                                        const std::map<std::string, std::string>& headers) = 0;
};

/// Splits "http://host:port/base" into the origin and base path.
struct Endpoint {
    std::string origin;
    std::string base_path;
};
Endpoint parse_endpoint(const std::string& uri);

std::unique_ptr<HttpTransport> make_http_transport(const std::string& origin, std::chrono::milliseconds timeout);

/// Runs `attempt` up to max_retries + 1 times. Transport failures, 429 and
/// 5xx responses are retried with exponential backoff; other non-2xx answers
/// fail immediately. `attempts_out` receives the number of attempts made.
HttpResponse with_retries(int max_retries, std::chrono::milliseconds backoff_initial,
                          const std::function<HttpResponse()>& attempt, int& attempts_out,
                          std::string_view what);

/// OpenAI-compatible chat completions: POST {endpoint}/chat/completions.
class HttpLlm final : public LlmClient {
public:
    HttpLlm(BackendConfig cfg, std::unique_ptr<HttpTransport> transport);
    explicit HttpLlm(BackendConfig cfg);

    std::size_t attempt_count() const { return attempts_.load(); }

    /// The request body sent for `request` (exposed for wire tests).
    nlohmann::json request_body(const ChatRequest& request) const;

protected:
    std::string do_complete(const ChatRequest& request) override;

private:
    std::map<std::string, std::string> headers() const;

    BackendConfig cfg_;
    Endpoint endpoint_;
    std::unique_ptr<HttpTransport> transport_;
    std::atomic<std::size_t> attempts_{0};
};

/// POST {endpoint}/transcribe with a multipart "file" upload; reads {"text"}.
class HttpAsr final : public AsrClient {
public:
    HttpAsr(BackendConfig cfg, std::unique_ptr<HttpTransport> transport);
    explicit HttpAsr(BackendConfig cfg);
    std::string transcribe(const AudioRef& audio) override;

private:
    BackendConfig cfg_;
    Endpoint endpoint_;
    std::unique_ptr<HttpTransport> transport_;
    std::counting_semaphore<> in_flight_;
};

/// POST {endpoint}/synthesize (multipart: text, model, optional speaker
/// prompt file); the response body is audio, spooled to a file.
class HttpTts final : public TtsClient {
public:
    HttpTts(BackendConfig cfg, std::unique_ptr<HttpTransport> transport);
    explicit HttpTts(BackendConfig cfg);
    AudioRef synthesize(std::string_view text, const std::optional<std::string>& speaker_prompt) override;

private:
    BackendConfig cfg_;
    Endpoint endpoint_;
    std::unique_ptr<HttpTransport> transport_;
    std::counting_semaphore<> in_flight_;
};

}  // namespace iasr::gateway
