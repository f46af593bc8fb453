#include "doctest.h"
#include "httplib.h"

#include <cstdlib>
#include <fstream>
#include <thread>

#include "iasr/gateway.hpp"
#include "support.hpp"

using namespace iasr;
using namespace iasr::gateway;
using testsupport::Gen;

namespace {

ChatRequest chat(std::string system, std::string user) {
    ChatRequest r;
    r.system_prompt = std::move(system);
    r.user_content = std::move(user);
    return r;
}

// Fails the first `failures` calls (by throwing or by answering `status`),
// then answers 200 with `body`.
class FlakyTransport final : public HttpTransport {
public:
    FlakyTransport(int failures, int status, std::string body)
        : failures_(failures), status_(status), body_(std::move(body)) {}

    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& headers) override {
        last_path = path;
        last_body = body;
        last_headers = headers;
        return next();
    }
    HttpResponse post_multipart(const std::string& path, const std::vector<MultipartField>& fields,
                                const std::map<std::string, std::string>& headers) override {
        last_path = path;
        last_fields = fields;
        last_headers = headers;
        return next();
    }

    int calls = 0;
    std::string last_path;
    std::string last_body;
    std::vector<MultipartField> last_fields;
    std::map<std::string, std::string> last_headers;

private:
    HttpResponse next() {
        ++calls;
        if (calls <= failures_) {
            if (status_ == 0) throw TransportError("connection refused", 1);
            return {status_, "busy"};
        }
        return {200, body_};
    }

    int failures_;
    int status_;
    std::string body_;
};

BackendConfig live_cfg(Role role, int retries) {
    BackendConfig cfg;
    cfg.role = role;
    cfg.endpoint = "http://127.0.0.1:9/v1";
    cfg.model_name = "test-model";
    cfg.max_retries = retries;
    cfg.backoff_initial = std::chrono::milliseconds(1);
    return cfg;
}

const std::string kChatOk = R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})";

// Starts an httplib server on a free local port for the lifetime of the object.
struct LocalServer {
    httplib::Server http;
    std::thread thread;
    int port = 0;

    void start() {
        port = http.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { http.listen_after_bind(); });
        http.wait_until_ready();
    }
    ~LocalServer() {
        http.stop();
        if (thread.joinable()) thread.join();
    }
    std::string url(const std::string& base = "") const { return "http://127.0.0.1:" + std::to_string(port) + base; }
};

const char* env(const char* name) {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
}

}  // namespace

TEST_CASE("fixture backend returns the registered response verbatim") {
    FixtureLlm llm;
    const auto req = chat("sys", "Replace 'Morgan' with 'Megan'");
    llm.add(req, "  verbatim answer \n");
    CHECK(llm.complete(req) == "  verbatim answer \n");
    CHECK(llm.call_count() == 1);
    CHECK_THROWS_AS(llm.complete(chat("sys", "unregistered")), BackendError);
}

TEST_CASE("fixture backend serves response lists in order then repeats the last") {
    FixtureLlm llm;
    llm.load(nlohmann::json::parse(R"([{"system":"s","user":"u","responses":["a","b"]}])"));
    const auto req = chat("s", "u");
    CHECK(llm.complete(req) == "a");
    CHECK(llm.complete(req) == "b");
    CHECK(llm.complete(req) == "b");
}

TEST_CASE("empty user content is rejected before reaching a backend") {
    FixtureLlm llm;
    CHECK_THROWS_AS(llm.complete(chat("s", "")), InvalidArgument);
    CHECK(llm.call_count() == 0);
}

TEST_CASE("identity, corrupt and passthrough mocks") {
    IdentityAsr id;
    CHECK(id.transcribe(AudioRef::text("call megan")) == "call megan");
    CHECK_THROWS_AS(id.transcribe(AudioRef::file("/nonexistent/clip.wav")), InputError);

    CorruptAsr corrupt(std::map<std::string, std::string>{{"megan", "morgan"}});
    CHECK(corrupt.transcribe(AudioRef::text("call megan")) == "call morgan");
    CHECK(corrupt.transcribe(AudioRef::text("Call Megan, please")) == "Call morgan, please");
    CHECK(corrupt.transcribe(AudioRef::text("call meganne")) == "call meganne");

    PassthroughTts tts;
    const auto a = tts.synthesize("no, I said Megan", std::nullopt);
    CHECK(a == AudioRef::text("no, I said Megan"));
    CHECK_THROWS_AS(tts.synthesize("", std::nullopt), InvalidArgument);
}

TEST_CASE("mock corruption draws are deterministic and rate-bounded") {
    CorruptAsr none(std::map<std::string, std::string>{{"a", "x"}}, 5, 0.0);
    CHECK(none.corrupt("a a a") == "a a a");
    CorruptAsr half(std::map<std::string, std::string>{{"a", "x"}}, 5, 0.5);
    std::string text;
    for (int i = 0; i < 400; ++i) text += "a ";
    const auto once = half.corrupt(text);
    CHECK(once == CorruptAsr(std::map<std::string, std::string>{{"a", "x"}}, 5, 0.5).corrupt(text));
    const auto xs = std::count(once.begin(), once.end(), 'x');
    CHECK(xs > 120);
    CHECK(xs < 280);
    CHECK_THROWS_AS(CorruptAsr(std::map<std::string, std::string>{}, 0, 1.5), InvalidArgument);
}

TEST_CASE("passthrough synthesis followed by identity recognition is byte-identical") {
    Gen g(51);
    PassthroughTts tts;
    IdentityAsr asr;
    for (int i = 0; i < 300; ++i) {
        auto s = g.messy_text();
        if (s.empty()) s = "x";
        CHECK(asr.transcribe(tts.synthesize(s, std::nullopt)) == s);
    }
}

TEST_CASE("mocks built from config are deterministic") {
    BackendConfig cfg;
    cfg.endpoint = "mock:rules";
    ChatRequest r = chat("s", "u");
    r.task = "judge";
    r.fields = {{"first", "Call Megan."}, {"second", "call megan"}};
    const auto a = llm_complete(cfg, r);
    CHECK(a == llm_complete(cfg, r));
    CHECK(nlohmann::json::parse(a).at("equivalent") == true);

    BackendConfig asr;
    asr.role = Role::asr;
    asr.endpoint = "mock:corrupt";
    asr.options = {{"table", {{"megan", "morgan"}}}, {"seed", 3}, {"rate", 1.0}};
    CHECK(transcribe(asr, AudioRef::text("call megan")) == "call morgan");

    BackendConfig tts;
    tts.role = Role::tts;
    tts.endpoint = "mock:passthrough";
    CHECK(synthesize(tts, "hi") == AudioRef::text("hi"));
}

TEST_CASE("backend config validation and secret-free serialization") {
    BackendConfig cfg = live_cfg(Role::llm, 2);
    cfg.auth_env_var = "IASR_TEST_TOKEN";
    CHECK_NOTHROW(cfg.validate());
    const auto j = to_json(cfg);
    CHECK(j.at("auth_env_var") == "IASR_TEST_TOKEN");
    ::setenv("IASR_TEST_TOKEN", "sk-very-secret", 1);
    CHECK(to_json(cfg).dump().find("sk-very-secret") == std::string::npos);

    auto bad = cfg;
    bad.max_retries = -1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.endpoint = "ftp://x";
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.endpoint = "mock:rules";
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);  // mocks take no auth
    CHECK(backend_config_from_json(j, Role::llm).endpoint == cfg.endpoint);
}

TEST_CASE("retry bound: n transport failures within budget cost n+1 attempts") {
    for (int retries = 0; retries <= 3; ++retries) {
        for (int n = 0; n <= retries; ++n) {
            auto transport = std::make_unique<FlakyTransport>(n, 0, kChatOk);
            auto* t = transport.get();
            HttpLlm llm(live_cfg(Role::llm, retries), std::move(transport));
            CHECK(llm.complete(chat("s", "u")) == "hello");
            CHECK(t->calls == n + 1);
            CHECK(llm.attempt_count() == static_cast<std::size_t>(n + 1));
        }
    }
}

TEST_CASE("retry bound: 5xx and 429 are retried like transport failures") {
    for (int status : {429, 500, 503}) {
        auto transport = std::make_unique<FlakyTransport>(2, status, kChatOk);
        auto* t = transport.get();
        HttpLlm llm(live_cfg(Role::llm, 2), std::move(transport));
        CHECK(llm.complete(chat("s", "u")) == "hello");
        CHECK(t->calls == 3);
    }
}

TEST_CASE("exhausted retries surface the attempt count") {
    HttpLlm transport_fail(live_cfg(Role::llm, 2), std::make_unique<FlakyTransport>(10, 0, kChatOk));
    try {
        transport_fail.complete(chat("s", "u"));
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts() == 3);
    }

    HttpLlm server_fail(live_cfg(Role::llm, 1), std::make_unique<FlakyTransport>(10, 502, kChatOk));
    try {
        server_fail.complete(chat("s", "u"));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.attempts() == 2);
        CHECK(e.status() == 502);
    }

    auto transport = std::make_unique<FlakyTransport>(10, 400, kChatOk);
    auto* t = transport.get();
    HttpLlm client_fail(live_cfg(Role::llm, 3), std::move(transport));
    CHECK_THROWS_AS(client_fail.complete(chat("s", "u")), BackendError);
    CHECK(t->calls == 1);  // 4xx is not retried
}

TEST_CASE("malformed chat completion bodies are backend errors") {
    for (const char* body : {"not json", "{}", R"({"choices":[]})", R"({"choices":[{"message":{"content":3}}]})"}) {
        HttpLlm llm(live_cfg(Role::llm, 0), std::make_unique<FlakyTransport>(0, 0, body));
        CHECK_THROWS_AS(llm.complete(chat("s", "u")), BackendError);
    }
}

TEST_CASE("chat completion wire format") {
    auto cfg = live_cfg(Role::llm, 0);
    cfg.temperature = 0.0;
    cfg.auth_env_var = "IASR_TEST_WIRE_TOKEN";
    ::setenv("IASR_TEST_WIRE_TOKEN", "tok-123", 1);
    auto transport = std::make_unique<FlakyTransport>(0, 0, kChatOk);
    auto* t = transport.get();
    HttpLlm llm(cfg, std::move(transport));
    ChatRequest r = chat("be brief", "hello there");
    r.seed = 42;
    llm.complete(r);
    CHECK(t->last_path == "/v1/chat/completions");
    CHECK(t->last_headers.at("Authorization") == "Bearer tok-123");
    const auto body = nlohmann::json::parse(t->last_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("seed") == 42);
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("messages")[0] == nlohmann::json{{"role", "system"}, {"content", "be brief"}});
    CHECK(body.at("messages")[1] == nlohmann::json{{"role", "user"}, {"content", "hello there"}});
    ::unsetenv("IASR_TEST_WIRE_TOKEN");
}

TEST_CASE("HTTP clients against an in-process server") {
    testsupport::TempDir tmp;
    LocalServer server;
    std::string seen_auth;
    server.http.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        const std::string echo = body.at("messages").back().at("content");
        res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", "echo: " + echo}}}}}}}.dump(),
                        "application/json");
    });
    server.http.Post("/v1/transcribe", [](const httplib::Request& req, httplib::Response& res) {
        const auto file = req.get_file_value("file");
        res.set_content(nlohmann::json{{"text", "heard " + std::to_string(file.content.size()) + " bytes"}}.dump(),
                        "application/json");
    });
    server.http.Post("/v1/synthesize", [](const httplib::Request& req, httplib::Response& res) {
        res.set_content("RIFF" + req.get_file_value("text").content, "audio/wav");
    });
    server.start();

    BackendConfig llm_cfg = live_cfg(Role::llm, 0);
    llm_cfg.endpoint = server.url("/v1");
    HttpLlm llm(llm_cfg);
    CHECK(llm.complete(chat("s", "ping")) == "echo: ping");
    CHECK(seen_auth.empty());

    BackendConfig asr_cfg = live_cfg(Role::asr, 0);
    asr_cfg.endpoint = server.url("/v1");
    HttpAsr asr(asr_cfg);
    const auto clip = tmp / "clip.wav";
    std::ofstream(clip, std::ios::binary) << std::string(1234, 'z');
    CHECK(asr.transcribe(AudioRef::file(clip.string())) == "heard 1234 bytes");
    CHECK_THROWS_AS(asr.transcribe(AudioRef::text("no audio")), InputError);
    CHECK_THROWS_AS(asr.transcribe(AudioRef::file((tmp / "missing.wav").string())), InputError);

    BackendConfig tts_cfg = live_cfg(Role::tts, 0);
    tts_cfg.endpoint = server.url("/v1");
    tts_cfg.options = {{"spool_dir", (tmp / "tts").string()}};
    HttpTts tts(tts_cfg);
    const auto audio = tts.synthesize("say this", std::nullopt);
    CHECK(audio.kind == AudioRef::Kind::file);
    CHECK(std::filesystem::file_size(audio.payload) == 12);

    // nothing listens on the closed port: transport failure after retries
    BackendConfig dead = live_cfg(Role::llm, 1);
    dead.endpoint = "http://127.0.0.1:1/v1";
    dead.timeout = std::chrono::milliseconds(500);
    HttpLlm unreachable(dead);
    CHECK_THROWS_AS(unreachable.complete(chat("s", "u")), TransportError);
}

TEST_CASE("in-flight cap bounds concurrent calls") {
    std::atomic<int> now{0}, peak{0};
    auto llm = std::make_shared<FunctionLlm>(
        [&](const ChatRequest&) {
            const int n = ++now;
            int p = peak.load();
            while (n > p && !peak.compare_exchange_weak(p, n)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            --now;
            return std::string("ok");
        },
        2);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { llm->complete(chat("s", "u")); });
    for (auto& t : threads) t.join();
    CHECK(peak.load() <= 2);
    CHECK(llm->call_count() == 8);
}

TEST_CASE("live LLM smoke call") {
    const char* endpoint = env("IASR_LIVE_LLM_ENDPOINT");
    if (!endpoint) {
        MESSAGE("IASR_LIVE_LLM_ENDPOINT not set; live LLM smoke test skipped");
        return;
    }
    BackendConfig cfg;
    cfg.endpoint = endpoint;
    cfg.model_name = env("IASR_LIVE_LLM_MODEL") ? env("IASR_LIVE_LLM_MODEL") : "";
    if (env("IASR_LIVE_LLM_AUTH_ENV")) cfg.auth_env_var = env("IASR_LIVE_LLM_AUTH_ENV");
    auto llm = make_llm(cfg);
    const auto out = llm->complete(chat("Answer with a JSON object.", R"(Reply with {"ok": true}.)"));
    CHECK_FALSE(out.empty());
}

TEST_CASE("live ASR and TTS smoke calls") {
    if (const char* endpoint = env("IASR_LIVE_ASR_ENDPOINT"); endpoint && env("IASR_LIVE_ASR_CLIP")) {
        BackendConfig cfg;
        cfg.role = Role::asr;
        cfg.endpoint = endpoint;
        cfg.model_name = env("IASR_LIVE_ASR_MODEL") ? env("IASR_LIVE_ASR_MODEL") : "";
        CHECK_FALSE(make_asr(cfg)->transcribe(AudioRef::file(env("IASR_LIVE_ASR_CLIP"))).empty());
    } else {
        MESSAGE("IASR_LIVE_ASR_ENDPOINT/IASR_LIVE_ASR_CLIP not set; live ASR smoke test skipped");
    }
    if (const char* endpoint = env("IASR_LIVE_TTS_ENDPOINT")) {
        BackendConfig cfg;
        cfg.role = Role::tts;
        cfg.endpoint = endpoint;
        cfg.model_name = env("IASR_LIVE_TTS_MODEL") ? env("IASR_LIVE_TTS_MODEL") : "";
        const auto audio = make_tts(cfg)->synthesize("call megan", std::nullopt);
        REQUIRE(audio.kind == AudioRef::Kind::file);
        CHECK(std::filesystem::file_size(audio.payload) > 0);
    } else {
        MESSAGE("IASR_LIVE_TTS_ENDPOINT not set; live TTS smoke test skipped");
    }
}
