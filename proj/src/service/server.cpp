#include "httplib.h"

#include <fstream>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "iasr/service.hpp"

namespace iasr::service {

struct Server::Impl {
    httplib::Server http;
    std::thread thread;
    std::shared_ptr<const Runtime> runtime;
    ServiceSettings settings;
    std::filesystem::path spool_dir;
    std::atomic<std::uint64_t> upload_counter{0};
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ServiceError& err) { send_json(res, err.status(), err.body()); }

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ServiceError& e) {
        send_error(res, e);
    } catch (const InvalidArgument& e) {
        send_error(res, ServiceError(400, "bad_request", e.what()));
    } catch (const std::exception& e) {
        spdlog::error("request failed: {}", e.what());
        send_error(res, ServiceError(500, "internal", e.what()));
    }
}

nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw ServiceError(400, "bad_json", "request body is not valid JSON");
    return j;
}

}  // namespace

Server::Server(std::shared_ptr<const Runtime> runtime, ServiceSettings settings) : impl_(std::make_unique<Impl>()) {
    if (!runtime) throw InvalidArgument("server needs a runtime");
    impl_->runtime = runtime;
    impl_->settings = std::move(settings);

    std::filesystem::path data_dir;
    std::optional<std::filesystem::path> event_log;
    if (impl_->settings.data_dir) {
        data_dir = *impl_->settings.data_dir;
        std::filesystem::create_directories(data_dir);
        event_log = data_dir / "events.jsonl";
    } else {
        data_dir = std::filesystem::temp_directory_path() / ("iasr-" + std::to_string(::getpid()) + "-" + random_id());
        std::filesystem::create_directories(data_dir);
    }
    impl_->spool_dir = data_dir / "spool";
    sessions_ = std::make_unique<SessionStore>(runtime->pipeline(), event_log);
    jobs_ = std::make_unique<JobManager>(runtime, data_dir / "jobs", impl_->settings.job_workers);

    auto& http = impl_->http;
    // multipart framing adds a little on top of the audio itself
    http.set_payload_max_length(impl_->settings.max_upload_bytes + 64 * 1024);

    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto code = res.status == 404 ? "not_found" : res.status == 413 ? "payload_too_large" : "http_error";
        send_error(res, ServiceError(res.status, code, httplib::status_message(res.status)));
    });

    http.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            const auto& cfg = impl_->runtime->config();
            send_json(res, 200,
                      {{"status", "ok"},
                       {"sessions", sessions_->size()},
                       {"backends", {{"llm", cfg.llm.endpoint}, {"asr", cfg.asr.endpoint}, {"tts", cfg.tts.endpoint}}}});
        });
    });

    http.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 201, sessions_->create().to_json()); });
    });

    http.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, sessions_->get(req.matches[1]).to_json()); });
    });

    http.Post(R"(/sessions/([^/]+)/confirm)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, sessions_->confirm(req.matches[1]).to_json()); });
    });

    http.Post(R"(/sessions/([^/]+)/turns)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            gateway::AudioRef input;
            if (req.is_multipart_form_data()) {
                const char* field = req.has_file("audio") ? "audio" : req.has_file("file") ? "file" : nullptr;
                if (!field) throw ServiceError(400, "bad_request", "multipart upload needs an 'audio' file field");
                const auto file = req.get_file_value(field);
                if (file.content.empty()) throw ServiceError(400, "bad_request", "audio upload is empty");
                if (file.content.size() > impl_->settings.max_upload_bytes) {
                    throw ServiceError(413, "payload_too_large",
                                       "audio exceeds " + std::to_string(impl_->settings.max_upload_bytes) + " bytes");
                }
                sessions_->get(id);  // 404 before touching the spool
                const auto dir = impl_->spool_dir / id;
                std::filesystem::create_directories(dir);
                const auto path = dir / (std::to_string(impl_->upload_counter.fetch_add(1)) + ".wav");
                std::ofstream(path, std::ios::binary) << file.content;
                input = gateway::AudioRef::file(path.string());
            } else {
                const auto body = parse_body(req);
                if (!body.contains("text") || !body.at("text").is_string() ||
                    body.at("text").get<std::string>().empty()) {
                    throw ServiceError(400, "bad_request", "body must be {\"text\": \"...\"} or a multipart upload");
                }
                input = gateway::AudioRef::text(body.at("text").get<std::string>());
            }
            send_json(res, 200, sessions_->submit(id, input).to_json());
        });
    });

    http.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = parse_body(req);
            if (!body.contains("kind") || !body.at("kind").is_string()) {
                throw ServiceError(400, "bad_params", "body must carry a string 'kind'");
            }
            const auto params = body.value("params", nlohmann::json::object());
            send_json(res, 202, jobs_->start(body.at("kind").get<std::string>(), params).to_json());
        });
    });

    http.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, jobs_->get(req.matches[1]).to_json()); });
    });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->http.bind_to_any_port(host);
        if (bound <= 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!impl_->http.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Server::run() { impl_->http.listen_after_bind(); }

int Server::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    impl_->thread = std::thread([this] { run(); });
    impl_->http.wait_until_ready();
    return bound;
}

void Server::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace iasr::service
